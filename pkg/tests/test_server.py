import asyncio
import json
import socket
from pathlib import Path

import numpy as np
import pytest

from telewalk import protocol
from telewalk.compression import RoomSpec
from telewalk.geometry import Pose
from telewalk.scenario import Gate, Scenario
from telewalk.server import LiveServer
from telewalk.service import SessionConfig


def free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def make_setup():
    scenario = Scenario(walls=np.zeros((0, 4)),
                        gates=[Gate(0, 50, -0.5, 50, 0.5)],
                        spawn_surface=[[100, 100], [101, 100], [101, 101], [100, 101]],
                        goal_surface=[[103, 100], [104, 100], [104, 101], [103, 101]],
                        spawn_count=0, name="server-test")
    config = SessionConfig(room=RoomSpec(4, 4, 0.3), avatar_start=Pose(0, 0, 0),
                           user_start=Pose(2, 2, 0), goals=[(6.0, 0.0)], seed=0)
    return scenario, config


async def _drive_session():
    scenario, config = make_setup()
    port = free_port()
    server = LiveServer(scenario, config, port=port)
    await server.start()
    ticker = asyncio.create_task(server._tick_loop())
    try:
        reader, writer = await asyncio.open_connection("127.0.0.1", port)
        writer.write(protocol.encode(protocol.hello_message("user")).encode())
        await writer.drain()
        config_line = await asyncio.wait_for(reader.readline(), timeout=5)
        config_msg = json.loads(config_line)
        assert config_msg["type"] == "config"
        assert config_msg["correspondence"]["objective"] >= 0.0
        assert config_msg["scenario"]["name"] == "server-test"

        for k in range(1, 6):
            writer.write(protocol.encode(
                protocol.pose_message(k, 0.02 * k, 2.0 + 0.01 * k, 2.0, 0.0)).encode())
        await writer.drain()

        states = []
        deadline = asyncio.get_running_loop().time() + 5.0
        while len(states) < 5 and asyncio.get_running_loop().time() < deadline:
            line = await asyncio.wait_for(reader.readline(), timeout=5)
            msg = json.loads(line)
            if msg["type"] == "state":
                states.append(msg)
        assert len(states) >= 5
        assert states[-1]["force"]["frame"] == "user"
        assert states[-1]["user"]["x"] > 2.0  # poses were ingested
        writer.close()
    finally:
        server.stop()
        ticker.cancel()
        await server.shutdown()
    return True


def test_tcp_session_smoke():
    assert asyncio.run(_drive_session())


async def _viewer_decimation():
    scenario, config = make_setup()
    port = free_port()
    server = LiveServer(scenario, config, port=port)
    await server.start()
    ticker = asyncio.create_task(server._tick_loop())
    try:
        reader, writer = await asyncio.open_connection("127.0.0.1", port)
        writer.write(protocol.encode(protocol.hello_message("viewer", decimate=3)).encode())
        await writer.drain()
        await asyncio.wait_for(reader.readline(), timeout=5)  # config
        got = []
        for _ in range(3):
            line = await asyncio.wait_for(reader.readline(), timeout=5)
            msg = json.loads(line)
            if msg["type"] == "state":
                got.append(msg["t"])
        # Decimated ticks arrive 3 * dt apart.
        gaps = np.diff(got)
        assert np.allclose(gaps, 0.06, atol=1e-9)
        writer.close()
    finally:
        server.stop()
        ticker.cancel()
        await server.shutdown()
    return True


def test_viewer_decimation():
    assert asyncio.run(_viewer_decimation())


async def _ws_bridge_session():
    import aiohttp

    scenario, config = make_setup()
    port = free_port()
    static = Path(__file__).resolve().parent.parent / "frontend"
    server = LiveServer(scenario, config, port=port,
                        static_dir=static if static.is_dir() else None)
    await server.start()
    ticker = asyncio.create_task(server._tick_loop())
    try:
        async with aiohttp.ClientSession() as http:
            async with http.ws_connect(f"ws://127.0.0.1:{port + 1}/ws") as ws:
                await ws.send_str(protocol.encode(
                    protocol.hello_message("user")).rstrip("\n"))
                config_msg = json.loads(await ws.receive_str())
                assert config_msg["type"] == "config"
                for k in range(1, 4):
                    await ws.send_str(protocol.encode(protocol.pose_message(
                        k, 0.02 * k, 2.0, 2.0 + 0.01 * k, 0.5)).rstrip("\n"))
                states = 0
                while states < 3:
                    msg = json.loads(await asyncio.wait_for(ws.receive_str(),
                                                            timeout=5))
                    if msg["type"] == "state":
                        states += 1
                assert msg["user"]["y"] > 2.0
            if static.is_dir():
                async with http.get(f"http://127.0.0.1:{port + 1}/") as resp:
                    assert resp.status == 200
                    body = await resp.text()
                    assert "<canvas" in body
    finally:
        server.stop()
        ticker.cancel()
        await server.shutdown()
    return True


def test_websocket_bridge_session():
    assert asyncio.run(_ws_bridge_session())


async def _bad_hello_disconnects():
    scenario, config = make_setup()
    port = free_port()
    server = LiveServer(scenario, config, port=port)
    await server.start()
    try:
        reader, writer = await asyncio.open_connection("127.0.0.1", port)
        writer.write(b'{"type":"hello","role":"intruder"}\n')
        await writer.drain()
        line = await asyncio.wait_for(reader.readline(), timeout=5)
        assert line == b""  # connection closed without config
        writer.close()
    finally:
        await server.shutdown()
    return True


def test_bad_hello_disconnects():
    assert asyncio.run(_bad_hello_disconnects())
