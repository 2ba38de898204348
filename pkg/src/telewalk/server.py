"""Live session server: NDJSON over TCP plus a WebSocket bridge for browsers.

The TCP endpoint speaks the newline-delimited JSON protocol directly. The
aiohttp endpoint (one port above) relays identical messages over a WebSocket
at ``/ws`` and serves the static browser client when one is built. A single
asyncio loop owns the session: reader tasks ingest poses, one timer task
ticks at the scenario rate and fans out state and event messages.
"""
from __future__ import annotations

import asyncio
import contextlib
import json
import logging
from pathlib import Path

from aiohttp import WSMsgType, web

from . import protocol
from .service import Session, SessionConfig, TrackerSample
from .geometry import Pose
from .scenario import Scenario

log = logging.getLogger("telewalk.server")


class _Client:
    def __init__(self, role: str, decimate: int, send):
        self.role = role
        self.decimate = decimate
        self.send = send  # async callable(str)
        self.sent_states = 0


class LiveServer:
    """One interactive session shared by a user client and any viewers."""

    def __init__(self, scenario: Scenario, config: SessionConfig,
                 port: int = 8750, host: str = "127.0.0.1",
                 static_dir: str | Path | None = None):
        self.scenario = scenario
        self.config = config
        self.port = port
        self.host = host
        self.static_dir = Path(static_dir) if static_dir else None
        self.session = Session(scenario, config)
        # Bootstrap pose so the crowd runs while no user is connected yet;
        # client sequence numbers start at 1.
        self.session.ingest(TrackerSample(seq=0, t=0.0, pose=config.user_start))
        self.clients: set[_Client] = set()
        self._event_cursor = len(self.session.events)
        self._stopping = asyncio.Event()
        self._tcp_server: asyncio.AbstractServer | None = None
        self._http_runner: web.AppRunner | None = None

    # -- shared message plumbing -----------------------------------------

    def _config_line(self) -> str:
        corr = protocol.correspondence_payload(self.session.corr)
        room = {"width": self.config.room.width, "height": self.config.room.height,
                "margin": self.config.room.margin}
        compression = {k: getattr(self.config.compression, k)
                       for k in self.config.compression.__dataclass_fields__}
        return protocol.encode(protocol.config_message(
            self.scenario.to_dict(), room, compression, corr))

    def _handle_client_message(self, msg: dict) -> None:
        if msg.get("type") == "pose":
            seq, t, x, y, heading = protocol.parse_pose(msg)
            self.session.ingest(TrackerSample(seq=seq, t=t,
                                              pose=Pose(x, y, heading)))

    async def _broadcast(self, line: str, states: bool) -> None:
        dead = []
        for client in self.clients:
            if states:
                client.sent_states += 1
                if (client.sent_states - 1) % client.decimate != 0:
                    continue
            try:
                await client.send(line)
            except (ConnectionError, RuntimeError):
                dead.append(client)
        for client in dead:
            self.clients.discard(client)

    async def _tick_loop(self) -> None:
        dt = self.scenario.dt
        loop = asyncio.get_running_loop()
        next_deadline = loop.time() + dt
        while not self._stopping.is_set():
            state = self.session.tick()
            line = protocol.encode(state)
            await self._broadcast(line, states=True)
            while self._event_cursor < len(self.session.events):
                event = self.session.events[self._event_cursor]
                await self._broadcast(protocol.encode(event), states=False)
                if event.get("kind") == "replan":
                    # Viewers need the fresh correspondence to draw the path.
                    await self._broadcast(self._config_line(), states=False)
                self._event_cursor += 1
            delay = next_deadline - loop.time()
            next_deadline += dt
            if delay > 0:
                with contextlib.suppress(asyncio.TimeoutError):
                    await asyncio.wait_for(self._stopping.wait(), timeout=delay)

    # -- TCP endpoint ------------------------------------------------------

    async def _handle_tcp(self, reader: asyncio.StreamReader,
                          writer: asyncio.StreamWriter) -> None:
        peer = writer.get_extra_info("peername")
        client = None
        try:
            hello_line = await reader.readline()
            if not hello_line:
                return
            role, decimate = protocol.parse_hello(
                protocol.decode(hello_line.decode("utf-8")))

            async def send(line: str) -> None:
                writer.write(line.encode("utf-8"))
                await writer.drain()

            client = _Client(role, decimate, send)
            await send(self._config_line())
            self.clients.add(client)
            log.info("client %s connected as %s", peer, role)
            while not reader.at_eof():
                line = await reader.readline()
                if not line:
                    break
                if role == "user":
                    self._handle_client_message(protocol.decode(line.decode("utf-8")))
        except (protocol.ProtocolError, UnicodeDecodeError) as exc:
            log.warning("client %s dropped: %s", peer, exc)
        finally:
            if client is not None:
                self.clients.discard(client)
            writer.close()
            with contextlib.suppress(ConnectionError):
                await writer.wait_closed()

    # -- WebSocket bridge ---------------------------------------------------

    async def _handle_ws(self, request: web.Request) -> web.WebSocketResponse:
        ws = web.WebSocketResponse(heartbeat=20)
        await ws.prepare(request)
        client = None
        try:
            hello_raw = await ws.receive_str()
            role, decimate = protocol.parse_hello(protocol.decode(hello_raw))

            async def send(line: str) -> None:
                await ws.send_str(line.rstrip("\n"))

            client = _Client(role, decimate, send)
            await send(self._config_line())
            self.clients.add(client)
            async for msg in ws:
                if msg.type == WSMsgType.TEXT and role == "user":
                    self._handle_client_message(protocol.decode(msg.data))
                elif msg.type in (WSMsgType.ERROR, WSMsgType.CLOSE):
                    break
        except (protocol.ProtocolError, TypeError, asyncio.CancelledError):
            pass
        finally:
            if client is not None:
                self.clients.discard(client)
        return ws

    async def _make_http_app(self) -> web.Application:
        app = web.Application()
        app.router.add_get("/ws", self._handle_ws)
        if self.static_dir and self.static_dir.is_dir():
            async def index(_request):
                return web.FileResponse(self.static_dir / "index.html")

            app.router.add_get("/", index)
            app.router.add_static("/", self.static_dir)
        return app

    # -- lifecycle ---------------------------------------------------------

    async def start(self) -> None:
        self._tcp_server = await asyncio.start_server(
            self._handle_tcp, self.host, self.port)
        self._http_runner = web.AppRunner(await self._make_http_app())
        await self._http_runner.setup()
        site = web.TCPSite(self._http_runner, self.host, self.port + 1)
        await site.start()
        log.info("ndjson on tcp://%s:%d, websocket on ws://%s:%d/ws",
                 self.host, self.port, self.host, self.port + 1)

    async def run(self) -> None:
        await self.start()
        ticker = asyncio.create_task(self._tick_loop())
        try:
            await self._stopping.wait()
        finally:
            ticker.cancel()
            with contextlib.suppress(asyncio.CancelledError):
                await ticker
            await self.shutdown()

    def stop(self) -> None:
        self._stopping.set()

    async def shutdown(self) -> None:
        if self._tcp_server is not None:
            self._tcp_server.close()
            await self._tcp_server.wait_closed()
        if self._http_runner is not None:
            await self._http_runner.cleanup()


def serve_forever(scenario: Scenario, config: SessionConfig, port: int,
                  host: str = "127.0.0.1",
                  static_dir: str | Path | None = None) -> None:
    """Blocking entry point used by the CLI."""
    server = LiveServer(scenario, config, port=port, host=host,
                        static_dir=static_dir)

    async def main() -> None:
        import signal

        loop = asyncio.get_running_loop()
        for sig in (signal.SIGINT, signal.SIGTERM):
            with contextlib.suppress(NotImplementedError):
                loop.add_signal_handler(sig, server.stop)
        await server.run()

    asyncio.run(main())
