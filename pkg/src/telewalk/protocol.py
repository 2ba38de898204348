"""Newline-delimited JSON wire protocol.

Every message is one JSON object per line, keys in fixed construction order
and floats serialized by Python's shortest round-trip repr, so a replayed
session reproduces byte-identical broadcast lines.
"""
from __future__ import annotations

import json
import math


class ProtocolError(ValueError):
    """Malformed or out-of-contract client message."""


def encode(msg: dict) -> str:
    """One compact JSON line, newline terminated."""
    return json.dumps(msg, separators=(",", ":"), allow_nan=False) + "\n"


def decode(line: str) -> dict:
    try:
        msg = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"invalid JSON: {exc}") from exc
    if not isinstance(msg, dict) or "type" not in msg:
        raise ProtocolError("message must be an object with a 'type' field")
    return msg


def hello_message(role: str, decimate: int = 1) -> dict:
    return {"type": "hello", "role": role, "decimate": decimate}


def pose_message(seq: int, t: float, x: float, y: float, heading: float) -> dict:
    return {"type": "pose", "seq": seq, "t": t, "x": x, "y": y, "heading": heading}


def parse_hello(msg: dict) -> tuple[str, int]:
    if msg.get("type") != "hello":
        raise ProtocolError("expected hello message")
    role = msg.get("role")
    if role not in ("user", "viewer"):
        raise ProtocolError(f"unknown role {role!r}")
    decimate = int(msg.get("decimate", 1))
    if decimate < 1:
        raise ProtocolError("decimate must be >= 1")
    return role, decimate


def parse_pose(msg: dict) -> tuple[int, float, float, float, float]:
    if msg.get("type") != "pose":
        raise ProtocolError("expected pose message")
    try:
        seq = int(msg["seq"])
        t = float(msg["t"])
        x = float(msg["x"])
        y = float(msg["y"])
        heading = float(msg["heading"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"bad pose fields: {exc}") from exc
    if not all(map(math.isfinite, (t, x, y, heading))):
        raise ProtocolError("pose fields must be finite")
    return seq, t, x, y, heading


def state_message(t: float, user, avatar, avatar_vel, displayed_heading: float,
                  peds: list[dict], force, guidance_offset: float) -> dict:
    """Per-tick broadcast state; field order is part of the wire contract."""
    return {
        "type": "state",
        "t": t,
        "user": {"x": user.x, "y": user.y, "heading": user.heading},
        "avatar": {"x": avatar.x, "y": avatar.y, "heading": avatar.heading,
                   "vx": avatar_vel[0], "vy": avatar_vel[1]},
        "displayed_heading": displayed_heading,
        "peds": peds,
        "force": {"fx": force.fx, "fy": force.fy, "contact": force.in_contact,
                  "frame": force.frame},
        "guidance": {"offset": guidance_offset},
    }


def event_message(t: float, kind: str, **fields) -> dict:
    msg = {"type": "event", "t": t, "kind": kind}
    msg.update(fields)
    return msg


def config_message(scenario_dict: dict, room: dict, compression: dict,
                   correspondence: dict | None) -> dict:
    return {
        "type": "config",
        "scenario": scenario_dict,
        "room": room,
        "compression": compression,
        "correspondence": correspondence,
    }


def correspondence_payload(corr) -> dict:
    """Both paths as point arrays plus the objective, for debugging and UIs."""
    return {
        "target_points": [[float(x), float(y)] for x, y in corr.target_points],
        "user_points": [[float(x), float(y)] for x, y in corr.user_points],
        "objective": corr.objective_value,
    }
