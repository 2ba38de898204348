import json

import pytest

from telewalk import protocol
from telewalk.geometry import Pose
from telewalk.haptics import ForceSample


def test_encode_decode_round_trip():
    msg = protocol.pose_message(3, 0.06, 1.5, 2.5, -0.4)
    line = protocol.encode(msg)
    assert line.endswith("\n")
    assert protocol.decode(line) == msg


def test_decode_rejects_garbage():
    with pytest.raises(protocol.ProtocolError):
        protocol.decode("not json\n")
    with pytest.raises(protocol.ProtocolError):
        protocol.decode("[1,2,3]\n")


def test_parse_hello():
    role, decimate = protocol.parse_hello({"type": "hello", "role": "viewer",
                                           "decimate": 4})
    assert role == "viewer" and decimate == 4
    with pytest.raises(protocol.ProtocolError):
        protocol.parse_hello({"type": "hello", "role": "admin"})
    with pytest.raises(protocol.ProtocolError):
        protocol.parse_hello({"type": "hello", "role": "user", "decimate": 0})


def test_parse_pose_validation():
    seq, t, x, y, heading = protocol.parse_pose(
        protocol.pose_message(1, 0.02, 1.0, 2.0, 0.5))
    assert (seq, t, x, y, heading) == (1, 0.02, 1.0, 2.0, 0.5)
    with pytest.raises(protocol.ProtocolError):
        protocol.parse_pose({"type": "pose", "seq": 1, "t": float("nan"),
                             "x": 0, "y": 0, "heading": 0})
    with pytest.raises(protocol.ProtocolError):
        protocol.parse_pose({"type": "pose", "seq": 1})


def test_state_message_field_order_is_stable():
    state = protocol.state_message(
        t=0.02, user=Pose(1, 2, 0.1), avatar=Pose(3, 4, 0.2),
        avatar_vel=(0.5, -0.5), displayed_heading=0.15, peds=[],
        force=ForceSample(0.0, 0.0, False, "user"), guidance_offset=0.01)
    line = protocol.encode(state)
    keys = list(json.loads(line).keys())
    assert keys == ["type", "t", "user", "avatar", "displayed_heading", "peds",
                    "force", "guidance"]


def test_encode_rejects_non_finite():
    with pytest.raises(ValueError):
        protocol.encode({"type": "state", "value": float("inf")})
