"""Contact force on the avatar and its transform into the user frame.

The avatar feels the interaction resultant (psychological plus contact terms
from pedestrians and walls; its own driving intent is excluded) gated on
actual contact: while nothing overlaps the avatar disc the delivered force
is exactly zero. Frame transfer preserves the force magnitude and its angle
relative to the local path tangent.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .crowd import World


@dataclass(frozen=True, slots=True)
class ForceSample:
    """Planar force (N) with contact flag and frame tag."""

    fx: float
    fy: float
    in_contact: bool
    frame: str  # "target" | "user"
    t: float = 0.0

    def __post_init__(self):
        if self.frame not in ("target", "user"):
            raise ValueError(f"unknown frame {self.frame!r}")
        if not (math.isfinite(self.fx) and math.isfinite(self.fy)):
            raise ValueError("force components must be finite")
        if not self.in_contact and (self.fx != 0.0 or self.fy != 0.0):
            raise ValueError("contact-free samples must carry zero force")

    @property
    def magnitude(self) -> float:
        return math.hypot(self.fx, self.fy)


def avatar_force(world: World) -> ForceSample:
    """Resultant interaction force on the avatar in the target frame.

    Zero (with in_contact False) unless a pedestrian or wall overlaps the
    avatar disc; when in contact, the full interaction resultant including
    psychological terms of everything within the interaction cutoff.
    """
    if world.avatar_pos is None:
        raise ValueError("no avatar registered in the world")
    active = np.flatnonzero(world.phase < World.PHASE_EXITED)
    pts = np.vstack((world.pos[active], world.avatar_pos))
    vels = np.vstack((world.vel[active], world.avatar_vel))
    radii = np.append(world.radius[active], world.avatar_radius)
    force, contact, _ = world.interaction_forces(pts, vels, radii)
    if bool(contact[-1]):
        return ForceSample(float(force[-1, 0]), float(force[-1, 1]),
                           in_contact=True, frame="target", t=world.t)
    return ForceSample(0.0, 0.0, in_contact=False, frame="target", t=world.t)


def transform_force(f: ForceSample, target_tangent: float,
                    user_tangent: float) -> ForceSample:
    """Re-express a target-frame force in the user frame.

    The output has the same magnitude and the same angle relative to the
    user-path tangent as the input has to the target-path tangent.
    """
    if f.frame != "target":
        raise ValueError("transform_force expects a target-frame sample")
    magnitude = math.hypot(f.fx, f.fy)
    if magnitude == 0.0:
        return ForceSample(0.0, 0.0, in_contact=f.in_contact, frame="user", t=f.t)
    relative = math.atan2(f.fy, f.fx) - target_tangent
    angle = user_tangent + relative
    return ForceSample(magnitude * math.cos(angle), magnitude * math.sin(angle),
                       in_contact=f.in_contact, frame="user", t=f.t)
