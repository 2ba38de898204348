"""Scenario geometry and parameter sets for the crowd simulation.

A scenario is a planar hall: wall segments, gate segments in the boundary,
a spawn polygon where pedestrians appear, and a goal polygon beyond the
gates where they leave the simulation. Everything is JSON round-trippable
so scenario files are the single source of truth for a run.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class ScenarioError(ValueError):
    """Malformed scenario or parameter data."""


@dataclass(frozen=True)
class GateChoiceParams:
    """Softmax gate-allocation parameters: cost sensitivity and queue weight.

    The default sensitivity is high enough that the closest gate takes a
    robust plurality in the four-gate hall, where free-walk costs between
    neighboring gates differ by well under a second.
    """

    lam: float = 2.0    # 1/s
    gamma: float = 1.0  # dimensionless

    def __post_init__(self):
        if self.lam < 0 or self.gamma < 0:
            raise ScenarioError("gate-choice parameters must be non-negative")


@dataclass(frozen=True)
class SocialForceParams:
    """Interaction constants; defaults are the standard escape-panic set."""

    repulsion_strength: float = 2000.0   # A, N
    repulsion_range: float = 0.08        # B, m
    body_stiffness: float = 1.2e5        # k, kg/s^2
    sliding_friction: float = 2.4e5      # kappa, kg/(m s)
    mass: float = 80.0                   # kg
    relaxation_time: float = 0.5         # tau, s
    desired_speed_range: tuple[float, float] = (1.0, 1.4)  # m/s
    radius_range: tuple[float, float] = (0.25, 0.35)       # m
    force_cutoff: float = 0.1            # N, defines the interaction radius
    max_speed_factor: float = 1.3        # hard cap at factor * desired speed

    def interaction_cutoff(self) -> float:
        """Distance beyond which interaction forces are treated as zero."""
        r_max = 2.0 * self.radius_range[1]
        if self.repulsion_strength > self.force_cutoff:
            return r_max + self.repulsion_range * math.log(
                self.repulsion_strength / self.force_cutoff)
        return r_max


@dataclass(frozen=True)
class Gate:
    """A gate segment in the hall boundary."""

    gate_id: int
    x1: float
    y1: float
    x2: float
    y2: float

    @property
    def center(self) -> np.ndarray:
        return np.array([0.5 * (self.x1 + self.x2), 0.5 * (self.y1 + self.y2)])

    @property
    def half_length(self) -> float:
        return 0.5 * math.hypot(self.x2 - self.x1, self.y2 - self.y1)


def point_in_polygon(point, polygon: np.ndarray) -> bool:
    """Ray-casting point-in-polygon test (boundary counts as inside)."""
    x, y = float(point[0]), float(point[1])
    inside = False
    n = polygon.shape[0]
    for i in range(n):
        x1, y1 = polygon[i]
        x2, y2 = polygon[(i + 1) % n]
        if (y1 > y) != (y2 > y):
            t = (y - y1) / (y2 - y1)
            xi = x1 + t * (x2 - x1)
            if x < xi:
                inside = not inside
            elif x == xi:
                return True
    return inside


def points_in_polygon(pts: np.ndarray, polygon: np.ndarray) -> np.ndarray:
    """Vectorized ray-casting test for an (n, 2) array of points."""
    x, y = pts[:, 0], pts[:, 1]
    inside = np.zeros(pts.shape[0], dtype=bool)
    n = polygon.shape[0]
    for i in range(n):
        x1, y1 = polygon[i]
        x2, y2 = polygon[(i + 1) % n]
        crosses = (y1 > y) != (y2 > y)
        if y2 != y1:
            xi = x1 + (y - y1) / (y2 - y1) * (x2 - x1)
            inside ^= crosses & (x < xi)
    return inside


def _polygon_area(polygon: np.ndarray) -> float:
    x, y = polygon[:, 0], polygon[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


@dataclass
class Scenario:
    """Hall geometry plus spawn/goal surfaces and simulation parameters."""

    walls: np.ndarray                 # (W, 4) segments x1, y1, x2, y2
    gates: list[Gate]
    spawn_surface: np.ndarray         # (P, 2) polygon
    goal_surface: np.ndarray          # (P, 2) polygon
    spawn_count: int = 150
    spawn_rate: float = 8.0           # pedestrians per second
    rng_seed: int = 0
    dt: float = 0.02
    time_cap: float = 600.0
    force_params: SocialForceParams = field(default_factory=SocialForceParams)
    gate_params: GateChoiceParams = field(default_factory=GateChoiceParams)
    name: str = "scenario"

    def __post_init__(self):
        self.walls = np.asarray(self.walls, dtype=float).reshape(-1, 4)
        self.spawn_surface = np.asarray(self.spawn_surface, dtype=float)
        self.goal_surface = np.asarray(self.goal_surface, dtype=float)
        if self.spawn_surface.shape[0] < 3 or self.goal_surface.shape[0] < 3:
            raise ScenarioError("spawn and goal surfaces need at least 3 vertices")
        if _polygon_area(self.spawn_surface) <= 0 or _polygon_area(self.goal_surface) <= 0:
            raise ScenarioError("spawn and goal surfaces must have positive area")
        for p in self.spawn_surface:
            if point_in_polygon(p, self.goal_surface):
                raise ScenarioError("spawn and goal surfaces must be disjoint")
        for p in self.goal_surface:
            if point_in_polygon(p, self.spawn_surface):
                raise ScenarioError("spawn and goal surfaces must be disjoint")
        if self.spawn_count < 0 or self.spawn_rate <= 0:
            raise ScenarioError("spawn_count must be >= 0 and spawn_rate positive")
        if not (0 < self.dt <= 0.1):
            raise ScenarioError("dt must be in (0, 0.1]")

    @property
    def n_gates(self) -> int:
        return len(self.gates)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "walls": self.walls.tolist(),
            "gates": [[g.gate_id, g.x1, g.y1, g.x2, g.y2] for g in self.gates],
            "spawn_surface": self.spawn_surface.tolist(),
            "goal_surface": self.goal_surface.tolist(),
            "spawn_count": self.spawn_count,
            "spawn_rate": self.spawn_rate,
            "rng_seed": self.rng_seed,
            "dt": self.dt,
            "time_cap": self.time_cap,
            "force_params": {
                "repulsion_strength": self.force_params.repulsion_strength,
                "repulsion_range": self.force_params.repulsion_range,
                "body_stiffness": self.force_params.body_stiffness,
                "sliding_friction": self.force_params.sliding_friction,
                "mass": self.force_params.mass,
                "relaxation_time": self.force_params.relaxation_time,
                "desired_speed_range": list(self.force_params.desired_speed_range),
                "radius_range": list(self.force_params.radius_range),
                "force_cutoff": self.force_params.force_cutoff,
                "max_speed_factor": self.force_params.max_speed_factor,
            },
            "gate_params": {"lam": self.gate_params.lam,
                            "gamma": self.gate_params.gamma},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        try:
            fp = data.get("force_params", {})
            if "desired_speed_range" in fp:
                fp = dict(fp, desired_speed_range=tuple(fp["desired_speed_range"]))
            if "radius_range" in fp:
                fp = dict(fp, radius_range=tuple(fp["radius_range"]))
            gp = data.get("gate_params", {})
            return cls(
                walls=data["walls"],
                gates=[Gate(int(g[0]), *map(float, g[1:5])) for g in data["gates"]],
                spawn_surface=data["spawn_surface"],
                goal_surface=data["goal_surface"],
                spawn_count=int(data.get("spawn_count", 150)),
                spawn_rate=float(data.get("spawn_rate", 8.0)),
                rng_seed=int(data.get("rng_seed", 0)),
                dt=float(data.get("dt", 0.02)),
                time_cap=float(data.get("time_cap", 600.0)),
                force_params=SocialForceParams(**fp),
                gate_params=GateChoiceParams(**gp),
                name=str(data.get("name", "scenario")),
            )
        except (KeyError, TypeError, IndexError) as exc:
            raise ScenarioError(f"malformed scenario: {exc}") from exc


def load_scenario(path: str | Path) -> Scenario:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc
    return Scenario.from_dict(data)


def save_scenario(scenario: Scenario, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenario.to_dict(), fh, indent=2)
        fh.write("\n")


def default_scenario(spawn_count: int = 150, seed: int = 0) -> Scenario:
    """Four-gate route-choice hall.

    A 20 x 12 m hall with the spawn strip on the left and four 1 m gates in
    the right wall at 3 m center spacing; the spawn strip sits low so every
    spawn point ranks the gates identically by distance. Pedestrians that
    pass a gate walk into the goal strip beyond and leave the simulation.
    """
    walls = [
        [0, 0, 20, 0],
        [0, 12, 20, 12],
        [0, 0, 0, 12],
        [20, 0, 20, 1],
        [20, 2, 20, 4],
        [20, 5, 20, 7],
        [20, 8, 20, 10],
        [20, 11, 20, 12],
    ]
    gates = [
        Gate(0, 20, 1, 20, 2),
        Gate(1, 20, 4, 20, 5),
        Gate(2, 20, 7, 20, 8),
        Gate(3, 20, 10, 20, 11),
    ]
    spawn = [[0.5, 0.5], [4.0, 0.5], [4.0, 2.5], [0.5, 2.5]]
    goal = [[20.5, 0.0], [23.0, 0.0], [23.0, 12.0], [20.5, 12.0]]
    return Scenario(walls=walls, gates=gates, spawn_surface=spawn,
                    goal_surface=goal, spawn_count=spawn_count, rng_seed=seed,
                    name="four-gate-hall")
