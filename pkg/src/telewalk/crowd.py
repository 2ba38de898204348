"""Deterministic fixed-timestep social-force pedestrian simulation.

Pedestrians are driven toward their assigned gate by a relaxation force and
interact through exponential psychological repulsion plus contact forces
(body compression and sliding friction) with each other and with walls.
Interaction forces are treated as zero beyond a cutoff distance where the
psychological tail drops below ``force_cutoff``; the spatial hash and the
all-pairs reference path share that model, the same per-pair arithmetic, and
the same accumulation order, so their totals agree to machine precision.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .scenario import (
    GateChoiceParams,
    Scenario,
    SocialForceParams,
    points_in_polygon,
)

_COORD_OFFSET = 1 << 20  # cell coordinates packed into one int64 key


class SimulationError(RuntimeError):
    """Raised when the integration produces non-finite forces."""


@dataclass
class Pedestrian:
    """Simulated agent state; also used for avatar-shaped kinematic bodies."""

    pid: int
    position: np.ndarray
    velocity: np.ndarray
    radius: float = 0.3
    mass: float = 80.0
    desired_speed: float = 1.2
    relaxation_time: float = 0.5
    assigned_gate: int = -1
    state: str = "walking"

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        self.velocity = np.asarray(self.velocity, dtype=float)
        if not 0.2 <= self.radius <= 0.5:
            raise ValueError(f"radius {self.radius} outside [0.2, 0.5]")
        if self.mass <= 0 or self.relaxation_time <= 0:
            raise ValueError("mass and relaxation time must be positive")
        if not 0 < self.desired_speed <= 3:
            raise ValueError(f"desired speed {self.desired_speed} outside (0, 3]")


def driving_force(p: Pedestrian, goal_point) -> np.ndarray:
    """Relaxation toward the desired velocity aimed at goal_point."""
    if p.state != "walking":
        raise ValueError("driving force is defined for walking pedestrians")
    e = np.asarray(goal_point, dtype=float) - p.position
    dist = math.hypot(e[0], e[1])
    e = e / dist if dist > 1e-12 else np.zeros(2)
    return p.mass * (p.desired_speed * e - p.velocity) / p.relaxation_time


def _fallback_normal(first_id: int, second_id: int) -> np.ndarray:
    # Coincident centers: deterministic separation axis from id ordering.
    return np.array([1.0, 0.0]) if first_id < second_id else np.array([-1.0, 0.0])


def pair_force(a: Pedestrian, b: Pedestrian,
               params: SocialForceParams | None = None) -> np.ndarray:
    """Interaction force exerted on a by b.

    Exponential psychological repulsion always; when the distance drops below
    the sum of radii, a normal force resists body compression and a sliding
    friction force resists relative tangential motion. Otherwise the contact
    terms are zero. Exactly antisymmetric under exchanging a and b.
    """
    prm = params or SocialForceParams()
    dx = a.position - b.position
    d = math.hypot(dx[0], dx[1])
    r = a.radius + b.radius
    n = dx / d if d >= 1e-9 else _fallback_normal(a.pid, b.pid)
    t = np.array([-n[1], n[0]])
    g = max(0.0, r - d)
    normal_mag = prm.repulsion_strength * math.exp((r - d) / prm.repulsion_range) \
        + prm.body_stiffness * g
    dvt = float((b.velocity - a.velocity) @ t)
    return normal_mag * n + prm.sliding_friction * g * dvt * t


def closest_point_on_segment(point, seg) -> np.ndarray:
    """Nearest point of segment (x1, y1, x2, y2) to the given point."""
    a = np.asarray(seg[:2], dtype=float)
    b = np.asarray(seg[2:4], dtype=float)
    ab = b - a
    denom = float(ab @ ab)
    if denom < 1e-18:
        return a
    t = min(max(float((np.asarray(point) - a) @ ab) / denom, 0.0), 1.0)
    return a + t * ab


def wall_force(p: Pedestrian, wall,
               params: SocialForceParams | None = None) -> np.ndarray:
    """Interaction force from a static wall segment, analogous to pair_force."""
    prm = params or SocialForceParams()
    closest = closest_point_on_segment(p.position, wall)
    dvec = p.position - closest
    d = math.hypot(dvec[0], dvec[1])
    if d >= 1e-9:
        n = dvec / d
    else:
        wall_dir = np.asarray(wall[2:4], dtype=float) - np.asarray(wall[:2], dtype=float)
        norm = math.hypot(wall_dir[0], wall_dir[1])
        n = (np.array([-wall_dir[1], wall_dir[0]]) / norm if norm > 0
             else np.array([1.0, 0.0]))
    t = np.array([-n[1], n[0]])
    g = max(0.0, p.radius - d)
    normal_mag = prm.repulsion_strength * math.exp((p.radius - d) / prm.repulsion_range) \
        + prm.body_stiffness * g
    dvt = float((-p.velocity) @ t)
    return normal_mag * n + prm.sliding_friction * g * dvt * t


def choose_gate(position, desired_speed: float, gates, queue_costs,
                params: GateChoiceParams, rng: np.random.Generator) -> int:
    """Sample a gate with probability proportional to exp(-lam * cost).

    Cost of a gate is the free-walk time to its center plus gamma times the
    anticipated queue cost supplied by the caller.
    """
    if not gates:
        raise ValueError("scenario has no gates")
    queue_costs = np.asarray(queue_costs, dtype=float)
    pos = np.asarray(position, dtype=float)
    dists = np.array([math.hypot(*(g.center - pos)) for g in gates])
    costs = dists / desired_speed + params.gamma * queue_costs
    if not np.all(np.isfinite(costs)):
        raise ValueError("gate costs must be finite (unreachable gates)")
    logits = -params.lam * (costs - costs.min())
    weights = np.exp(logits)
    cdf = np.cumsum(weights / weights.sum())
    return int(np.searchsorted(cdf, rng.random(), side="right").clip(0, len(gates) - 1))


@dataclass
class StepDiagnostics:
    """Per-tick diagnostics emitted by World.step."""

    t: float
    n_active: int
    spawned: int
    exited: int
    contact: np.ndarray          # per-pedestrian-id contact flag
    avatar_force: np.ndarray | None
    avatar_contact: bool
    max_displacement: float
    coincident_pairs: list[tuple[int, int]] = field(default_factory=list)


@dataclass
class TrialMetrics:
    """Outcome of a headless trial: per-pedestrian records and gate totals."""

    scenario_name: str
    seed: int
    complete: bool
    duration: float
    pedestrians: list[dict]
    gate_counts: list[int]
    gate_mean_costs: list[float]   # NaN where a gate went unused

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario_name,
            "seed": self.seed,
            "complete": self.complete,
            "duration": self.duration,
            "gate_counts": self.gate_counts,
            "gate_mean_costs": self.gate_mean_costs,
            "pedestrians": self.pedestrians,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), allow_nan=True)


class World:
    """Mutable simulation state advanced by fixed-timestep steps."""

    PHASE_TO_GATE, PHASE_TO_GOAL, PHASE_EXITED = 0, 1, 2

    def __init__(self, scenario: Scenario, gate_params: GateChoiceParams | None = None,
                 anticipated_costs=None, seed: int | None = None,
                 use_spatial_hash: bool = True):
        self.scenario = scenario
        self.params = scenario.force_params
        self.gate_params = gate_params or scenario.gate_params
        n_gates = scenario.n_gates
        if anticipated_costs is None:
            anticipated_costs = np.zeros(n_gates)
        self.anticipated_costs = np.asarray(anticipated_costs, dtype=float)
        if n_gates and self.anticipated_costs.shape != (n_gates,):
            raise ValueError("anticipated costs must have one entry per gate")
        self.rng = np.random.default_rng(scenario.rng_seed if seed is None else seed)
        self.use_spatial_hash = use_spatial_hash
        self.cutoff = self.params.interaction_cutoff()
        self.cell_size = max(self.cutoff, 1e-3)

        cap = scenario.spawn_count
        self.pos = np.zeros((cap, 2))
        self.vel = np.zeros((cap, 2))
        self.radius = np.zeros(cap)
        self.v0 = np.zeros(cap)
        self.gate = np.full(cap, -1, dtype=int)
        self.phase = np.full(cap, self.PHASE_EXITED, dtype=np.int8)
        self.spawn_t = np.full(cap, np.nan)
        self.exit_t = np.full(cap, np.nan)
        self.distance = np.zeros(cap)
        self.n_spawned = 0
        self.n_exited = 0
        self.t = 0.0
        self.tick = 0
        self._spawn_acc = 0.0

        self.mass = self.params.mass
        self.tau = self.params.relaxation_time
        self.walls = scenario.walls
        self._wall_a = self.walls[:, :2]
        self._wall_ab = self.walls[:, 2:] - self._wall_a
        self._wall_ab2 = np.maximum(np.einsum("ij,ij->i", self._wall_ab,
                                              self._wall_ab), 1e-18)
        self._spawn_poly = scenario.spawn_surface
        self._spawn_lo = self._spawn_poly.min(axis=0)
        self._spawn_hi = self._spawn_poly.max(axis=0)
        self._goal_poly = scenario.goal_surface
        goal_lo = self._goal_poly.min(axis=0) + 0.25
        goal_hi = self._goal_poly.max(axis=0) - 0.25
        self._goal_lo = np.minimum(goal_lo, goal_hi)
        self._goal_hi = np.maximum(goal_lo, goal_hi)
        self._gate_centers = (np.stack([g.center for g in scenario.gates])
                              if n_gates else np.zeros((0, 2)))
        self._gate_half = np.array([g.half_length for g in scenario.gates])
        # Outward gate normals point from the hall toward the goal surface.
        goal_centroid = self._goal_poly.mean(axis=0)
        normals = []
        for g in scenario.gates:
            d = np.array([g.x2 - g.x1, g.y2 - g.y1], dtype=float)
            n = np.array([-d[1], d[0]])
            n /= math.hypot(*n)
            if float(n @ (goal_centroid - g.center)) < 0:
                n = -n
            normals.append(n)
        self._gate_normals = np.stack(normals) if normals else np.zeros((0, 2))

        self.avatar_pos: np.ndarray | None = None
        self.avatar_vel = np.zeros(2)
        self.avatar_radius = 0.3

    # -- avatar ---------------------------------------------------------

    def set_avatar(self, x: float, y: float, vx: float = 0.0, vy: float = 0.0,
                   radius: float = 0.3) -> None:
        """Register or move the kinematic avatar body."""
        self.avatar_pos = np.array([x, y], dtype=float)
        self.avatar_vel = np.array([vx, vy], dtype=float)
        self.avatar_radius = radius

    # -- spawning -------------------------------------------------------

    def add_pedestrian(self, position, velocity=(0.0, 0.0), radius: float = 0.3,
                       v0: float = 1.2, gate: int = 0) -> int:
        """Place a pedestrian explicitly (tests and scripted setups)."""
        pid = self.n_spawned
        if pid >= self.pos.shape[0]:
            grow = max(8, pid + 1 - self.pos.shape[0])
            self.pos = np.vstack((self.pos, np.zeros((grow, 2))))
            self.vel = np.vstack((self.vel, np.zeros((grow, 2))))
            self.radius = np.append(self.radius, np.zeros(grow))
            self.v0 = np.append(self.v0, np.zeros(grow))
            self.gate = np.append(self.gate, np.full(grow, -1, dtype=int))
            self.phase = np.append(self.phase,
                                   np.full(grow, self.PHASE_EXITED, dtype=np.int8))
            self.spawn_t = np.append(self.spawn_t, np.full(grow, np.nan))
            self.exit_t = np.append(self.exit_t, np.full(grow, np.nan))
            self.distance = np.append(self.distance, np.zeros(grow))
        self.pos[pid] = np.asarray(position, dtype=float)
        self.vel[pid] = np.asarray(velocity, dtype=float)
        self.radius[pid] = radius
        self.v0[pid] = v0
        self.gate[pid] = gate
        self.phase[pid] = self.PHASE_TO_GATE
        self.spawn_t[pid] = self.t
        self.n_spawned += 1
        return pid

    def _try_spawn(self) -> bool:
        pid = self.n_spawned
        active = np.flatnonzero(self.phase < self.PHASE_EXITED)
        radius = self.rng.uniform(*self.params.radius_range)
        p = None
        for _ in range(5):  # 5 batches of 20 candidates = 100 attempts
            cand = self.rng.uniform(self._spawn_lo, self._spawn_hi, size=(20, 2))
            ok = points_in_polygon(cand, self._spawn_poly)
            if active.size:
                d = np.hypot(cand[:, None, 0] - self.pos[active, 0],
                             cand[:, None, 1] - self.pos[active, 1])
                ok &= np.all(d >= self.radius[active] + radius, axis=1)
            if self.avatar_pos is not None:
                ok &= np.hypot(cand[:, 0] - self.avatar_pos[0],
                               cand[:, 1] - self.avatar_pos[1]) \
                    >= self.avatar_radius + radius
            hits = np.flatnonzero(ok)
            if hits.size:
                p = cand[hits[0]]
                break
        if p is None:
            return False
        speed = self.rng.uniform(*self.params.desired_speed_range)
        gate = choose_gate(p, speed, self.scenario.gates,
                           self.anticipated_costs, self.gate_params, self.rng)
        self.pos[pid] = p
        self.vel[pid] = 0.0
        self.radius[pid] = radius
        self.v0[pid] = speed
        self.gate[pid] = gate
        self.phase[pid] = self.PHASE_TO_GATE
        self.spawn_t[pid] = self.t
        self.n_spawned += 1
        return True

    def _spawn_due(self, dt: float) -> None:
        self._spawn_acc += self.scenario.spawn_rate * dt
        while self._spawn_acc >= 1.0 and self.n_spawned < self.scenario.spawn_count:
            if not self._try_spawn():
                break  # crowded spawn surface: retry next tick
            self._spawn_acc -= 1.0

    # -- force assembly ---------------------------------------------------

    def _candidate_pairs(self, pts: np.ndarray):
        n = pts.shape[0]
        if not self.use_spatial_hash or n < 2:
            return np.triu_indices(n, k=1)
        cx = np.floor(pts[:, 0] / self.cell_size).astype(np.int64) + _COORD_OFFSET
        cy = np.floor(pts[:, 1] / self.cell_size).astype(np.int64) + _COORD_OFFSET
        key = (cx << 21) | cy
        order = np.argsort(key, kind="stable")
        sorted_keys = key[order]
        # Half-stencil neighbor sweep: the (0, 0) offset needs an i < j filter
        # to deduplicate same-cell pairs; the four forward offsets enumerate
        # each adjacent-cell pair exactly once.
        qkey = (((cx[None, :] + self._OFF_X) << 21) | (cy[None, :] + self._OFF_Y)).ravel()
        lo = np.searchsorted(sorted_keys, qkey, side="left")
        hi = np.searchsorted(sorted_keys, qkey, side="right")
        counts = hi - lo
        total = int(counts.sum())
        if total == 0:
            return np.empty(0, dtype=int), np.empty(0, dtype=int)
        i_rep = np.repeat(np.tile(np.arange(n), 5), counts)
        starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
        within = np.arange(total) - np.repeat(starts, counts)
        j_rep = order[np.repeat(lo, counts) + within]
        keep = np.ones(total, dtype=bool)
        same_cell = np.concatenate(([0], np.cumsum(counts)))[n]
        keep[:same_cell] = i_rep[:same_cell] < j_rep[:same_cell]
        i = i_rep[keep]
        j = j_rep[keep]
        swap = i > j
        if np.any(swap):
            i[swap], j[swap] = j[swap], i[swap]
        o = np.lexsort((j, i))
        return i[o], j[o]

    _OFF_X = np.array([0, 1, 1, 0, 1], dtype=np.int64)[:, None]
    _OFF_Y = np.array([0, -1, 0, 1, 1], dtype=np.int64)[:, None]

    def _pair_forces(self, i, j, pts, vels, radii):
        """Forces on i from j for (already deduplicated) index arrays.

        Returns the within-cutoff subset: (kept_i, kept_j, forces, touching,
        coincident). Pairs beyond the cutoff contribute exactly zero.
        """
        prm = self.params
        dx = pts[i] - pts[j]
        d = np.sqrt(dx[:, 0] ** 2 + dx[:, 1] ** 2)
        within = d < self.cutoff
        i, j, dx, d = i[within], j[within], dx[within], d[within]
        rsum = radii[i] + radii[j]
        coincident = d < 1e-9
        safe_d = np.where(coincident, 1.0, d)
        n = dx / safe_d[:, None]
        if coincident.any():
            n[coincident] = [1.0, 0.0]  # i < j in both pair paths
        g = np.maximum(0.0, rsum - d)
        normal_mag = prm.repulsion_strength * np.exp((rsum - d) / prm.repulsion_range) \
            + prm.body_stiffness * g
        tvec = np.column_stack((-n[:, 1], n[:, 0]))
        dvel = vels[j] - vels[i]
        dvt = dvel[:, 0] * tvec[:, 0] + dvel[:, 1] * tvec[:, 1]
        f = normal_mag[:, None] * n + (prm.sliding_friction * g * dvt)[:, None] * tvec
        return i, j, f, g > 0, coincident

    def _wall_forces(self, pts, vels, radii):
        """Summed wall forces and contact flags for each body."""
        prm = self.params
        rel = pts[:, None, :] - self._wall_a[None, :, :]
        tpar = np.einsum("nwj,wj->nw", rel, self._wall_ab) / self._wall_ab2
        np.clip(tpar, 0.0, 1.0, out=tpar)
        closest = self._wall_a[None, :, :] + tpar[:, :, None] * self._wall_ab[None, :, :]
        dvec = pts[:, None, :] - closest
        d = np.sqrt(dvec[:, :, 0] ** 2 + dvec[:, :, 1] ** 2)
        coincident = d < 1e-9
        safe_d = np.where(coincident, 1.0, d)
        n = dvec / safe_d[:, :, None]
        if np.any(coincident):
            wall_n = np.column_stack((-self._wall_ab[:, 1], self._wall_ab[:, 0]))
            wall_n /= np.hypot(wall_n[:, 0], wall_n[:, 1])[:, None]
            idx = np.nonzero(coincident)
            n[idx] = wall_n[idx[1]]
        r = radii[:, None]
        within = d < self.cutoff
        g = np.maximum(0.0, r - d)
        normal_mag = (prm.repulsion_strength * np.exp((r - d) / prm.repulsion_range)
                      + prm.body_stiffness * g) * within
        tvec = np.stack((-n[:, :, 1], n[:, :, 0]), axis=2)
        dvt = np.einsum("nwj,nwj->nw", -vels[:, None, :], tvec)
        f = normal_mag[:, :, None] * n \
            + (prm.sliding_friction * g * dvt * within)[:, :, None] * tvec
        return f.sum(axis=1), (g > 0).any(axis=1)

    def interaction_forces(self, pts, vels, radii):
        """Total pair + wall force and contact flag per body (no driving)."""
        nb = pts.shape[0]
        force = np.zeros((nb, 2))
        contact = np.zeros(nb, dtype=bool)
        coincident = []
        if nb >= 2:
            i, j = self._candidate_pairs(pts)
            if i.size:
                i, j, f, touching, coin = self._pair_forces(i, j, pts, vels, radii)
                force[:, 0] = np.bincount(i, f[:, 0], nb) - np.bincount(j, f[:, 0], nb)
                force[:, 1] = np.bincount(i, f[:, 1], nb) - np.bincount(j, f[:, 1], nb)
                contact |= np.bincount(i, touching, nb) > 0
                contact |= np.bincount(j, touching, nb) > 0
                if coin.any():
                    coincident = list(zip(i[coin].tolist(), j[coin].tolist()))
        if self.walls.shape[0]:
            wf, wc = self._wall_forces(pts, vels, radii)
            force += wf
            contact |= wc
        return force, contact, coincident

    # -- stepping ---------------------------------------------------------

    def _goal_points(self, idx: np.ndarray) -> np.ndarray:
        goals = np.empty((idx.size, 2))
        to_gate = self.phase[idx] == self.PHASE_TO_GATE
        goals[to_gate] = self._gate_centers[self.gate[idx[to_gate]]]
        to_goal = ~to_gate
        goals[to_goal] = np.clip(self.pos[idx[to_goal]], self._goal_lo, self._goal_hi)
        return goals

    def step(self, dt: float) -> StepDiagnostics:
        """Advance one tick: spawn, sum forces, integrate, update phases."""
        if not 0 < dt <= 0.1:
            raise ValueError("dt must be in (0, 0.1]")
        self._spawn_due(dt)
        active = np.flatnonzero(self.phase < self.PHASE_EXITED)
        na = active.size
        has_avatar = self.avatar_pos is not None

        pts = self.pos[active]
        vels = self.vel[active]
        radii = self.radius[active]
        if has_avatar:
            pts = np.vstack((pts, self.avatar_pos))
            vels = np.vstack((vels, self.avatar_vel))
            radii = np.append(radii, self.avatar_radius)

        force, contact, coincident = self.interaction_forces(pts, vels, radii)
        avatar_force = force[na].copy() if has_avatar else None
        avatar_contact = bool(contact[na]) if has_avatar else False

        max_disp = 0.0
        exited_now = 0
        if na:
            goals = self._goal_points(active)
            e = goals - self.pos[active]
            dist = np.sqrt(e[:, 0] ** 2 + e[:, 1] ** 2)
            far = dist > 1e-12
            e[far] /= dist[far, None]
            e[~far] = 0.0
            drive = self.mass * (self.v0[active, None] * e - vels[:na]) / self.tau
            total = drive + force[:na]
            bad = ~np.isfinite(total).all(axis=1) | ~np.isfinite(dist)
            if np.any(bad):
                culprit = int(active[np.argmax(bad)])
                raise SimulationError(
                    f"non-finite force on pedestrian {culprit} at t={self.t:.3f}")
            self.vel[active] += total / self.mass * dt
            # Maximum-speed constraint: bodies cannot exceed a multiple of
            # their desired speed, which also rules out contact-spring blowups
            # and wall tunneling at the fixed timestep.
            speed = np.sqrt(self.vel[active, 0] ** 2 + self.vel[active, 1] ** 2)
            vmax = self.params.max_speed_factor * self.v0[active]
            over = speed > vmax
            if np.any(over):
                sel = active[over]
                self.vel[sel] *= (vmax[over] / speed[over])[:, None]
            step_vec = self.vel[active] * dt
            self.pos[active] += step_vec
            moved = np.sqrt(step_vec[:, 0] ** 2 + step_vec[:, 1] ** 2)
            self.distance[active] += moved
            max_disp = float(moved.max())

            # Gate crossing: just past the gate line, laterally within the
            # opening (the distance cap rejects bodies that merely happen to
            # be somewhere in the outward half-plane).
            to_gate = active[self.phase[active] == self.PHASE_TO_GATE]
            if to_gate.size:
                g = self.gate[to_gate]
                rel = self.pos[to_gate] - self._gate_centers[g]
                out = np.einsum("ij,ij->i", rel, self._gate_normals[g])
                along = np.abs(np.einsum("ij,ij->i", rel,
                                         self._gate_normals[g][:, ::-1] * [1, -1]))
                crossed = (out > 0) & (out <= 0.5) \
                    & (along <= self._gate_half[g] + self.radius[to_gate])
                self.phase[to_gate[crossed]] = self.PHASE_TO_GOAL
            to_goal = active[self.phase[active] == self.PHASE_TO_GOAL]
            if to_goal.size:
                arrived = to_goal[points_in_polygon(self.pos[to_goal], self._goal_poly)]
                self.phase[arrived] = self.PHASE_EXITED
                self.exit_t[arrived] = self.t + dt
                exited_now = int(arrived.size)
                self.n_exited += exited_now

        self.t += dt
        self.tick += 1
        contact_by_pid = np.zeros(self.pos.shape[0], dtype=bool)
        if na:
            contact_by_pid[active] = contact[:na]
        return StepDiagnostics(
            t=self.t, n_active=int((self.phase < self.PHASE_EXITED).sum()),
            spawned=self.n_spawned, exited=exited_now, contact=contact_by_pid,
            avatar_force=avatar_force, avatar_contact=avatar_contact,
            max_displacement=max_disp,
            coincident_pairs=coincident)

    @property
    def all_exited(self) -> bool:
        return self.n_spawned == self.scenario.spawn_count and \
            self.n_exited == self.n_spawned

    def pedestrians(self) -> list[Pedestrian]:
        """Snapshot records of all spawned pedestrians."""
        out = []
        states = {self.PHASE_TO_GATE: "walking", self.PHASE_TO_GOAL: "walking",
                  self.PHASE_EXITED: "exited"}
        for pid in range(self.n_spawned):
            out.append(Pedestrian(
                pid=pid, position=self.pos[pid].copy(),
                velocity=self.vel[pid].copy(), radius=float(self.radius[pid]),
                mass=self.mass, desired_speed=float(self.v0[pid]),
                relaxation_time=self.tau, assigned_gate=int(self.gate[pid]),
                state=states[int(self.phase[pid])]))
        return out


def run_trial(scenario: Scenario, gate_params: GateChoiceParams | None = None,
              anticipated_costs=None, seed: int | None = None,
              use_spatial_hash: bool = True,
              trajectory_every: int = 0) -> tuple[TrialMetrics, list[tuple]]:
    """Run one headless trial to completion or the scenario time cap.

    Returns the metrics and, when trajectory_every > 0, decimated trajectory
    rows (t, id, kind, x, y, vx, vy, gate, state).
    """
    world = World(scenario, gate_params=gate_params,
                  anticipated_costs=anticipated_costs, seed=seed,
                  use_spatial_hash=use_spatial_hash)
    rows: list[tuple] = []
    dt = scenario.dt
    n_steps_cap = int(round(scenario.time_cap / dt))
    for tick in range(n_steps_cap):
        world.step(dt)
        if trajectory_every and tick % trajectory_every == 0:
            for pid in range(world.n_spawned):
                state = "exited" if world.phase[pid] == World.PHASE_EXITED else "walking"
                rows.append((round(world.t, 6), pid, "ped",
                             world.pos[pid, 0], world.pos[pid, 1],
                             world.vel[pid, 0], world.vel[pid, 1],
                             int(world.gate[pid]), state))
        if world.all_exited:
            break
    complete = world.all_exited
    n_gates = scenario.n_gates
    counts = np.zeros(n_gates, dtype=int)
    sums = np.zeros(n_gates)
    finished = np.zeros(n_gates, dtype=int)
    peds = []
    for pid in range(world.n_spawned):
        gate = int(world.gate[pid])
        counts[gate] += 1
        done = bool(world.phase[pid] == World.PHASE_EXITED)
        completion = float(world.exit_t[pid] - world.spawn_t[pid]) if done else math.nan
        if done:
            sums[gate] += completion
            finished[gate] += 1
        peds.append({"id": pid, "gate": gate,
                     "completion_time_s": completion,
                     "distance_m": float(world.distance[pid]),
                     "exited": done})
    with np.errstate(invalid="ignore"):
        mean_costs = np.where(finished > 0, sums / np.maximum(finished, 1), np.nan)
    metrics = TrialMetrics(
        scenario_name=scenario.name,
        seed=int(scenario.rng_seed if seed is None else seed),
        complete=complete,
        duration=round(world.t, 9),
        pedestrians=peds,
        gate_counts=counts.tolist(),
        gate_mean_costs=[float(c) for c in mean_costs],
    )
    return metrics, rows
