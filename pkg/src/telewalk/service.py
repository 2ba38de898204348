"""Real-time session pipeline: pose ingest, tick loop, logging, and replay.

A session owns one correspondence (re-planned in the background contractually,
swapped between ticks), the crowd world with the avatar embedded as a
kinematic body, and the guidance controller. Ticks are strictly ordered:
map the user pose, update guidance, step the crowd, compute and transform
the avatar force, broadcast, log. Everything is a deterministic function of
(scenario, config, seed, sample stream), so re-feeding a logged sample stream
reproduces broadcast lines byte for byte.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import protocol
from .compression import (
    CompressionConfig,
    Correspondence,
    GuidanceState,
    InfeasibleRoomError,
    RoomSpec,
    guidance_offset_law,
    map_pose,
    pose_on_path,
    predict_target_path,
    project_onto_path,
    transform_path,
)
from .crowd import World
from .geometry import Pose, wrap_angle
from .haptics import avatar_force, transform_force
from .scenario import Scenario, points_in_polygon

DROPOUT_GAP = 0.2  # seconds without a fresh pose before a dropout event


@dataclass(frozen=True)
class TrackerSample:
    """One pose estimate from the tracker (user-room frame)."""

    seq: int
    t: float
    pose: Pose


@dataclass
class SessionConfig:
    """Session-level knobs: room, compression, avatar embedding, logging."""

    room: RoomSpec = field(default_factory=lambda: RoomSpec(4.0, 4.0, 0.3))
    compression: CompressionConfig = field(default_factory=CompressionConfig)
    avatar_start: Pose = field(default_factory=lambda: Pose(0.0, 0.0, 0.0))
    user_start: Pose = field(default_factory=lambda: Pose(2.0, 2.0, 0.0))
    goals: list | None = None          # prediction goals in the target frame
    avatar_radius: float = 0.3
    seed: int = 0
    log_decimation: int = 5

    def to_dict(self) -> dict:
        return {
            "room": {"width": self.room.width, "height": self.room.height,
                     "margin": self.room.margin},
            "compression": {k: getattr(self.compression, k)
                            for k in self.compression.__dataclass_fields__},
            "avatar_start": [self.avatar_start.x, self.avatar_start.y,
                             self.avatar_start.heading],
            "user_start": [self.user_start.x, self.user_start.y,
                           self.user_start.heading],
            "goals": [list(map(float, g)) for g in self.goals] if self.goals else None,
            "avatar_radius": self.avatar_radius,
            "seed": self.seed,
            "log_decimation": self.log_decimation,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SessionConfig":
        return cls(
            room=RoomSpec(**data["room"]),
            compression=CompressionConfig.from_dict(data["compression"]),
            avatar_start=Pose(*data["avatar_start"]),
            user_start=Pose(*data["user_start"]),
            goals=[tuple(g) for g in data["goals"]] if data.get("goals") else None,
            avatar_radius=float(data.get("avatar_radius", 0.3)),
            seed=int(data.get("seed", 0)),
            log_decimation=int(data.get("log_decimation", 5)),
        )


class Session:
    """Deterministic tick pipeline over one scenario and one user."""

    def __init__(self, scenario: Scenario, config: SessionConfig):
        self.scenario = scenario
        self.config = config
        self.world = World(scenario, seed=config.seed)
        self.world.set_avatar(config.avatar_start.x, config.avatar_start.y,
                              radius=config.avatar_radius)
        self.guidance = GuidanceState()
        self.tick_index = 0
        self.last_sample: TrackerSample | None = None
        self.last_seq = -1
        self._prev_avatar: Pose | None = None
        self.covered_distance = 0.0
        self.chosen_gate: int | None = None
        self.completed = False
        self.completion_time: float | None = None

        self.sample_log: list[dict] = []
        self.broadcast_lines: list[str] = []
        self.events: list[dict] = []
        self.trajectory_rows: list[tuple] = []
        self._stale_active = False
        self._track_u: float | None = None  # arc position for continuous tracking
        self._replan_cooldown = 0           # ticks until the next replan attempt

        cfg = config.compression
        target = predict_target_path(config.avatar_start, config.goals,
                                     horizon=cfg.horizon, ds=cfg.ds,
                                     goal_window=cfg.goal_window)
        self.corr = transform_path(target, config.room, config.user_start, cfg)
        self._log_event("correspondence", objective=self.corr.objective_value,
                        length=self.corr.length)

    # -- time ------------------------------------------------------------

    @property
    def now(self) -> float:
        return self.tick_index * self.scenario.dt

    def _log_event(self, kind: str, **fields) -> None:
        self.events.append(protocol.event_message(self.now, kind, **fields))

    # -- ingest ------------------------------------------------------------

    def ingest(self, sample: TrackerSample) -> tuple[bool, str | None]:
        """Queue a tracker sample; rejects sequence regressions, clamps poses
        outside the feasible region, and flags stream gaps over 200 ms."""
        reason = None
        accepted = True
        if sample.seq <= self.last_seq:
            accepted = False
            reason = "out-of-order"
        else:
            if self.last_sample is not None and \
                    sample.t - self.last_sample.t > DROPOUT_GAP:
                self._log_event("dropout", gap=sample.t - self.last_sample.t)
            pose = sample.pose
            if not self.config.room.contains(pose.x, pose.y):
                cx, cy = self.config.room.clamp(pose.x, pose.y)
                self._log_event("clamped", x=pose.x, y=pose.y)
                pose = Pose(cx, cy, pose.heading)
                reason = "clamped"
            self.last_sample = TrackerSample(sample.seq, sample.t, pose)
            self.last_seq = sample.seq
        self.sample_log.append({
            "tick": self.tick_index, "accepted": accepted, "reason": reason,
            "seq": sample.seq, "t": sample.t, "x": sample.pose.x,
            "y": sample.pose.y, "heading": sample.pose.heading,
        })
        return accepted, reason

    # -- tick ------------------------------------------------------------

    def tick(self) -> dict:
        """Advance one 20 ms frame and return the broadcast state message."""
        if self.last_sample is None:
            raise RuntimeError("tick requires at least one tracker sample")
        dt = self.scenario.dt
        stale = self.now - self.last_sample.t > DROPOUT_GAP
        if stale and not self._stale_active:
            self._log_event("dropout", stale=self.now - self.last_sample.t)
        self._stale_active = stale
        user_pose = self.last_sample.pose

        # Continuity-windowed projection: on self-overlapping user paths the
        # mapping must follow the walked arc, not the globally nearest lobe.
        ds = self.corr.ds
        window = None
        if self._track_u is not None:
            window = (self._track_u - 1.0 / ds, self._track_u + 2.0 / ds)
        u, lateral, heading_err = project_onto_path(
            self.corr.user_points, self.corr.user_tangents, user_pose, window)
        self._track_u = u
        avatar_raw = pose_on_path(self.corr.target_points,
                                  self.corr.target_tangents, u, lateral, heading_err)
        self.guidance = guidance_offset_law(lateral, heading_err, self.guidance,
                                            dt, self.config.compression)
        displayed = wrap_angle(avatar_raw.heading - self.guidance.injected_offset)

        if self._prev_avatar is None:
            avatar_vel = (0.0, 0.0)
        else:
            avatar_vel = ((avatar_raw.x - self._prev_avatar.x) / dt,
                          (avatar_raw.y - self._prev_avatar.y) / dt)
            self.covered_distance += math.hypot(avatar_raw.x - self._prev_avatar.x,
                                                avatar_raw.y - self._prev_avatar.y)
        self.world.set_avatar(avatar_raw.x, avatar_raw.y, avatar_vel[0],
                              avatar_vel[1], radius=self.config.avatar_radius)
        self.world.step(dt)

        force_target = avatar_force(self.world)
        seg = min(int(u), self.corr.user_tangents.shape[0] - 1)
        force_user = transform_force(force_target,
                                     float(self.corr.target_tangents[seg]),
                                     float(self.corr.user_tangents[seg]))

        peds = []
        for pid in np.flatnonzero(self.world.phase[:self.world.n_spawned]
                                  < World.PHASE_EXITED):
            peds.append({"id": int(pid),
                         "x": float(self.world.pos[pid, 0]),
                         "y": float(self.world.pos[pid, 1]),
                         "vx": float(self.world.vel[pid, 0]),
                         "vy": float(self.world.vel[pid, 1])})

        self.tick_index += 1
        state = protocol.state_message(
            t=self.now, user=user_pose, avatar=avatar_raw, avatar_vel=avatar_vel,
            displayed_heading=displayed, peds=peds, force=force_user,
            guidance_offset=self.guidance.injected_offset)
        self.broadcast_lines.append(protocol.encode(state))

        self._update_route_progress(avatar_raw)
        self._prev_avatar = avatar_raw
        if (self.tick_index - 1) % self.config.log_decimation == 0:
            self._append_trajectory(user_pose, avatar_raw, avatar_vel)
        self._replan_if_needed(avatar_raw, user_pose)
        return state

    def _append_trajectory(self, user_pose: Pose, avatar: Pose, avatar_vel) -> None:
        t = round(self.now, 6)
        self.trajectory_rows.append((t, -1, "avatar", avatar.x, avatar.y,
                                     avatar_vel[0], avatar_vel[1],
                                     self.chosen_gate if self.chosen_gate is not None else -1,
                                     "walking"))
        self.trajectory_rows.append((t, -2, "user", user_pose.x, user_pose.y,
                                     0.0, 0.0, -1, "walking"))
        for pid in np.flatnonzero(self.world.phase[:self.world.n_spawned]
                                  < World.PHASE_EXITED):
            self.trajectory_rows.append(
                (t, int(pid), "ped", self.world.pos[pid, 0], self.world.pos[pid, 1],
                 self.world.vel[pid, 0], self.world.vel[pid, 1],
                 int(self.world.gate[pid]), "walking"))

    def _update_route_progress(self, avatar: Pose) -> None:
        if self._prev_avatar is not None and self.chosen_gate is None:
            prev = np.array([self._prev_avatar.x, self._prev_avatar.y])
            cur = np.array([avatar.x, avatar.y])
            for gate, center, normal, half in zip(
                    self.scenario.gates, self.world._gate_centers,
                    self.world._gate_normals, self.world._gate_half):
                before = float((prev - center) @ normal)
                after = float((cur - center) @ normal)
                along = abs(float((cur - center) @ np.array([-normal[1], normal[0]])))
                if before <= 0 < after and along <= half + self.config.avatar_radius:
                    self.chosen_gate = gate.gate_id
                    self._log_event("gate-crossed", gate=gate.gate_id)
                    break
        if not self.completed and self.scenario.goal_surface.shape[0] >= 3:
            inside = points_in_polygon(np.array([[avatar.x, avatar.y]]),
                                       self.scenario.goal_surface)
            if bool(inside[0]):
                self.completed = True
                self.completion_time = self.now
                self._log_event("goal-reached")

    def _replan_if_needed(self, avatar: Pose, user_pose: Pose) -> None:
        if self._replan_cooldown > 0:
            self._replan_cooldown -= 1
            return
        n = self.corr.target_tangents.shape[0]
        u, lateral, _ = project_onto_path(self.corr.target_points,
                                          self.corr.target_tangents, avatar)
        cfg = self.config.compression
        if abs(lateral) <= cfg.replan_deviation and u / n < cfg.replan_consumed:
            return
        target = predict_target_path(avatar, self.config.goals,
                                     horizon=cfg.horizon, ds=cfg.ds,
                                     goal_window=cfg.goal_window)
        try:
            self.corr = transform_path(target, self.config.room, user_pose, cfg)
        except InfeasibleRoomError as exc:
            # Wall-pinned poses can make a fresh fit impossible; keep the
            # current correspondence and retry after a short backoff.
            self._log_event("replan-failed", residual=exc.residual)
            self._replan_cooldown = 25
            return
        self._track_u = 0.0  # the new user path starts at the current pose
        self._replan_cooldown = 25
        self._log_event("replan", objective=self.corr.objective_value,
                        length=self.corr.length)

    # -- summary and persistence -----------------------------------------

    def summary(self) -> dict:
        return {
            "ticks": self.tick_index,
            "duration_s": self.now,
            "covered_distance_m": self.covered_distance,
            "chosen_gate": self.chosen_gate,
            "completed": self.completed,
            "completion_time_s": self.completion_time,
            "dropouts": sum(1 for e in self.events if e["kind"] == "dropout"),
        }

    def write_log(self, out_dir: str | Path) -> Path:
        """Persist the session: config snapshot, sample stream, broadcast
        lines, events, decimated trajectory CSV, and the summary."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "config.json", "w", encoding="utf-8") as fh:
            json.dump({"scenario": self.scenario.to_dict(),
                       "session": self.config.to_dict()}, fh, indent=2)
        with open(out / "samples.jsonl", "w", encoding="utf-8") as fh:
            for rec in self.sample_log:
                fh.write(json.dumps(rec, separators=(",", ":")) + "\n")
        with open(out / "broadcasts.jsonl", "w", encoding="utf-8") as fh:
            fh.writelines(self.broadcast_lines)
        with open(out / "events.jsonl", "w", encoding="utf-8") as fh:
            for e in self.events:
                fh.write(json.dumps(e, separators=(",", ":")) + "\n")
        with open(out / "pedestrians.json", "w", encoding="utf-8") as fh:
            json.dump([{"id": pid, "radius": float(self.world.radius[pid]),
                        "desired_speed": float(self.world.v0[pid]),
                        "gate": int(self.world.gate[pid])}
                       for pid in range(self.world.n_spawned)], fh)
        with open(out / "trajectory.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "id", "kind", "x", "y", "vx", "vy", "gate", "state"])
            writer.writerows(self.trajectory_rows)
        with open(out / "summary.json", "w", encoding="utf-8") as fh:
            json.dump(self.summary(), fh, indent=2)
        return out


@dataclass
class ScriptedPolicy:
    """Goal-seeking walker standing in for the human participant."""

    goal: tuple[float, float]          # target-frame goal point
    speed: float = 1.3                 # m/s
    heading_noise: float = math.radians(2.0)   # per-sample sigma, rad
    speed_noise: float = 0.05          # per-sample sigma, m/s
    seed: int = 0
    turn_gain: float = 12.0            # 1/s on the perceived bearing error
    max_turn_rate: float = 4.0         # rad/s
    arrive_tol: float = 0.01           # m in the target frame


class ScriptedParticipant:
    """Emits 50 Hz tracker samples steering toward a target-frame goal.

    The walker reacts to what it is shown: the avatar position and the
    displayed heading (which already carries the injected guidance offset).
    It turns to zero the perceived bearing error toward the goal, exactly the
    loop a guided human closes. Noise is seeded, so streams are reproducible.
    """

    def __init__(self, policy: ScriptedPolicy, room: RoomSpec, start: Pose,
                 dt: float = 0.02):
        self.policy = policy
        self.room = room
        self.pose = start
        self.dt = dt
        self.seq = 0
        self.t = 0.0
        self.rng = np.random.default_rng(policy.seed)
        self.arrived = False

    def perceive_and_step(self, avatar_x: float, avatar_y: float,
                          displayed_heading: float) -> TrackerSample | None:
        """Produce the next sample, or None once the goal image is reached."""
        if self.arrived:
            return None
        gx, gy = self.policy.goal
        dist = math.hypot(gx - avatar_x, gy - avatar_y)
        if dist <= self.policy.arrive_tol:
            self.arrived = True
            return None
        bearing_err = wrap_angle(math.atan2(gy - avatar_y, gx - avatar_x)
                                 - displayed_heading)
        turn_rate = min(max(self.policy.turn_gain * bearing_err,
                            -self.policy.max_turn_rate), self.policy.max_turn_rate)
        heading = self.pose.heading + turn_rate * self.dt
        if self.policy.heading_noise > 0:
            heading += self.rng.normal(0.0, self.policy.heading_noise)
        speed = self.policy.speed
        if self.policy.speed_noise > 0:
            speed = max(0.0, speed + self.rng.normal(0.0, self.policy.speed_noise))
        step = min(speed * self.dt, dist)  # do not overshoot the goal image
        x = self.pose.x + step * math.cos(heading)
        y = self.pose.y + step * math.sin(heading)
        x, y = self.room.clamp(x, y)
        self.pose = Pose(x, y, heading)
        self.seq += 1
        self.t += self.dt
        return TrackerSample(seq=self.seq, t=self.t, pose=self.pose)

    def stream(self, corr: Correspondence, max_samples: int = 30_000):
        """Standalone sample stream against a fixed correspondence (no
        guidance feedback); the walker perceives its own mapped pose."""
        for _ in range(max_samples):
            avatar = map_pose(self.pose, corr)
            sample = self.perceive_and_step(avatar.x, avatar.y, avatar.heading)
            if sample is None:
                return
            yield sample


def run_scripted_session(scenario: Scenario, config: SessionConfig,
                         policy: ScriptedPolicy,
                         max_ticks: int = 30_000) -> Session:
    """Closed-loop headless session: scripted samples in, broadcasts out."""
    session = Session(scenario, config)
    participant = ScriptedParticipant(policy, config.room, config.user_start,
                                      dt=scenario.dt)
    shown = map_pose(config.user_start, session.corr)
    avatar_view = (shown.x, shown.y, shown.heading)
    for _ in range(max_ticks):
        sample = participant.perceive_and_step(*avatar_view)
        if sample is None:
            session._log_event("participant-arrived")
            break
        session.ingest(sample)
        state = session.tick()
        avatar_view = (state["avatar"]["x"], state["avatar"]["y"],
                       state["displayed_heading"])
    return session


def replay(log_dir: str | Path) -> tuple[bool, int, int | None]:
    """Re-feed a logged sample stream and verify broadcasts byte-for-byte.

    Returns (ok, ticks_replayed, first_mismatch_tick).
    """
    log = Path(log_dir)
    with open(log / "config.json", encoding="utf-8") as fh:
        cfg_data = json.load(fh)
    scenario = Scenario.from_dict(cfg_data["scenario"])
    config = SessionConfig.from_dict(cfg_data["session"])
    with open(log / "samples.jsonl", encoding="utf-8") as fh:
        samples = [json.loads(line) for line in fh if line.strip()]
    with open(log / "broadcasts.jsonl", encoding="utf-8") as fh:
        expected = fh.readlines()

    session = Session(scenario, config)
    by_tick: dict[int, list[dict]] = {}
    for rec in samples:
        by_tick.setdefault(rec["tick"], []).append(rec)
    n_ticks = len(expected)
    for k in range(n_ticks):
        for rec in by_tick.get(k, []):
            session.ingest(TrackerSample(
                seq=rec["seq"], t=rec["t"],
                pose=Pose(rec["x"], rec["y"], rec["heading"])))
        session.tick()
    for k, (got, want) in enumerate(zip(session.broadcast_lines, expected)):
        if got != want:
            return False, n_ticks, k
    return len(session.broadcast_lines) == len(expected), n_ticks, None
