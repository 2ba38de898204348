"""Motion compression: fit a predicted target-environment path into the room.

Three stages: predict where the avatar is headed, transform that path into a
user path of identical length and total turning angle that stays inside the
room, and steer the user along it with small bounded heading offsets. The
transform minimizes the integrated squared curvature difference between the
two paths subject to the room boundary, via projected gradient descent on the
user curvature profile with a growing quadratic boundary penalty. Length is
fixed by construction (shared ds and segment count); total turning angle is
maintained by projecting every gradient step onto the zero-mean hyperplane.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Pose, PolyPath, reconstruct_arrays, turning_angle, wrap_angle

TWO_PI = 2.0 * math.pi


class InfeasibleRoomError(RuntimeError):
    """Path transform could not push the user path inside the room."""

    def __init__(self, residual: float):
        super().__init__(
            f"no admissible user path found; residual boundary violation {residual:.4g} m")
        self.residual = residual


@dataclass(frozen=True)
class RoomSpec:
    """Walkable room rectangle [0, width] x [0, height] with a safety inset."""

    width: float
    height: float
    margin: float = 0.3

    def __post_init__(self):
        if not (self.width > 2 * self.margin and self.height > 2 * self.margin):
            raise ValueError("room must be larger than twice the margin")

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        """Feasible-region bounds (xmin, xmax, ymin, ymax)."""
        return (self.margin, self.width - self.margin,
                self.margin, self.height - self.margin)

    def contains(self, x: float, y: float) -> bool:
        xmin, xmax, ymin, ymax = self.bounds
        return xmin <= x <= xmax and ymin <= y <= ymax

    def clamp(self, x: float, y: float) -> tuple[float, float]:
        xmin, xmax, ymin, ymax = self.bounds
        return min(max(x, xmin), xmax), min(max(y, ymin), ymax)


@dataclass
class CompressionConfig:
    """Tunables for prediction, transformation, and guidance."""

    ds: float = 0.05
    horizon: float = 3.0
    goal_window: float = math.radians(30.0)
    gain_cross_track: float = 0.1    # rad per meter of lateral error
    gain_heading: float = 0.3        # dimensionless
    offset_max: float = 0.0349       # ~2 degrees
    rate_max: float = 0.0175         # ~1 degree/s
    penalty_start: float = 10.0
    penalty_growth: float = 2.0
    penalty_rounds: int = 12
    inner_iterations: int = 500
    stall_iterations: int = 30
    gradient_tol: float = 1e-6
    boundary_tol: float = 1e-3
    replan_deviation: float = 0.5    # lateral m from predicted path
    replan_consumed: float = 0.7     # fraction of path walked

    @classmethod
    def from_dict(cls, data: dict) -> "CompressionConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown compression config keys: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class GuidanceState:
    """Controller state: tracking errors plus the heading offset in effect."""

    cross_track_error: float = 0.0
    heading_error: float = 0.0
    injected_offset: float = 0.0


class Correspondence:
    """A target path and its room-fitted user path, sample-for-sample."""

    def __init__(self, target_path: PolyPath, user_path: PolyPath,
                 objective_value: float):
        if target_path.ds != user_path.ds:
            raise ValueError("paths must share ds")
        if target_path.n_segments != user_path.n_segments:
            raise ValueError("paths must share segment count")
        dturn = turning_angle(target_path) - turning_angle(user_path)
        if abs(dturn) > 1e-9:
            raise ValueError(f"turning angles differ by {dturn:.3g} rad")
        self.target_path = target_path
        self.user_path = user_path
        self.objective_value = float(objective_value)
        self.target_points, th = reconstruct_arrays(target_path)
        self.user_points, uh = reconstruct_arrays(user_path)
        ds = target_path.ds
        # Chord headings, used as local tangents of the sample polylines.
        self.target_tangents = th[:-1] + 0.5 * target_path.curvatures * ds
        self.user_tangents = uh[:-1] + 0.5 * user_path.curvatures * ds

    @property
    def ds(self) -> float:
        return self.target_path.ds

    @property
    def length(self) -> float:
        return self.target_path.length

    def swapped(self) -> "Correspondence":
        """The inverse mapping (user and target roles exchanged)."""
        return Correspondence(self.user_path, self.target_path, self.objective_value)


def predict_target_path(avatar: Pose, goals=None, horizon: float = 3.0,
                        ds: float = 0.05,
                        goal_window: float = math.radians(30.0)) -> PolyPath:
    """Predict the avatar's intended path in the target environment.

    Without goals this is a straight ray of the given horizon along the view
    direction. With goals, the nearest one inside the +-goal_window bearing
    cone is reached by the constant-curvature arc tangent to the current
    heading; outside the cone the straight fallback applies.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if goals is not None and len(goals):
        goals = np.asarray(goals, dtype=float).reshape(-1, 2)
        rel = goals - avatar.xy
        dist = np.hypot(rel[:, 0], rel[:, 1])
        nearest = int(np.argmin(dist))
        chord = float(dist[nearest])
        bearing = wrap_angle(math.atan2(rel[nearest, 1], rel[nearest, 0])
                             - avatar.heading)
        if chord > 1e-9 and abs(bearing) <= goal_window:
            # Constant-curvature arc tangent to the heading through the goal,
            # solved for the discrete chord-step model so the reconstructed
            # endpoint lands exactly on the goal: n steps of length step turn
            # by kappa*step each and sum to a chord of length
            # step*sin(b)/sin(b/n) at bearing b.
            arc_len = chord if abs(bearing) < 1e-12 else chord * bearing / math.sin(bearing)
            n = max(1, round(arc_len / ds))
            if abs(bearing) < 1e-12:
                step = chord / n
                kappa = 0.0
            else:
                step = chord * math.sin(bearing / n) / math.sin(bearing)
                kappa = 2.0 * bearing / (n * step)
            return PolyPath(avatar, step, np.full(n, kappa))
    n = max(1, round(horizon / ds))
    return PolyPath(avatar, horizon / n, np.zeros(n))


def _reconstruct_profile(start: Pose, k: np.ndarray, ds: float):
    """Points, step midpoints, and chord headings for a curvature profile."""
    headings = start.heading + ds * np.concatenate(([0.0], np.cumsum(k)))
    chord = headings[:-1] + 0.5 * k * ds
    steps = ds * np.column_stack((np.cos(chord), np.sin(chord)))
    pts = np.empty((k.size + 1, 2))
    pts[0] = (start.x, start.y)
    np.cumsum(steps, axis=0, out=pts[1:])
    pts[1:] += pts[0]
    return pts, 0.5 * (pts[:-1] + pts[1:])


def _boundary_violations(pts: np.ndarray, bounds) -> np.ndarray:
    """Per-axis boundary overshoots, shape (n_points, 4): x_lo, x_hi, y_lo, y_hi."""
    xmin, xmax, ymin, ymax = bounds
    v = np.empty((pts.shape[0], 4))
    v[:, 0] = np.maximum(0.0, xmin - pts[:, 0])
    v[:, 1] = np.maximum(0.0, pts[:, 0] - xmax)
    v[:, 2] = np.maximum(0.0, ymin - pts[:, 1])
    v[:, 3] = np.maximum(0.0, pts[:, 1] - ymax)
    return v


def max_violation(pts: np.ndarray, room: RoomSpec) -> float:
    """Largest per-axis distance any point lies outside the feasible rect."""
    return float(_boundary_violations(pts, room.bounds).max())


def _penalized_value(k, kt, ds, start, bounds, weight):
    pts, _ = _reconstruct_profile(start, k, ds)
    v = _boundary_violations(pts[1:], bounds)
    obj = float(np.sum((k - kt) ** 2) * ds)
    return obj + weight * float(np.sum(v * v)), pts


def _penalized_grad(k, kt, ds, start, bounds, weight, pts, mids):
    v = _boundary_violations(pts[1:], bounds)
    # d(sum v^2)/d point: -2 v_lo + 2 v_hi per axis.
    gphi = np.empty_like(pts[1:])
    gphi[:, 0] = 2.0 * (v[:, 1] - v[:, 0])
    gphi[:, 1] = 2.0 * (v[:, 3] - v[:, 2])
    # dP/dk_i = ds * sum_{m>i} gphi_m . perp(p_m - mid_i), via suffix sums of
    # cross(p_m, gphi_m) and gphi_m.
    crosses = pts[1:, 0] * gphi[:, 1] - pts[1:, 1] * gphi[:, 0]
    c_suffix = np.cumsum(crosses[::-1])[::-1]
    g_suffix = np.cumsum(gphi[::-1], axis=0)[::-1]
    pen = ds * (c_suffix - (mids[:, 0] * g_suffix[:, 1] - mids[:, 1] * g_suffix[:, 0]))
    return 2.0 * (k - kt) * ds + weight * pen


def transform_path(target: PolyPath, room: RoomSpec, user_start: Pose,
                   config: CompressionConfig | None = None) -> Correspondence:
    """Fit the target path into the room from the given start pose.

    Returns a correspondence whose user path has the target's ds, length,
    and total turning angle, all reconstructed samples inside the feasible
    rectangle (within the boundary tolerance), and locally minimal integrated
    squared curvature difference. Raises InfeasibleRoomError if the penalty
    schedule exhausts without reaching the boundary tolerance.
    """
    cfg = config or CompressionConfig()
    if target.length <= 0:
        raise ValueError("target path must have positive length")
    if not room.contains(user_start.x, user_start.y):
        raise ValueError("user start must lie inside the room's feasible region")
    kt = np.asarray(target.curvatures, dtype=float)
    ds = target.ds
    n = kt.size
    bounds = room.bounds

    def build(k):
        # Snap the turning-angle match to the bit level for downstream checks.
        k = k + (kt.sum() - k.sum()) / n
        user = PolyPath(user_start, ds, k)
        return Correspondence(target, user, float(np.sum((k - kt) ** 2) * ds))

    # The unmodified profile is optimal whenever it already fits.
    pts0, _ = _reconstruct_profile(user_start, kt, ds)
    if _boundary_violations(pts0[1:], bounds).max() <= cfg.boundary_tol:
        return build(kt.copy())

    # Room-filling serpentine start: blocks of alternating +-2*pi/perimeter
    # curvature (each block turning about half a lap), shifted to the
    # target's total turn so the equality constraint holds from the outset.
    perimeter = 2.0 * ((bounds[1] - bounds[0]) + (bounds[3] - bounds[2]))

    def serpentine(m, step, turn_sum):
        # At least one sign alternation inside the profile: a constant-sign
        # block would collapse to the (possibly straight and saddle-point)
        # target profile after the turn-sum shift.
        block = max(1, min(round(0.5 * perimeter / step), max(1, m // 2)))
        k0 = (TWO_PI / perimeter) * (-1.0) ** (np.arange(m) // block)
        return k0 + (turn_sum - k0.sum()) / m

    weight = cfg.penalty_start
    if n >= 160:
        # Coarse-to-fine: solve at ~4x coarser sampling, then upsample and
        # polish at full resolution from the weight that made coarse feasible.
        n_c = max(40, n // 4)
        ds_c = target.length / n_c
        cum = np.concatenate(([0.0], np.cumsum(kt * ds)))
        kt_c = np.diff(np.interp(ds_c * np.arange(n_c + 1),
                                 ds * np.arange(n + 1), cum)) / ds_c
        k_c = serpentine(n_c, ds_c, kt_c.sum())
        k_c, _, weight = _penalty_loop(k_c, kt_c, ds_c, user_start, bounds, cfg,
                                       cfg.penalty_start)
        k = np.interp((np.arange(n) + 0.5) * ds, (np.arange(n_c) + 0.5) * ds_c, k_c)
        k += (kt.sum() - k.sum()) / n
    else:
        k = serpentine(n, ds, kt.sum())

    k, residual, _ = _penalty_loop(k, kt, ds, user_start, bounds, cfg, weight)
    if residual > cfg.boundary_tol:
        raise InfeasibleRoomError(residual)
    return build(k)


def _penalty_loop(k, kt, ds, start, bounds, cfg, weight):
    """Run the growing-penalty schedule; returns (profile, residual, weight)."""
    residual = math.inf
    for _ in range(cfg.penalty_rounds):
        k = _minimize_profile(k, kt, ds, start, bounds, weight, cfg)
        pts, _ = _reconstruct_profile(start, k, ds)
        residual = float(_boundary_violations(pts[1:], bounds).max())
        if residual <= cfg.boundary_tol:
            break
        weight *= cfg.penalty_growth
    return k, residual, weight


def _minimize_profile(k, kt, ds, start, bounds, weight, cfg):
    """Projected gradient descent with Barzilai-Borwein steps and a
    non-monotone Armijo backtracking line search."""
    k = k.copy()
    val, pts = _penalized_value(k, kt, ds, start, bounds, weight)
    mids = 0.5 * (pts[:-1] + pts[1:])
    grad = _penalized_grad(k, kt, ds, start, bounds, weight, pts, mids)
    grad -= grad.mean()
    step = 1.0 / max(weight, 1.0)
    prev_k = None
    prev_grad = None
    stall = 0
    recent = [val]
    for _ in range(cfg.inner_iterations):
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= cfg.gradient_tol or stall >= cfg.stall_iterations:
            break
        if prev_k is not None:
            dk = k - prev_k
            dg = grad - prev_grad
            denom = float(dk @ dg)
            if denom > 0:
                step = float(dk @ dk) / denom
        accepted = False
        trial = step
        ref = max(recent)
        for _ in range(40):
            k_new = k - trial * grad
            val_new, pts_new = _penalized_value(k_new, kt, ds, start, bounds, weight)
            if val_new <= ref - 1e-4 * trial * gnorm * gnorm:
                accepted = True
                break
            trial *= 0.5
        if not accepted:
            break
        stall = stall + 1 if val - val_new <= 1e-12 * (1.0 + abs(val)) else 0
        prev_k, prev_grad = k, grad
        k, val, pts = k_new, val_new, pts_new
        recent.append(val)
        if len(recent) > 8:
            recent.pop(0)
        mids = 0.5 * (pts[:-1] + pts[1:])
        grad = _penalized_grad(k, kt, ds, start, bounds, weight, pts, mids)
        grad -= grad.mean()
    return k


def project_onto_path(points: np.ndarray, tangents: np.ndarray, pose: Pose,
                      window: tuple[float, float] | None = None):
    """Project a pose onto a sample polyline.

    Returns (u, lateral, heading_offset): continuous segment index in
    [0, n_segments], signed lateral offset (positive = pose left of path),
    and the pose heading relative to the local tangent. Ties between
    equidistant segments resolve to the smallest arc length. An optional
    (u_lo, u_hi) window restricts the search, which live tracking uses to
    keep the projection continuous on self-overlapping paths.
    """
    lo, hi = 0, tangents.shape[0]
    if window is not None:
        lo = min(max(int(math.floor(window[0])), 0), hi - 1)
        hi = max(min(int(math.ceil(window[1])) + 1, hi), lo + 1)
    a = points[lo:hi]
    ab = points[lo + 1:hi + 1] - a
    seg_len2 = np.einsum("ij,ij->i", ab, ab)
    rel = pose.xy - a
    t = np.clip(np.einsum("ij,ij->i", rel, ab) / seg_len2, 0.0, 1.0)
    proj = a + t[:, None] * ab
    diff = pose.xy - proj
    d2 = np.einsum("ij,ij->i", diff, diff)
    i = int(np.argmin(d2))  # first minimum = smallest arc length
    cross = ab[i, 0] * diff[i, 1] - ab[i, 1] * diff[i, 0]
    lateral = math.copysign(math.sqrt(d2[i]), cross) if d2[i] > 0 else 0.0
    heading_offset = wrap_angle(pose.heading - float(tangents[lo + i]))
    return lo + i + float(t[i]), lateral, heading_offset


def pose_on_path(points: np.ndarray, tangents: np.ndarray, u: float,
                 lateral: float, heading_offset: float) -> Pose:
    """Inverse of project_onto_path: place a pose relative to the polyline."""
    n = tangents.shape[0]
    i = min(int(u), n - 1)
    frac = u - i
    base = points[i] + frac * (points[i + 1] - points[i])
    tangent = float(tangents[i])
    normal = np.array([-math.sin(tangent), math.cos(tangent)])
    pos = base + lateral * normal
    return Pose(float(pos[0]), float(pos[1]), wrap_angle(tangent + heading_offset))


def map_pose(user_pose: Pose, corr: Correspondence) -> Pose:
    """Map a room pose to the target environment, preserving the relative
    posture (arc length, lateral offset, heading offset) w.r.t. the paths."""
    u, lateral, heading_offset = project_onto_path(
        corr.user_points, corr.user_tangents, user_pose)
    return pose_on_path(corr.target_points, corr.target_tangents,
                        u, lateral, heading_offset)


def guidance_offset_law(lateral: float, heading_err: float, prev: GuidanceState,
                        dt: float, cfg: CompressionConfig) -> GuidanceState:
    """Controller law on already-computed tracking errors.

    Positive cross-track error (user left of the path) demands a negative
    offset so the displayed scene nudges the user rightward; the demanded
    offset is clamped to +-offset_max and slewed at most rate_max per second.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    demanded = -(cfg.gain_cross_track * lateral + cfg.gain_heading * heading_err)
    demanded = min(max(demanded, -cfg.offset_max), cfg.offset_max)
    max_delta = cfg.rate_max * dt
    offset = prev.injected_offset + min(max(demanded - prev.injected_offset,
                                            -max_delta), max_delta)
    return GuidanceState(cross_track_error=lateral, heading_error=heading_err,
                         injected_offset=offset)


def guidance_step(user_pose: Pose, corr: Correspondence, prev: GuidanceState,
                  dt: float, config: CompressionConfig | None = None) -> GuidanceState:
    """Update the injected heading offset from the current tracking errors."""
    cfg = config or CompressionConfig()
    _, lateral, heading_err = project_onto_path(
        corr.user_points, corr.user_tangents, user_pose)
    return guidance_offset_law(lateral, heading_err, prev, dt, cfg)
