"""Arc-length path representation shared by the path pipeline.

Paths are stored as uniform curvature profiles (one signed curvature per
``ds``-long segment, positive = left turn); points are derived, never stored.
Reconstruction advances each segment by exactly ``ds`` along the chord
direction of the constant-curvature arc (heading plus half the heading
increment), so polyline length is preserved by construction and there is no
first-order drift toward the inside of curves.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi


class PathInputError(ValueError):
    """Raised for degenerate path inputs (too few points, zero length)."""


def wrap_angle(a: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    w = math.fmod(a + math.pi, TWO_PI)
    if w <= 0.0:
        w += TWO_PI
    return w - math.pi


def wrap_angles(a: np.ndarray) -> np.ndarray:
    """Vectorized wrap to (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=float) + math.pi, TWO_PI)
    w[w <= 0.0] += TWO_PI
    return w - math.pi


@dataclass(frozen=True)
class Pose:
    """Planar position (m) plus heading (rad), heading kept in (-pi, pi]."""

    x: float
    y: float
    heading: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.heading)):
            raise ValueError(f"non-finite pose ({self.x}, {self.y}, {self.heading})")
        object.__setattr__(self, "heading", wrap_angle(self.heading))

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def direction(self) -> np.ndarray:
        return np.array([math.cos(self.heading), math.sin(self.heading)])


@dataclass(frozen=True)
class PolyPath:
    """Uniformly sampled path: start pose, spacing ds, one curvature per segment."""

    start: Pose
    ds: float
    curvatures: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not (self.ds > 0.0 and math.isfinite(self.ds)):
            raise ValueError(f"ds must be positive and finite, got {self.ds}")
        k = np.atleast_1d(np.asarray(self.curvatures, dtype=float)).copy()
        if k.size == 0:
            raise ValueError("path needs at least one segment")
        if not np.all(np.isfinite(k)):
            raise ValueError("curvatures must be finite")
        k.setflags(write=False)
        object.__setattr__(self, "curvatures", k)

    @property
    def n_segments(self) -> int:
        return self.curvatures.size

    @property
    def n_samples(self) -> int:
        return self.curvatures.size + 1

    @property
    def length(self) -> float:
        return self.n_segments * self.ds


def turning_angle(path: PolyPath) -> float:
    """Signed total turning angle, sum of curvature * ds over segments."""
    return float(np.sum(path.curvatures) * path.ds)


def reconstruct_arrays(path: PolyPath) -> tuple[np.ndarray, np.ndarray]:
    """Return (points[n+1, 2], headings[n+1]) for the path samples.

    Headings are unwrapped (cumulative); callers needing (-pi, pi] should wrap.
    Each step displaces exactly ds along heading + curvature*ds/2, the chord
    direction of the corresponding constant-curvature arc.
    """
    k = path.curvatures
    ds = path.ds
    headings = path.start.heading + ds * np.concatenate(([0.0], np.cumsum(k)))
    chord_dir = headings[:-1] + 0.5 * k * ds
    steps = ds * np.column_stack((np.cos(chord_dir), np.sin(chord_dir)))
    points = np.empty((k.size + 1, 2))
    points[0] = (path.start.x, path.start.y)
    np.cumsum(steps, axis=0, out=points[1:])
    points[1:] += points[0]
    return points, headings


def reconstruct(path: PolyPath) -> list[Pose]:
    """Reconstruct the sample poses of a path."""
    points, headings = reconstruct_arrays(path)
    return [Pose(float(p[0]), float(p[1]), wrap_angle(float(h)))
            for p, h in zip(points, headings)]


def curvatures_from_headings(headings: np.ndarray, ds: float) -> np.ndarray:
    """Exact inverse of reconstruction given the sample headings."""
    return wrap_angles(np.diff(np.asarray(headings, dtype=float))) / ds


def polyline_length(points: np.ndarray) -> float:
    """Total length of a polyline given as an (n, 2) array."""
    seg = np.diff(np.asarray(points, dtype=float), axis=0)
    return float(np.sum(np.hypot(seg[:, 0], seg[:, 1])))


def resample_path(points, ds: float) -> PolyPath:
    """Resample a polyline of (x, y) points into a uniform curvature profile.

    The polyline's tangent direction is treated as a staircase over arc
    length, extended past both ends by linear extrapolation, and smoothed
    with a quadratic B-spline kernel of support 3*ds (two exact box filters).
    Segment curvatures are exact differences of that smoothed direction at
    ds spacing, so uniform-chord polylines produced by ``reconstruct`` round
    trip exactly away from curvature discontinuities, while polylines much
    finer than ds are estimated without phase aliasing. When the total length
    is not a multiple of ds, the tail is padded along the extrapolated
    direction.
    """
    if ds <= 0.0 or not math.isfinite(ds):
        raise PathInputError(f"ds must be positive and finite, got {ds}")
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
        raise PathInputError("need at least two (x, y) points")
    if not np.all(np.isfinite(pts)):
        raise PathInputError("points must be finite")
    seg = np.diff(pts, axis=0)
    seg_len = np.hypot(seg[:, 0], seg[:, 1])
    keep = seg_len > 0.0
    if not np.any(keep):
        raise PathInputError("polyline has zero length")
    # Drop coincident points so the staircase has strictly positive steps.
    pts = np.vstack((pts[:1], pts[1:][keep]))
    seg = np.diff(pts, axis=0)
    seg_len = np.hypot(seg[:, 0], seg[:, 1])
    total = float(np.sum(seg_len))
    n_seg = max(1, int(round(total / ds)))
    alpha = np.unwrap(np.arctan2(seg[:, 1], seg[:, 0]))

    # Pad the direction staircase at both ends, stepping at the local side
    # length and continuing the local turn rate, so smoothing windows that
    # reach past an end see a natural continuation of the path.
    lo_step = alpha[1] - alpha[0] if alpha.size >= 2 else 0.0
    hi_step = alpha[-1] - alpha[-2] if alpha.size >= 2 else 0.0
    n_lo = int(math.ceil(2.5 * ds / seg_len[0])) + 1
    tail_need = (n_seg + 2.5) * ds - total
    n_hi = max(1, int(math.ceil(tail_need / seg_len[-1])) + 1)
    lengths = np.concatenate((np.full(n_lo, seg_len[0]), seg_len,
                              np.full(n_hi, seg_len[-1])))
    angles = np.concatenate((alpha[0] - lo_step * np.arange(n_lo, 0, -1),
                             alpha, alpha[-1] + hi_step * np.arange(1, n_hi + 1)))
    nodes = -n_lo * seg_len[0] + np.concatenate(([0.0], np.cumsum(lengths)))

    # I = integral of the direction staircase, J = integral of I; both exact
    # piecewise polynomials. The twice-box-smoothed direction at b is then
    # (J(b+ds) - 2 J(b) + J(b-ds)) / ds^2.
    i_nodes = np.concatenate(([0.0], np.cumsum(angles * lengths)))
    j_nodes = np.concatenate(([0.0], np.cumsum(i_nodes[:-1] * lengths
                                               + 0.5 * angles * lengths ** 2)))

    def smoothed_heading(b):
        b = np.asarray(b, dtype=float)
        j_vals = []
        for off in (-ds, 0.0, ds):
            v = np.clip(np.searchsorted(nodes, b + off, side="right") - 1,
                        0, lengths.size - 1)
            d = b + off - nodes[v]
            j_vals.append(j_nodes[v] + i_nodes[v] * d + 0.5 * angles[v] * d * d)
        return (j_vals[2] - 2.0 * j_vals[1] + j_vals[0]) / (ds * ds)

    theta = smoothed_heading(ds * np.arange(n_seg + 1))
    curvatures = np.diff(theta) / ds
    start = Pose(float(pts[0, 0]), float(pts[0, 1]), wrap_angle(float(theta[0])))
    return PolyPath(start=start, ds=ds, curvatures=curvatures)


def path_to_points_json(path: PolyPath) -> list[list[float]]:
    """Path interchange format: JSON-ready list of [x, y] pairs."""
    points, _ = reconstruct_arrays(path)
    return [[float(px), float(py)] for px, py in points]
