import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from telewalk.compression import (
    CompressionConfig,
    Correspondence,
    GuidanceState,
    InfeasibleRoomError,
    RoomSpec,
    guidance_step,
    map_pose,
    max_violation,
    pose_on_path,
    predict_target_path,
    project_onto_path,
    transform_path,
)
from telewalk.geometry import PolyPath, Pose, reconstruct_arrays, turning_angle, wrap_angle

ROOM = RoomSpec(4.0, 4.0, 0.3)


def straight_target(length, ds=0.05, start=Pose(0, 0, 0)):
    n = round(length / ds)
    return PolyPath(start, length / n, np.zeros(n))


class TestRoomSpec:
    def test_rejects_margin_dominated_room(self):
        with pytest.raises(ValueError):
            RoomSpec(0.5, 4.0, 0.3)

    def test_bounds_and_clamp(self):
        assert ROOM.bounds == (0.3, 3.7, 0.3, 3.7)
        assert ROOM.contains(2, 2)
        assert not ROOM.contains(3.9, 2)
        assert ROOM.clamp(5.0, -1.0) == (3.7, 0.3)


class TestPredict:
    def test_no_goals_straight_ray(self):
        path = predict_target_path(Pose(0, 0, 0), horizon=3.0)
        pts, _ = reconstruct_arrays(path)
        assert path.length == pytest.approx(3.0)
        assert np.all(path.curvatures == 0)
        assert pts[-1] == pytest.approx([3.0, 0.0])

    def test_goal_on_axis_is_straight(self):
        path = predict_target_path(Pose(0, 0, 0), goals=[(3.0, 0.0)])
        assert np.allclose(path.curvatures, 0.0)
        pts, _ = reconstruct_arrays(path)
        assert pts[-1] == pytest.approx([3.0, 0.0], abs=1e-9)

    def test_goal_outside_window_falls_back(self):
        # 45 degrees off-axis is outside the default 30 degree window.
        path = predict_target_path(Pose(0, 0, 0), goals=[(2.0, 2.0)], horizon=3.0)
        assert np.all(path.curvatures == 0)
        assert path.length == pytest.approx(3.0)

    def test_goal_inside_wide_window_yields_arc(self):
        path = predict_target_path(Pose(0, 0, 0), goals=[(2.0, 2.0)],
                                   goal_window=math.radians(60))
        assert np.allclose(path.curvatures, path.curvatures[0])
        pts, _ = reconstruct_arrays(path)
        assert pts[-1] == pytest.approx([2.0, 2.0], abs=1e-6)

    def test_rejects_non_positive_horizon(self):
        with pytest.raises(ValueError):
            predict_target_path(Pose(0, 0, 0), horizon=0.0)


class TestTransform:
    def test_already_feasible_returns_target_profile(self):
        target = straight_target(2.0, start=Pose(2, 2, 0.7))
        corr = transform_path(target, ROOM, Pose(0.5, 0.5, 0.7))
        assert corr.objective_value == 0.0
        assert np.array_equal(corr.user_path.curvatures, target.curvatures)

    def test_long_straight_fits_room(self):
        target = straight_target(12.0)
        corr = transform_path(target, ROOM, Pose(2, 2, 0.7))
        assert abs(corr.user_path.length - 12.0) <= 1e-9
        assert abs(turning_angle(corr.user_path)) <= 1e-9
        assert max_violation(corr.user_points, ROOM) <= 1e-3

    def test_right_angle_route_preserves_turn(self):
        k = np.zeros(240)
        k[120] = (math.pi / 2) / 0.05  # quarter turn between two 6 m legs
        target = PolyPath(Pose(0, 0, 0), 0.05, k)
        corr = transform_path(target, ROOM, Pose(2, 2, -0.4))
        assert abs(corr.user_path.length - 12.0) <= 1e-9
        assert turning_angle(corr.user_path) == pytest.approx(math.pi / 2, abs=1e-9)
        assert max_violation(corr.user_points, ROOM) <= 1e-3

    def test_start_outside_feasible_region_rejected(self):
        with pytest.raises(ValueError):
            transform_path(straight_target(5.0), ROOM, Pose(0.1, 2, 0))

    def test_infeasibility_reported_with_residual(self):
        # An exhausted penalty schedule reports the leftover boundary
        # violation; a fully starved schedule cannot move the initial guess.
        cfg = CompressionConfig(penalty_rounds=1, inner_iterations=0)
        with pytest.raises(InfeasibleRoomError) as exc:
            transform_path(straight_target(12.0), ROOM, Pose(2, 2, 0), config=cfg)
        assert exc.value.residual > 1e-3

    def test_correspondence_validates_turning_match(self):
        a = PolyPath(Pose(0, 0, 0), 0.05, np.zeros(10))
        b = PolyPath(Pose(0, 0, 0), 0.05, np.full(10, 0.1))
        with pytest.raises(ValueError):
            Correspondence(a, b, 0.0)


@pytest.fixture(scope="module")
def curved_corr():
    return transform_path(straight_target(12.0), ROOM, Pose(2, 2, 0.7))


class TestMapPose:
    def test_start_maps_to_start(self, curved_corr):
        user0 = Pose(*curved_corr.user_points[0],
                     curved_corr.user_tangents[0])
        mapped = map_pose(user0, curved_corr)
        assert (mapped.x, mapped.y) == pytest.approx((0.0, 0.0), abs=1e-9)

    def test_identity_correspondence(self):
        target = straight_target(6.0, start=Pose(1, 1, 0.3))
        ident = Correspondence(target, target, 0.0)
        pose = Pose(3.0, 1.7, 0.5)
        mapped = map_pose(pose, ident)
        assert (mapped.x, mapped.y, mapped.heading) == pytest.approx(
            (pose.x, pose.y, pose.heading), abs=1e-9)

    def test_lateral_offset_preserved(self, curved_corr):
        # User 0.1 m left of the user path at s = 5 m; frame-algebra oracle on
        # the straight target: pose 0.1 m left of the tangent at arc length 5.
        i = 100  # s = 5.0 at ds = 0.05
        tangent = float(curved_corr.user_tangents[i])
        base = curved_corr.user_points[i]
        user = Pose(base[0] - 0.1 * math.sin(tangent),
                    base[1] + 0.1 * math.cos(tangent), tangent)
        mapped = map_pose(user, curved_corr)
        assert (mapped.x, mapped.y) == pytest.approx((5.0, 0.1), abs=5e-3)
        assert mapped.heading == pytest.approx(0.0, abs=0.05)

    def test_round_trip_identity(self):
        # Bijectivity holds where the projection is unique, so use a route
        # short enough that its user path never revisits its own 0.5 m tube.
        corr = transform_path(straight_target(6.0), ROOM, Pose(2, 2, 0.7))
        inverse = corr.swapped()
        rng = np.random.default_rng(7)
        for _ in range(50):
            u = rng.uniform(3, corr.user_path.n_segments - 3)
            lat = rng.uniform(-0.4, 0.4)
            phi = rng.uniform(-1.0, 1.0)
            pose = pose_on_path(corr.user_points, corr.user_tangents, u, lat, phi)
            back = map_pose(map_pose(pose, corr), inverse)
            assert (back.x, back.y) == pytest.approx((pose.x, pose.y), abs=1e-6)
            assert wrap_angle(back.heading - pose.heading) == pytest.approx(0, abs=1e-6)

    def test_projection_tie_break_smallest_arc_length(self):
        # A path that doubles back: points equidistant to both legs resolve
        # to the first (smallest arc length) segment.
        pts = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0],
                        [2.0, 0.2], [1.0, 0.2], [0.0, 0.2]])
        tangents = np.array([0.0, 0.0, math.pi / 2, math.pi, math.pi])
        u, lat, _ = project_onto_path(pts, tangents, Pose(0.5, 0.1, 0.0))
        assert u <= 1.0


class TestGuidance:
    def test_on_path_no_offset(self, curved_corr):
        # Mid-segment pose aligned with the local tangent.
        pose = pose_on_path(curved_corr.user_points, curved_corr.user_tangents,
                            40.5, 0.0, 0.0)
        state = guidance_step(pose, curved_corr, GuidanceState(), dt=10.0)
        assert state.injected_offset == pytest.approx(0.0, abs=1e-12)

    def test_cross_track_gain_sign(self):
        target = straight_target(6.0)
        ident = Correspondence(target, target, 0.0)
        cfg = CompressionConfig(gain_cross_track=0.1, gain_heading=0.0)
        pose = Pose(3.0, 0.2, 0.0)  # 0.2 m left of the path
        state = guidance_step(pose, ident, GuidanceState(), dt=100.0, config=cfg)
        assert state.cross_track_error == pytest.approx(0.2, abs=1e-9)
        assert state.injected_offset == pytest.approx(-0.02, abs=1e-9)

    def test_offset_clamped(self):
        target = straight_target(6.0)
        ident = Correspondence(target, target, 0.0)
        cfg = CompressionConfig(gain_cross_track=1.0, gain_heading=0.0)
        pose = Pose(3.0, -0.5, 0.0)
        state = guidance_step(pose, ident, GuidanceState(), dt=100.0, config=cfg)
        assert state.injected_offset == pytest.approx(cfg.offset_max)

    def test_rate_limited(self):
        target = straight_target(6.0)
        ident = Correspondence(target, target, 0.0)
        cfg = CompressionConfig(gain_cross_track=1.0, gain_heading=0.0)
        pose = Pose(3.0, 0.5, 0.0)
        state = guidance_step(pose, ident, GuidanceState(), dt=0.02, config=cfg)
        assert state.injected_offset == pytest.approx(-cfg.rate_max * 0.02)

    @given(x=st.floats(0, 6), y=st.floats(-2, 2), heading=st.floats(-3.1, 3.1),
           prev=st.floats(-0.0349, 0.0349), dt=st.floats(0.001, 1.0))
    @settings(max_examples=100, deadline=None)
    def test_offset_always_bounded_and_rate_limited(self, x, y, heading, prev, dt):
        target = straight_target(6.0)
        ident = Correspondence(target, target, 0.0)
        cfg = CompressionConfig()
        state = guidance_step(Pose(x, y, heading), ident,
                              GuidanceState(injected_offset=prev), dt, config=cfg)
        assert abs(state.injected_offset) <= cfg.offset_max + 1e-12
        assert abs(state.injected_offset - prev) <= cfg.rate_max * dt + 1e-12


def test_config_from_dict_rejects_unknown_keys():
    with pytest.raises(ValueError):
        CompressionConfig.from_dict({"dz": 1.0})
    cfg = CompressionConfig.from_dict({"ds": 0.1, "horizon": 5.0})
    assert cfg.ds == 0.1 and cfg.horizon == 5.0


def test_penalty_gradient_matches_finite_differences():
    from telewalk.compression import _penalized_grad, _penalized_value

    rng = np.random.default_rng(0)
    n, ds = 40, 0.05
    kt = rng.uniform(-1, 1, n)
    k = rng.uniform(-1, 1, n)
    start = Pose(1.9, 2.1, 0.6)
    bounds = ROOM.bounds
    w = 17.0
    _, pts = _penalized_value(k, kt, ds, start, bounds, w)
    mids = 0.5 * (pts[:-1] + pts[1:])
    grad = _penalized_grad(k, kt, ds, start, bounds, w, pts, mids)
    eps = 1e-7
    for i in range(0, n, 7):
        kp, km = k.copy(), k.copy()
        kp[i] += eps
        km[i] -= eps
        vp, _ = _penalized_value(kp, kt, ds, start, bounds, w)
        vm, _ = _penalized_value(km, kt, ds, start, bounds, w)
        assert grad[i] == pytest.approx((vp - vm) / (2 * eps), rel=1e-4, abs=1e-6)
