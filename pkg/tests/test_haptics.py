import math
from dataclasses import replace

import numpy as np
import pytest

from telewalk.crowd import Pedestrian, World, pair_force, wall_force
from telewalk.haptics import ForceSample, avatar_force, transform_force
from telewalk.scenario import Gate, Scenario, SocialForceParams

NO_PSYCH = SocialForceParams(repulsion_strength=0.0)


def make_world(force_params=None, walls=None):
    sc = Scenario(
        walls=walls if walls is not None else np.zeros((0, 4)),
        gates=[Gate(0, 50, -0.5, 50, 0.5)],
        spawn_surface=[[100, 100], [101, 100], [101, 101], [100, 101]],
        goal_surface=[[103, 100], [104, 100], [104, 101], [103, 101]],
        spawn_count=0,
        force_params=force_params or SocialForceParams(),
        name="haptics")
    return World(sc)


class TestForceSample:
    def test_contact_free_must_be_zero(self):
        with pytest.raises(ValueError):
            ForceSample(1.0, 0.0, in_contact=False, frame="target")

    def test_rejects_bad_frame_and_nonfinite(self):
        with pytest.raises(ValueError):
            ForceSample(0, 0, in_contact=False, frame="world")
        with pytest.raises(ValueError):
            ForceSample(math.inf, 0, in_contact=True, frame="user")


class TestAvatarForce:
    def test_zero_without_overlap(self):
        w = make_world()
        w.add_pedestrian((1.0, 0.0))  # 1 m away, no overlap
        w.set_avatar(0.0, 0.0, radius=0.3)
        f = avatar_force(w)
        assert not f.in_contact
        assert f.fx == 0.0 and f.fy == 0.0
        assert f.frame == "target"

    def test_overlap_magnitude_matches_pair_oracle(self):
        # Overlap 0.01 m, psychological term off, static: 1200 N along the
        # separation normal.
        w = make_world(force_params=NO_PSYCH)
        w.add_pedestrian((0.59, 0.0), radius=0.3)
        w.set_avatar(0.0, 0.0, radius=0.3)
        f = avatar_force(w)
        assert f.in_contact
        assert f.magnitude == pytest.approx(1200.0)
        assert f.fx == pytest.approx(-1200.0)

    def test_simultaneous_wall_and_pedestrian_superpose(self):
        wall = np.array([[0.0, -5.0, 0.0, 5.0]])
        w = make_world(walls=wall)
        w.add_pedestrian((0.8, 0.1), radius=0.3)
        w.set_avatar(0.25, 0.0, radius=0.3)  # overlaps both wall and pedestrian
        f = avatar_force(w)
        assert f.in_contact
        avatar = Pedestrian(pid=10_000, position=np.array([0.25, 0.0]),
                            velocity=np.zeros(2), radius=0.3)
        other = Pedestrian(pid=0, position=np.array([0.8, 0.1]),
                           velocity=np.zeros(2), radius=0.3)
        expected = pair_force(avatar, other) + wall_force(avatar, wall[0])
        assert abs(f.fx - expected[0]) <= 1e-12 * max(1.0, abs(expected[0]))
        assert abs(f.fy - expected[1]) <= 1e-12 * max(1.0, abs(expected[1]))

    def test_requires_avatar(self):
        w = make_world()
        with pytest.raises(ValueError):
            avatar_force(w)

    def test_zero_whenever_no_overlap_fuzz(self):
        rng = np.random.default_rng(3)
        w = make_world()
        for pid in range(12):
            w.add_pedestrian(rng.uniform(-4, 4, 2), radius=0.3)
        w.set_avatar(0.0, 0.0, radius=0.3)
        active = np.flatnonzero(w.phase < World.PHASE_EXITED)
        d = np.hypot(*(w.pos[active] - w.avatar_pos).T)
        overlaps = bool(np.any(d < w.radius[active] + w.avatar_radius))
        f = avatar_force(w)
        assert f.in_contact == overlaps
        if not overlaps:
            assert f.magnitude == 0.0


class TestTransformForce:
    def test_zero_force(self):
        f = transform_force(ForceSample(0, 0, False, "target"), 0.3, 2.2)
        assert f.fx == 0.0 and f.fy == 0.0 and f.frame == "user"

    def test_rotation_example(self):
        # 5 N at +30 deg to the target tangent; tangents differ by 90 deg.
        tt = 0.0
        ut = math.pi / 2
        fin = ForceSample(5 * math.cos(math.radians(30)),
                          5 * math.sin(math.radians(30)), True, "target")
        out = transform_force(fin, tt, ut)
        assert out.magnitude == pytest.approx(5.0, abs=1e-12)
        rel = math.atan2(out.fy, out.fx) - ut
        assert rel == pytest.approx(math.radians(30), abs=1e-12)

    def test_rejects_user_frame_input(self):
        with pytest.raises(ValueError):
            transform_force(ForceSample(0, 0, False, "user"), 0.0, 1.0)

    def test_fuzz_magnitude_and_relative_angle(self):
        # Smaller sibling of the acceptance fuzz (10^6 samples there).
        rng = np.random.default_rng(11)
        n = 100_000
        mags = rng.uniform(0, 1000, n)
        angs = rng.uniform(-math.pi, math.pi, n)
        tts = rng.uniform(-math.pi, math.pi, n)
        uts = rng.uniform(-math.pi, math.pi, n)
        for k in range(0, n, 977):
            fin = ForceSample(mags[k] * math.cos(angs[k]),
                              mags[k] * math.sin(angs[k]), True, "target")
            out = transform_force(fin, tts[k], uts[k])
            assert abs(out.magnitude - fin.magnitude) <= 1e-12
            if mags[k] > 1e-9:
                rel_in = (angs[k] - tts[k]) % (2 * math.pi)
                rel_out = (math.atan2(out.fy, out.fx) - uts[k]) % (2 * math.pi)
                diff = (rel_out - rel_in) % (2 * math.pi)
                assert min(diff, 2 * math.pi - diff) <= 1e-12

    def test_round_trip_identity(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            fx, fy = rng.uniform(-500, 500, 2)
            tt, ut = rng.uniform(-math.pi, math.pi, 2)
            fin = ForceSample(fx, fy, True, "target")
            out = transform_force(fin, tt, ut)
            back = transform_force(replace(out, frame="target"), ut, tt)
            assert abs(back.fx - fin.fx) <= 1e-12 * max(1.0, abs(fin.fx))
            assert abs(back.fy - fin.fy) <= 1e-12 * max(1.0, abs(fin.fy))
