import numpy as np
import pytest

from dynagrasp.conveyor import pose_at
from dynagrasp.geom2d import Segment, collide, distance
from dynagrasp.scenes import (
    SETUP_KINDS,
    Scene,
    SceneGenerationError,
    make_scene,
    object_shape_at,
    observed_obstacles,
    scene_from_text,
    scene_to_text,
)
from dynagrasp.conveyor import corridor_polyline
from dynagrasp._fastcol import config_free, pack_obstacles
from dynagrasp.arm import ArmModel


def _polyline_distance(shape, params):
    poly = corridor_polyline(params)
    return min(
        distance(Segment(tuple(poly[i]), tuple(poly[i + 1])), shape)
        for i in range(len(poly) - 1)
    )


def test_blocks_3_6_counts():
    counts = set()
    for seed in range(300):
        s = make_scene("blocks_3_6", np.random.default_rng(seed))
        counts.add(len(s.obstacles))
        assert 3 <= len(s.obstacles) <= 6
    assert counts == {3, 4, 5, 6}


def test_blocks_7_9_counts():
    counts = set()
    for seed in range(150):
        s = make_scene("blocks_7_9", np.random.default_rng(seed))
        counts.add(len(s.obstacles))
        assert 7 <= len(s.obstacles) <= 9
    assert counts == {7, 8, 9}


def test_block_dims_in_range():
    for seed in range(50):
        s = make_scene("blocks_3_6", np.random.default_rng(seed))
        for ob in s.obstacles:
            assert 0.025 <= ob.half_w <= 0.075
            assert 0.025 <= ob.half_h <= 0.075


def test_obstacles_clear_of_corridor():
    for seed in range(60):
        s = make_scene("blocks_3_6", np.random.default_rng(seed))
        for ob in s.obstacles:
            assert _polyline_distance(ob, s.trajectory) >= 0.10 - 1e-12


def test_household_never_circular():
    for seed in range(100):
        s = make_scene("household", np.random.default_rng(seed))
        assert s.trajectory.family in ("linear", "sinusoidal", "rectangular")
        assert len(s.obstacles) == 3


def test_cluttered_household_structure():
    s = make_scene("cluttered_household", np.random.default_rng(0))
    assert s.trajectory.family == "circular"
    from dynagrasp.geom2d import Circle, OrientedRect

    circles = [o for o in s.obstacles if isinstance(o, Circle)]
    rects = [o for o in s.obstacles if isinstance(o, OrientedRect)]
    assert len(circles) == 5
    assert len(rects) == 15
    # ring parts are identical in size
    assert len({(r.half_w, r.half_h) for r in rects}) == 1
    for c in circles:
        assert 0.03 <= c.radius <= 0.06


def test_corridor_guarantee_object_never_collides():
    for kind in SETUP_KINDS:
        for seed in range(12):
            s = make_scene(kind, np.random.default_rng(seed))
            for t in np.linspace(0.0, s.trajectory.duration, 100):
                obj = object_shape_at(s.object_spec, pose_at(s.trajectory, t))
                for ob in s.obstacles:
                    assert not collide(obj, ob), (kind, seed, t)


def test_arm_init_collision_free_and_within_limits():
    model = ArmModel()
    lengths = np.asarray(model.link_lengths)
    for kind in SETUP_KINDS:
        for seed in range(15):
            s = make_scene(kind, np.random.default_rng(seed))
            assert model.within_limits(s.arm_init)
            circs, rects = s.packed
            assert config_free(s.arm_init, lengths, 0.0, 0.0, 0.0, model.link_radius, circs, rects)


def test_determinism_per_seed():
    for kind in SETUP_KINDS:
        a = make_scene(kind, np.random.default_rng(123))
        b = make_scene(kind, np.random.default_rng(123))
        assert scene_to_text(a) == scene_to_text(b)


def test_n_obstacles_override():
    for n in (0, 1, 9):
        s = make_scene("blocks_3_6", np.random.default_rng(5), n_obstacles=n)
        assert len(s.obstacles) == n


def test_observed_copies_differ_but_match_statistics():
    rng = np.random.default_rng(0)
    s = make_scene("blocks_3_6", rng, n_obstacles=5)
    assert len(s.observed) == 5
    # noise statistics over many draws
    base = s.obstacles[0]
    n = 20_000
    draws = np.empty(n)
    rng2 = np.random.default_rng(1)
    for i in range(n):
        ob = observed_obstacles([base], rng2)[0]
        draws[i] = ob.pose.x
    assert abs(draws.std() - 0.010) < 0.0003
    assert abs(draws.mean() - base.pose.x) < 3e-4


def test_observed_dims_floored():
    from dynagrasp.geom2d import Circle

    tiny = Circle((0.0, 0.5), 0.006)
    rng = np.random.default_rng(2)
    for _ in range(500):
        ob = observed_obstacles([tiny], rng)[0]
        assert ob.radius >= 0.005


def test_scene_text_roundtrip():
    s = make_scene("cluttered_household", np.random.default_rng(9))
    text = scene_to_text(s)
    s2 = scene_from_text(text)
    assert scene_to_text(s2) == text
    assert s2.setup_kind == s.setup_kind
    assert s2.trajectory == s.trajectory
    assert s2.object_spec.shape_id == s.object_spec.shape_id
    assert np.array_equal(s2.arm_init, s.arm_init)
    assert s2.obstacles == s.obstacles
    assert s2.observed == s.observed


def test_unknown_kind_rejected():
    with pytest.raises(ValueError):
        make_scene("warehouse", np.random.default_rng(0))
