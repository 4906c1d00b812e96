import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deepmotion.dataset import AgentTrack, ObstacleMap, TrajectoryDataset
from deepmotion.lidar import SceneSnapshot
from deepmotion.rollout import SfmPolicy, rollout
from deepmotion.sfm import SfmParams, closest_points, sfm_acceleration, sfm_policy_step

P = SfmParams()


def _agents(*points):
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    return SceneSnapshot(ObstacleMap(), np.arange(len(pts)), pts)


def _rot(v, deg):
    th = math.radians(deg)
    r = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
    return np.asarray(v, dtype=float) @ r.T


def test_params_must_be_positive():
    with pytest.raises(ValueError):
        SfmParams(desired_speed=0.0)
    with pytest.raises(ValueError):
        SfmParams(obstacle_range=-1.0)


def test_drive_only():
    a = sfm_acceleration((0, 0), (0, 0), (5, 0), _agents(), P)
    np.testing.assert_allclose(a, [P.desired_speed / P.relaxation_time, 0.0])


def test_mirror_neighbours_cancel_laterally():
    a = sfm_acceleration((0, 0), (0.3, 0), (5, 0), _agents((1, 0.7), (1, -0.7)), P)
    assert abs(a[1]) < 1e-12
    assert a[0] < P.desired_speed / P.relaxation_time  # pushed back, not sideways


def test_drive_fixed_point():
    a = sfm_acceleration((1, 1), (0, P.desired_speed), (1, 9), _agents(), P)
    np.testing.assert_array_equal(a, [0.0, 0.0])


def test_coincident_agent_pushes_along_x():
    a = sfm_acceleration((2, 2), (0, 0), (2, 2), _agents((2, 2)), P)
    expected = P.agent_strength * math.exp(2 * 0.2 / P.agent_range)
    np.testing.assert_allclose(a, [expected, 0.0])


def test_wall_repulsion_uses_nearest_point():
    scene = SceneSnapshot(ObstacleMap(np.array([[-5.0, 1.0, 5.0, 1.0]])))
    np.testing.assert_allclose(closest_points(np.array([2.0, 0.0]), scene.map.segments), [[2.0, 1.0]])
    a = sfm_acceleration((2, 0), (0, 0), (2, 0), scene, P)
    expected = P.obstacle_strength * math.exp((0.2 - 1.0) / P.obstacle_range)
    np.testing.assert_allclose(a, [0.0, -expected], atol=1e-15)


def test_policy_step_at_target_stops():
    h, s = sfm_policy_step((0, 0), (1, 0), (0.1, 0), _agents(), P, 0.4)
    assert s == 0.0
    with pytest.raises(ValueError):
        sfm_policy_step((0, 0), (0, 0), (5, 0), _agents(), P, 0.0)


def test_policy_step_clamps_speed():
    h, s = sfm_policy_step((0, 0), (10, 0), (50, 0), _agents(), P, 0.4)
    assert s == pytest.approx(P.max_speed) and h == pytest.approx(0.0)


def _empty_trials(n, seed):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        start = rng.uniform(-10, 10, 2)
        goal = rng.uniform(-10, 10, 2)
        track = AgentTrack(i, [0.0, 0.4], [start, goal])
        out.append(TrajectoryDataset([track], ObstacleMap(), 0.4))
    return out


def test_empty_map_always_reaches_target():
    for ds in _empty_trials(20, seed=77):
        res = rollout(SfmPolicy(), ds, ds.ids[0])
        assert res.reached and res.steps <= 400
        assert np.hypot(*(res.robot_path[-1] - res.target)) <= 0.5


def dense_ring(n=24, radius=1.0):
    ang = np.linspace(0, 2 * np.pi, n, endpoint=False)
    return _agents(*np.column_stack([radius * np.cos(ang), radius * np.sin(ang)]))


def ring_speeds(steps=40, dt=0.4):
    scene = dense_ring()
    pos, vel, speeds = np.zeros(2), np.zeros(2), []
    for _ in range(steps):
        h, s = sfm_policy_step(pos, vel, (10.0, 0.0), scene, P, dt)
        vel = s * np.array([math.cos(math.radians(h)), math.sin(math.radians(h))])
        pos = pos + vel * dt
        speeds.append(s)
    return np.array(speeds), pos


def test_dense_ring_stops_the_walker():
    speeds, pos = ring_speeds()
    assert np.hypot(*pos) < 1.0 - 0.4  # still inside the ring, clear of its members
    assert np.all(speeds[10:] < 0.1)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.05, 5.0), st.floats(0.05, 5.0))
def test_repulsion_decreases_with_distance(d1, d2):
    if abs(d1 - d2) < 1e-6:
        return
    near, far = sorted((d1, d2))
    for scene_at in (lambda d: _agents((d, 0)),
                     lambda d: SceneSnapshot(ObstacleMap(np.array([[d, -1.0, d, 1.0]])))):
        # zero drive: velocity equals the desired velocity toward a target behind the source
        def push(d):
            a = sfm_acceleration((0, 0), (-P.desired_speed, 0), (-10, 0), scene_at(d), P)
            return np.hypot(*a)

        assert push(near) > push(far)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0, 360))
def test_acceleration_rotation_equivariant(seed, deg):
    rng = np.random.default_rng(seed)
    pos, vel, target = rng.uniform(-3, 3, (3, 2))
    others = rng.uniform(-3, 3, (4, 2))
    segs = rng.uniform(-3, 3, (2, 4))
    scene = SceneSnapshot(ObstacleMap(segs), np.arange(4), others)
    rsegs = np.hstack([_rot(segs[:, :2], deg), _rot(segs[:, 2:], deg)])
    rscene = SceneSnapshot(ObstacleMap(rsegs), np.arange(4), _rot(others, deg))
    a = sfm_acceleration(pos, vel, target, scene, P)
    ra = sfm_acceleration(_rot(pos, deg), _rot(vel, deg), _rot(target, deg), rscene, P)
    np.testing.assert_allclose(ra, _rot(a, deg), atol=1e-9 * max(1.0, np.hypot(*a)))
