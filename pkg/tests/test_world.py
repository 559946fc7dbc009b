import math
from dataclasses import replace

import numpy as np
import pytest

from rollerhand import rng
from rollerhand.controller import HandcraftedPolicy, TargetSpec, run_episode
from rollerhand.core import (
    AngleAxis, GrasperConfig, Pose, cube, quat_from_angle_axis, quat_from_rotvec, quat_mul,
    sphere,
)
from rollerhand.world import (
    NOISELESS, AlreadyDropped, GraspEnv, SensorModel, Unreachable, _measure, check_drop,
    init_grasp, read_sensors, step,
)

CFG = GrasperConfig()
START = Pose([0.0, 0.0, 170.0])


@pytest.fixture(scope="module")
def ball():
    return init_grasp(CFG, sphere(30.0), START)


def test_centered_sphere_grasp_is_symmetric(ball):
    bases = ball.joints[0::3]
    assert np.ptp(bases) < 1e-9
    assert not np.any(ball.joints[1::3]) and not np.any(ball.joints[2::3])
    assert all(abs(c.gap) < 1e-6 for c in ball.contacts)
    assert not ball.dropped


def test_far_object_is_unreachable():
    with pytest.raises(Unreachable):
        init_grasp(CFG, sphere(30.0), Pose([1000.0, 0.0, 170.0]))


def test_grasp_is_deterministic(ball):
    again = init_grasp(CFG, sphere(30.0), START)
    assert again.same_as(ball)


def test_normal_weight_range_checked():
    with pytest.raises(ValueError):
        init_grasp(CFG, sphere(30.0), START, normal_weight=1.5)


def test_zero_motion_keeps_pose(ball):
    nxt = step(ball, ball.joints)
    assert nxt.object == ball.object
    assert nxt.residuals == (0.0, 0.0, 0.0)
    assert nxt.step_index == 1
    assert nxt.previous_object == ball.object


def test_equal_roller_spin_yaws_without_slip(ball):
    j = ball.joints.copy()
    j[2::3] += 0.1
    nxt = step(ball, j)
    q = nxt.object.orientation
    # pure rotation about the vertical axis
    assert abs(q[1]) < 1e-9 and abs(q[2]) < 1e-9 and abs(q[3]) > 1e-3
    assert np.allclose(nxt.object.position, START.position, atol=1e-9)
    assert max(nxt.residuals) < 1e-9


def test_opposite_roller_slips_under_full_objective():
    s = init_grasp(CFG, sphere(30.0), START, normal_weight=1.0)
    j = s.joints.copy()
    j[2] += 0.1
    j[5] -= 0.1
    j[8] -= 0.1
    nxt = step(s, j)
    assert max(nxt.residuals) > 1e-3


def test_opposite_roller_is_absorbed_by_compliant_normals(ball):
    j = ball.joints.copy()
    j[2] += 0.1
    j[5] -= 0.1
    j[8] -= 0.1
    nxt = step(ball, j)
    assert max(nxt.residuals) < 1e-9


def test_rate_limits_applied(ball):
    j = ball.joints.copy()
    j[1::3] += 1.0
    j[2::3] += 5.0
    nxt = step(ball, j)
    assert np.allclose(nxt.joints[1::3] - ball.joints[1::3], CFG.pivot_rate_limit)
    assert np.allclose(nxt.joints[2::3] - ball.joints[2::3], CFG.roller_rate_limit)


def test_base_joints_never_penetrate(ball):
    j = ball.joints.copy()
    j[0::3] += 0.5
    nxt = step(ball, j)
    assert all(c.gap >= -1e-6 for c in nxt.contacts)


def test_step_after_drop_raises(ball):
    gone = replace(ball, dropped=True)
    with pytest.raises(AlreadyDropped):
        step(gone, ball.joints)


def test_drop_rule(ball):
    assert not check_drop(ball)
    low = replace(ball, object=Pose(START.position - [0, 0, 100.0]))
    assert check_drop(low)
    c0 = ball.contacts[0]
    near = replace(ball, contacts=(replace(c0, gap=4.0), *ball.contacts[1:]))
    assert not check_drop(near)
    far = replace(ball, contacts=(replace(c0, gap=5.5), *ball.contacts[1:]))
    assert check_drop(far)


def test_noiseless_sensors_report_truth(ball):
    f = read_sensors(ball)
    assert f.object_pose_meas == ball.object
    assert np.array_equal(f.joints_meas, ball.joints)


def test_sensor_noise_is_repeatable():
    s = init_grasp(CFG, sphere(30.0), START, seed=9, sensors=SensorModel())
    a, b = read_sensors(s), read_sensors(s)
    assert a.object_pose_meas == b.object_pose_meas
    other = init_grasp(CFG, sphere(30.0), START, seed=10, sensors=SensorModel())
    assert read_sensors(other).object_pose_meas != a.object_pose_meas


def test_previous_measurement_is_prior_sensor_frame(ball):
    s = replace(ball, sensors=SensorModel(), rng_seed=4)
    j = s.joints.copy()
    j[2::3] += 0.1
    s1 = step(s, j)
    assert read_sensors(s1).previous_object_pose_meas == read_sensors(s).object_pose_meas


def test_position_noise_std():
    model = SensorModel(1.0, 0.0)
    d = np.array([_measure(START, model, 123, k).position - START.position
                  for k in range(10_000)])
    assert abs(d.std() - 1.0) < 0.05
    assert abs(d.mean()) < 0.05


def test_angle_noise_scale():
    model = SensorModel(0.0, math.radians(1.0))
    ang = []
    for k in range(4000):
        q = _measure(START, model, 7, k).orientation
        ang.append(2.0 * math.atan2(np.linalg.norm(q[1:]), abs(q[0])))
    # |N(0, s)| has rms s
    rms = math.sqrt(np.mean(np.square(ang)))
    assert abs(rms - math.radians(1.0)) < 0.05 * math.radians(1.0)


def test_same_commands_give_identical_states():
    g = np.random.default_rng(1)
    cmds = [g.normal(scale=0.05, size=9) for _ in range(30)]

    def roll():
        s = init_grasp(CFG, cube(), START, seed=3, sensors=SensorModel())
        out = [s]
        for c in cmds:
            s = step(s, s.joints + c)
            out.append(s)
            if s.dropped:
                break
        return out

    a, b = roll(), roll()
    assert len(a) == len(b)
    assert all(x.same_as(y) for x, y in zip(a, b))


def test_quaternion_norm_survives_long_spin():
    s = init_grasp(CFG, sphere(30.0), START)
    for _ in range(500):
        j = s.joints.copy()
        j[2::3] += 0.05
        s = step(s, j)
        assert abs(np.linalg.norm(s.object.orientation) - 1.0) < 1e-9
    assert not s.dropped


def test_integration_update_keeps_unit_norm():
    g = np.random.default_rng(0)
    q = np.array([1.0, 0.0, 0.0, 0.0])
    for w in g.normal(scale=0.02, size=(100_000, 3)):
        q = quat_mul(quat_from_rotvec(w), q)
    assert abs(np.linalg.norm(q) - 1.0) < 1e-9


def test_controller_rolls_without_slip_on_sphere():
    env = GraspEnv(CFG, sphere(30.0), NOISELESS)
    target = quat_from_angle_axis(AngleAxis([0.0, 0.0, 1.0], math.pi / 2))
    traj = run_episode(env, HandcraftedPolicy(CFG), TargetSpec(START, Pose(START.position, target)))
    res = np.array(traj.residuals)
    assert np.mean(res.max(axis=1) < 1e-6) >= 0.99


def test_env_reset_uses_seed():
    env = GraspEnv(CFG, sphere(30.0), SensorModel(), seed=1)
    a = env.reset(START, rng.episode_seed(0, 1))
    b = env.reset(START, rng.episode_seed(0, 1))
    assert a.same_as(b) and a.rng_seed == b.rng_seed
