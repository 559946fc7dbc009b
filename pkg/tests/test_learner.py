import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rollerhand import rng
from rollerhand.controller import HandcraftedPolicy, TargetSpec, Trajectory, run_episode
from rollerhand.core import AngleAxis, GrasperConfig, Pose, quat_from_angle_axis, sphere
from rollerhand.learner import (
    ARCH, DemoSet, EmptyDataset, MixturePolicy, NoPath, PolicyNet, S_INIT_POS, S_INIT_ROT,
    S_JOINTS, S_POS, S_PREV_POS, S_PREV_QUAT, S_QUAT, S_TERM_POS, S_TERM_ROT, LearnedPolicy,
    accumulate, assemble_state, dagger, dagger_round, decode_action, forward, gradient_check,
    init_net, loss_and_grads, nearest_spec, plan_path, train_bc, unpack_state,
)
from rollerhand.world import NOISELESS, GraspEnv, SensorFrame

CFG = GrasperConfig()
START = Pose([0.0, 0.0, 170.0])


def _yaw(deg, pos=START.position):
    return Pose(pos, quat_from_angle_axis(AngleAxis([0, 0, 1], math.radians(deg))))


def _frame(joints=None, cur=START, prev=START):
    j = np.zeros(9) if joints is None else np.asarray(joints, float)
    return SensorFrame(j, cur, prev)


# state packing

def test_identity_state_slices():
    s = assemble_state(_frame(), TargetSpec(Pose(), Pose()))
    assert s.shape == (35,)
    assert np.array_equal(s[12:16], [1, 0, 0, 0])
    assert np.array_equal(s[26:29], [0, 0, 0])


def test_target_rotvec_slice():
    s = assemble_state(_frame(), TargetSpec(START, _yaw(90)))
    assert np.allclose(s[26:29], [0, 0, math.pi / 2], atol=1e-15)


def test_slices_follow_field_order():
    cur = Pose([1.0, 2.0, 3.0], [0.5, 0.5, 0.5, 0.5])
    prev = Pose([4.0, 5.0, 6.0], [0.0, 1.0, 0.0, 0.0])
    spec = TargetSpec(Pose([7.0, 8.0, 9.0]), _yaw(30, [10.0, 11.0, 12.0]))
    s = assemble_state(_frame(np.arange(9.0), cur, prev), spec)
    assert np.array_equal(s[S_JOINTS], np.arange(9.0))
    assert np.array_equal(s[S_POS], cur.position)
    assert np.array_equal(s[S_QUAT], cur.orientation)
    assert np.array_equal(s[S_PREV_POS], prev.position)
    assert np.array_equal(s[S_PREV_QUAT], prev.orientation)
    assert np.array_equal(s[S_TERM_POS], [10, 11, 12])
    assert np.allclose(s[S_TERM_ROT], [0, 0, math.radians(30)])
    assert np.array_equal(s[S_INIT_POS], [7, 8, 9])
    assert np.array_equal(s[S_INIT_ROT], [0, 0, 0])


def test_changing_one_field_changes_one_slice():
    spec = TargetSpec(START, _yaw(90))
    a = assemble_state(_frame(), spec)
    b = assemble_state(_frame(prev=Pose([1.0, 0, 0])), spec)
    diff = np.nonzero(a != b)[0]
    assert set(diff) <= set(range(16, 19))


@given(st.lists(st.floats(-1e3, 1e3), min_size=35, max_size=35))
def test_unpack_recovers_every_slice(values):
    s = np.array(values)
    parts = unpack_state(s)
    assert np.array_equal(np.concatenate(list(parts.values())), s)


# network

def _tiny(weights, biases, slope=0.01):
    weights = [np.array(w, float) for w in weights]
    n_in, n_out = weights[0].shape[0], weights[-1].shape[1]
    return PolicyNet(weights, [np.array(b, float) for b in biases],
                     slope, np.zeros(n_in), np.ones(n_in), np.zeros(n_out), np.ones(n_out),
                     "absolute")


def test_zero_net_outputs_zero():
    net = init_net()
    for w, b in zip(net.weights, net.biases):
        w[:] = 0
        b[:] = 0
    assert not np.any(forward(net, np.ones(35)))


def test_negative_preactivation_uses_slope():
    net = _tiny([[[1.0]], [[1.0]]], [[-1.0], [0.0]])
    assert forward(net, np.array([0.0]))[0] == pytest.approx(-0.01, abs=1e-15)


def test_toy_forward_by_hand():
    w1 = [[1.0, -2.0], [0.5, 1.0]]
    b1 = [0.1, -0.2]
    w2 = [[2.0, 1.0], [-1.0, 3.0]]
    b2 = [0.0, 0.5]
    net = _tiny([w1, w2], [b1, b2])
    # x = [1, 2]: z1 = [1*1 + 2*0.5 + 0.1, -2 + 2 - 0.2] = [2.1, -0.2]
    # h = [2.1, -0.002]; y = [4.2 + 0.002, 2.1 - 0.006 + 0.5]
    y = forward(net, np.array([1.0, 2.0]))
    assert np.allclose(y, [4.202, 2.594], atol=1e-12, rtol=0)


def test_gradients_match_finite_differences():
    net = init_net((35, 16, 16, 16, 9), seed=3)
    g = np.random.default_rng(0)
    s, a = g.normal(size=(4, 35)), g.normal(size=(4, 9))
    assert gradient_check(net, s, a, n_coords=100) < 1e-4


def test_zero_net_zero_data_has_zero_gradients():
    net = init_net((35, 8, 8, 8, 9))
    for p in net.params():
        p[:] = 0
    _, gw, gb = loss_and_grads(net, np.zeros((3, 35)), np.zeros((3, 9)))
    assert all(not np.any(x) for x in (*gw, *gb))


@settings(max_examples=50)
@given(st.integers(0, 2 ** 32 - 1))
def test_forward_lipschitz_bound(seed):
    net = init_net((35, 32, 32, 32, 9), seed=seed)
    g = np.random.default_rng(seed)
    x, y = g.normal(size=35), g.normal(size=35)
    bound = np.prod([np.linalg.norm(w, 2) for w in net.weights])
    bound *= np.max(np.abs(net.input_scale)) * max(1.0, net.leaky_slope)
    d = np.linalg.norm(forward(net, x) - forward(net, y))
    assert d <= bound * np.linalg.norm(x - y) * (1 + 1e-12)


def test_init_is_deterministic_and_he_scaled():
    a, b = init_net(seed=5), init_net(seed=5)
    assert a == b
    assert abs(a.weights[1].std() - math.sqrt(2 / (1 + 0.01 ** 2)) / 16) < 0.005
    assert a.arch == list(ARCH)


def test_copy_is_deep():
    a = init_net((35, 4, 9))
    b = a.copy()
    b.weights[0][0, 0] += 1
    assert a != b


# training

def _pair_set(n=64, seed=0):
    g = np.random.default_rng(seed)
    s = g.normal(size=35)
    s[S_QUAT] = [1, 0, 0, 0]
    a = g.normal(size=9) * 0.1
    return np.tile(s, (n, 1)), np.tile(a, (n, 1))


def test_repeated_pair_is_memorized():
    net = train_bc(_pair_set(), {"epochs": 200}, net=init_net())
    assert net.metadata["loss_curve"][-1] < 1e-6
    assert len(net.metadata["loss_curve"]) == 201


def _linear_data(seed=0):
    g = np.random.default_rng(seed)
    m = g.normal(size=(2, 4))
    x = g.normal(size=(512, 4))
    xt = g.normal(size=(200, 4))
    return (x, x @ m.T), (xt, xt @ m.T)


def test_linear_map_recovered():
    (x, y), (xt, yt) = _linear_data()
    net = train_bc((x, y), {"arch": (4, 2), "action_mode": "absolute", "lr": 1e-2})
    pred = decode_action(net, xt, forward(net, xt))
    assert np.mean((pred - yt) ** 2) < 1e-3


def test_hidden_net_loss_drops_and_stays_down():
    (x, y), _ = _linear_data(1)
    net = train_bc((x, y), {"arch": (4, 16, 2), "action_mode": "absolute", "epochs": 100,
                            "lr": 1e-2})
    c = net.metadata["loss_curve"]
    assert c[-1] < c[0] / 10
    assert all(b <= 1.05 * a for a, b in zip(c, c[1:]))


def test_training_is_deterministic():
    data = _linear_data(2)[0]
    hp = {"arch": (4, 8, 2), "action_mode": "absolute", "epochs": 20, "seed": 4}
    a, b = train_bc(data, hp), train_bc(data, hp)
    assert a.metadata["loss_curve"] == b.metadata["loss_curve"]
    assert a == b


def test_empty_dataset_rejected():
    with pytest.raises(EmptyDataset):
        train_bc(DemoSet())
    with pytest.raises(EmptyDataset):
        train_bc((np.zeros((0, 35)), np.zeros((0, 9))))


def test_learned_policy_clamps_pivots():
    net = init_net((35, 4, 9))
    net.output_offset = np.full(9, 10.0)
    act = LearnedPolicy(net).act(_frame(), TargetSpec(START, START))
    assert np.all(np.abs(act[1::3]) <= math.pi / 2)


# DAgger

class _Still:
    name = "still"

    def act(self, sensors, spec, grip_setpoint):
        return sensors.joints_meas.copy()


class _Spin:
    name = "spin"

    def act(self, sensors, spec, grip_setpoint):
        a = sensors.joints_meas.copy()
        a[2::3] += 0.05
        return a


def test_mixture_endpoints():
    frame = _frame()
    spec = TargetSpec(START, START)
    hi = MixturePolicy(_Spin(), _Still(), 1.0)
    lo = MixturePolicy(_Spin(), _Still(), 0.0)
    for _ in range(20):
        hi.act(frame, spec, 0.0)
        lo.act(frame, spec, 0.0)
    assert (hi.expert_steps, hi.learner_steps) == (20, 0)
    assert (lo.expert_steps, lo.learner_steps) == (0, 20)
    with pytest.raises(ValueError):
        MixturePolicy(_Spin(), _Still(), 1.5)


def test_beta_one_round_equals_expert_rollout():
    env = GraspEnv(CFG, sphere(30.0), NOISELESS)
    spec = TargetSpec(START, _yaw(90))
    expert = HandcraftedPolicy(CFG)
    [traj] = dagger_round(_Still(), expert, env, [spec], 1.0, seed=3)
    ref = run_episode(env, expert, spec, seed=rng.episode_seed(3, 8, 0))
    assert all(np.array_equal(a, b) for a, b in zip(traj.states, ref.states))
    assert all(np.array_equal(a, b) for a, b in zip(traj.actions, ref.actions))
    assert len(traj) == len(ref)


def test_beta_zero_visits_learner_states_with_expert_labels():
    env = GraspEnv(CFG, sphere(30.0), NOISELESS)
    spec = TargetSpec(START, _yaw(90))
    [traj] = dagger_round(_Still(), _Spin(), env, [spec], 0.0, max_steps=5)
    # the learner never moves anything
    assert all(np.array_equal(s, traj.states[0]) for s in traj.states)
    for s, a in zip(traj.states, traj.actions):
        assert np.allclose(a[2::3] - s[S_JOINTS][2::3], 0.05)
    assert traj.reason == "budget"


def test_dagger_grows_dataset_each_round():
    env = GraspEnv(CFG, sphere(30.0), NOISELESS)
    expert = HandcraftedPolicy(CFG)
    specs = [TargetSpec(START, _yaw(90))]
    demos = DemoSet()
    demos.add(run_episode(env, expert, specs[0]))
    hp = {"arch": ARCH, "epochs": 2}
    net, sizes = dagger(demos, expert, env, specs, rounds=3, hyper=hp, max_steps=20)
    assert len(sizes) == 4
    assert all(b > a for a, b in zip(sizes, sizes[1:]))
    assert len(demos.aggregated) == 3
    assert net.metadata["n_pairs"] == sizes[-1]
    assert all(np.isfinite(w).all() for w in net.weights)


# transformation graph

def _edge(a, b):
    return Trajectory(spec=TargetSpec(a, b))


def test_plan_path_two_edges():
    a, b, c = _yaw(0), _yaw(90), _yaw(180)
    demos = DemoSet()
    demos.extend([_edge(a, b), _edge(b, c)])
    path = plan_path(demos, a, c)
    assert path == [TargetSpec(a, b), TargetSpec(b, c)]
    assert plan_path(demos, a, _yaw(0.1)) == []


def test_plan_path_prefers_fewest_edges():
    a, b, c, d = _yaw(0), _yaw(60), _yaw(120), _yaw(180)
    demos = DemoSet()
    demos.extend([_edge(a, b), _edge(b, c), _edge(c, d), _edge(a, d)])
    assert plan_path(demos, a, d) == [TargetSpec(a, d)]


def test_plan_path_disconnected():
    a, b = _yaw(0), _yaw(90)
    c, d = _yaw(0, [0, 0, 100.0]), _yaw(90, [0, 0, 100.0])
    demos = DemoSet()
    demos.extend([_edge(a, b), _edge(c, d)])
    with pytest.raises(NoPath):
        plan_path(demos, a, d)
    with pytest.raises(NoPath):
        plan_path(demos, a, _yaw(45))
    # edges are directed
    with pytest.raises(NoPath):
        plan_path(demos, b, a)


def test_nearest_spec_picks_single_closest():
    demos = DemoSet()
    demos.extend([_edge(START, _yaw(90)), _edge(START, _yaw(60))])
    idx, (dp, da) = nearest_spec(demos, TargetSpec(START, _yaw(85)))
    assert idx == 0 and dp == 0.0 and da > 0


def test_accumulate_grows_graph_along_chain():
    env = GraspEnv(CFG, sphere(30.0), NOISELESS)
    expert = HandcraftedPolicy(CFG)
    demos = DemoSet()
    demos.add(run_episode(env, expert, TargetSpec(START, _yaw(90))))
    assert accumulate(demos, TargetSpec(START, _yaw(90)), expert, env)
    assert len(demos.nodes) == 2 and len(demos.edges) == 2
    for k, deg in enumerate((93, 96, 99), start=1):
        nodes, edges = len(demos.nodes), len(demos.edges)
        assert accumulate(demos, TargetSpec(START, _yaw(deg)), expert, env)
        assert len(demos.nodes) == nodes + 1 and len(demos.edges) == edges + 1
    before = (len(demos.nodes), len(demos.edges), len(demos.specs))
    assert not accumulate(demos, TargetSpec(START, _yaw(-150)), expert, env)
    assert before == (len(demos.nodes), len(demos.edges), len(demos.specs))
