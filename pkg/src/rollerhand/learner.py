"""Behaviour cloning with DAgger on top of the handcrafted expert.

The policy network maps the 35-dim state to the nine joint targets through
three leaky-ReLU hidden layers of 256 units. Targets are learned as
standardized joint increments (target minus current joint); ``LearnedPolicy``
decodes them back to absolute joint targets.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .controller import (
    DEFAULT_MAX_STEPS, DEFAULT_STOP_THRESHOLD, TargetSpec, Trajectory, run_episode,
)
from .core import Pose, quat_to_rotvec
from .metrics import orientation_error

STATE_DIM = 35
ACTION_DIM = 9
ARCH = (35, 256, 256, 256, 9)

# slices of the state vector
S_JOINTS = slice(0, 9)
S_POS = slice(9, 12)
S_QUAT = slice(12, 16)
S_PREV_POS = slice(16, 19)
S_PREV_QUAT = slice(19, 23)
S_TERM_POS = slice(23, 26)
S_TERM_ROT = slice(26, 29)
S_INIT_POS = slice(29, 32)
S_INIT_ROT = slice(32, 35)
POSITION_SLICES = (S_POS, S_PREV_POS, S_TERM_POS, S_INIT_POS)
POSITION_SCALE = 0.01  # mm -> dm


class EmptyDataset(ValueError):
    pass


class NoPath(LookupError):
    pass


# ---------------------------------------------------------------------------
# state


def assemble_state(sensors, spec: TargetSpec) -> np.ndarray:
    s = np.empty(STATE_DIM)
    s[S_JOINTS] = sensors.joints_meas
    s[S_POS] = sensors.object_pose_meas.position
    s[S_QUAT] = sensors.object_pose_meas.orientation
    s[S_PREV_POS] = sensors.previous_object_pose_meas.position
    s[S_PREV_QUAT] = sensors.previous_object_pose_meas.orientation
    s[S_TERM_POS] = spec.target.position
    s[S_TERM_ROT] = quat_to_rotvec(spec.target.orientation)
    s[S_INIT_POS] = spec.start.position
    s[S_INIT_ROT] = quat_to_rotvec(spec.start.orientation)
    return s


def unpack_state(s) -> dict:
    s = np.asarray(s, dtype=float)
    names = ("joints", "position", "quaternion", "previous_position",
             "previous_quaternion", "termination_position", "termination_rotvec",
             "initial_position", "initial_rotvec")
    slices = (S_JOINTS, S_POS, S_QUAT, S_PREV_POS, S_PREV_QUAT, S_TERM_POS,
              S_TERM_ROT, S_INIT_POS, S_INIT_ROT)
    return {n: s[sl].copy() for n, sl in zip(names, slices)}


def default_input_scale() -> np.ndarray:
    scale = np.ones(STATE_DIM)
    for sl in POSITION_SLICES:
        scale[sl] = POSITION_SCALE
    return scale


# ---------------------------------------------------------------------------
# network


@dataclass(eq=False)
class PolicyNet:
    weights: list
    biases: list
    leaky_slope: float = 0.01
    input_offset: np.ndarray = field(default_factory=lambda: np.zeros(STATE_DIM))
    input_scale: np.ndarray = field(default_factory=default_input_scale)
    output_offset: np.ndarray = field(default_factory=lambda: np.zeros(ACTION_DIM))
    output_scale: np.ndarray = field(default_factory=lambda: np.ones(ACTION_DIM))
    action_mode: str = "delta"
    metadata: dict = field(default_factory=dict)

    @property
    def arch(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "PolicyNet":
        return PolicyNet(
            [w.copy() for w in self.weights], [b.copy() for b in self.biases],
            self.leaky_slope, self.input_offset.copy(), self.input_scale.copy(), self.output_offset.copy(),
            self.output_scale.copy(), self.action_mode, dict(self.metadata),
        )

    def __eq__(self, other):
        if not isinstance(other, PolicyNet):
            return NotImplemented
        arrays = lambda n: [*n.weights, *n.biases, n.input_offset, n.input_scale, n.output_offset,
                            n.output_scale]
        return (len(self.weights) == len(other.weights)
                and all(a.shape == b.shape and np.array_equal(a, b)
                        for a, b in zip(arrays(self), arrays(other)))
                and self.leaky_slope == other.leaky_slope
                and self.action_mode == other.action_mode
                and self.metadata == other.metadata)


def init_net(arch=ARCH, seed: int = 0, leaky_slope: float = 0.01) -> PolicyNet:
    g = rng.stream(seed, rng.TRAIN, 0)
    weights, biases = [], []
    gain = math.sqrt(2.0 / (1.0 + leaky_slope ** 2))
    for i, (n_in, n_out) in enumerate(zip(arch[:-1], arch[1:])):
        std = gain / math.sqrt(n_in) if i < len(arch) - 2 else 1.0 / math.sqrt(n_in)
        weights.append(g.normal(0.0, std, (n_in, n_out)))
        biases.append(np.zeros(n_out))
    net = PolicyNet(weights, biases, leaky_slope)
    if arch[0] != STATE_DIM:
        net.input_offset = np.zeros(arch[0])
        net.input_scale = np.ones(arch[0])
    if arch[-1] != ACTION_DIM:
        net.output_offset = np.zeros(arch[-1])
        net.output_scale = np.ones(arch[-1])
    return net


def _leaky(z, slope):
    return np.where(z > 0.0, z, slope * z)


def _scaled(net: PolicyNet, s):
    return (np.asarray(s, dtype=float) - net.input_offset) * net.input_scale


def _forward_cache(net: PolicyNet, x):
    """Forward pass keeping pre-activations; ``x`` is already input-scaled."""
    pre, acts = [], [x]
    h = x
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ w + b
        pre.append(z)
        h = z if i == last else _leaky(z, net.leaky_slope)
        acts.append(h)
    return pre, acts


def forward(net: PolicyNet, s) -> np.ndarray:
    """Raw network output for a state (or a batch of states)."""
    x = _scaled(net, s)
    return _forward_cache(net, x)[1][-1]


def encode_actions(net: PolicyNet, states, actions) -> np.ndarray:
    states = np.atleast_2d(states)
    actions = np.atleast_2d(actions)
    if net.action_mode == "delta":
        actions = actions - states[:, S_JOINTS]
    return (actions - net.output_offset) / net.output_scale


def decode_action(net: PolicyNet, state, y) -> np.ndarray:
    a = net.output_offset + net.output_scale * np.asarray(y)
    if net.action_mode == "delta":
        a = a + np.asarray(state)[..., S_JOINTS]
    return a


def loss_and_grads(net: PolicyNet, states, targets):
    """Mean over samples of the squared L2 error, and its parameter gradients.

    ``targets`` are in network-output units (see ``encode_actions``).
    """
    x = _scaled(net, np.atleast_2d(states))
    y = np.atleast_2d(targets)
    n = x.shape[0]
    pre, acts = _forward_cache(net, x)
    err = acts[-1] - y
    loss = float(np.sum(err * err) / n)
    grad = 2.0 * err / n
    gw, gb = [None] * len(net.weights), [None] * len(net.weights)
    for i in range(len(net.weights) - 1, -1, -1):
        if i < len(net.weights) - 1:
            grad = grad * np.where(pre[i] > 0.0, 1.0, net.leaky_slope)
        gw[i] = acts[i].T @ grad
        gb[i] = grad.sum(axis=0)
        if i > 0:
            grad = grad @ net.weights[i].T
    return loss, gw, gb


def loss(net: PolicyNet, states, targets) -> float:
    y = forward(net, np.atleast_2d(states))
    err = y - np.atleast_2d(targets)
    return float(np.sum(err * err) / err.shape[0])


def gradient_check(net: PolicyNet, s, a, n_coords: int = 100, h: float = 1e-5,
                   seed: int = 0) -> float:
    """Largest relative error between analytic and central-difference gradients.

    Coordinates whose perturbation flips the sign of any pre-activation
    (a leaky-ReLU kink) are skipped and replaced by fresh draws.
    """
    s = np.atleast_2d(s)
    a = np.atleast_2d(a)
    _, gw, gb = loss_and_grads(net, s, a)
    params = net.params()
    grads = []
    for w, b in zip(gw, gb):
        grads += [w, b]
    sizes = [p.size for p in params]
    total = sum(sizes)
    g = rng.stream(seed, rng.TRAIN, 99)
    x = _scaled(net, s)

    def signs():
        return [np.sign(z) for z in _forward_cache(net, x)[0][:-1]]

    base_signs = signs()
    worst, checked, attempts = 0.0, 0, 0
    while checked < n_coords and attempts < 50 * n_coords:
        attempts += 1
        flat = int(g.integers(total))
        k = 0
        while flat >= sizes[k]:
            flat -= sizes[k]
            k += 1
        p = params[k].reshape(-1)
        old = p[flat]
        p[flat] = old + h
        lp = loss(net, s, a)
        kink = any(not np.array_equal(u, v) for u, v in zip(signs(), base_signs))
        p[flat] = old - h
        lm = loss(net, s, a)
        kink = kink or any(not np.array_equal(u, v) for u, v in zip(signs(), base_signs))
        p[flat] = old
        if kink:
            continue
        numeric = (lp - lm) / (2.0 * h)
        analytic = float(grads[k].reshape(-1)[flat])
        denom = max(abs(numeric), abs(analytic))
        rel = 0.0 if denom < 1e-10 else abs(numeric - analytic) / denom
        worst = max(worst, rel)
        checked += 1
    return worst


# ---------------------------------------------------------------------------
# training


def dataset_arrays(trajectories) -> tuple[np.ndarray, np.ndarray]:
    states, actions = [], []
    for t in trajectories:
        states.extend(t.states)
        actions.extend(t.actions)
    if not states:
        raise EmptyDataset("no state-action pairs")
    return np.asarray(states, dtype=float), np.asarray(actions, dtype=float)


OUTPUT_SCALE_FLOOR = 1e-2
DEFAULT_HYPER = {"epochs": 200, "batch": 64, "lr": 1e-3, "seed": 0}


def train_bc(demos, hyper: dict | None = None, net: PolicyNet | None = None) -> PolicyNet:
    """Fit the policy to expert pairs by mini-batch gradient descent.

    ``demos`` is a DemoSet, a list of trajectories or a ``(states, actions)``
    pair. When ``net`` is given training continues from it (its output
    normalization is kept); otherwise a fresh network is initialized.
    """
    hp = dict(DEFAULT_HYPER)
    hp.update(hyper or {})
    if isinstance(demos, tuple):
        states, actions = (np.asarray(d, dtype=float) for d in demos)
        if states.size == 0:
            raise EmptyDataset("no state-action pairs")
    else:
        trajs = demos.all_trajectories() if isinstance(demos, DemoSet) else list(demos)
        states, actions = dataset_arrays(trajs)
    if net is None:
        net = init_net(hp.get("arch", ARCH), hp["seed"], hp.get("leaky_slope", 0.01))
        if hp.get("action_mode", "delta") != "delta":
            net.action_mode = hp["action_mode"]
        if states.shape[1] == net.input_scale.size:
            # z-score; constant inputs keep the default unit, tiny spreads are
            # floored so unseen values cannot be magnified without bound
            unit = 1.0 / net.input_scale
            sd = states.std(axis=0)
            net.input_offset = states.mean(axis=0)
            net.input_scale = np.where(sd > 0, 1.0 / np.maximum(sd, 1e-2 * unit), net.input_scale)
        raw = encode_actions(net, states, actions)
        net.output_offset = raw.mean(axis=0)
        # joints that barely move still get a unit of 0.01 rad, so later
        # DAgger data that does move them keeps the targets O(1)
        net.output_scale = np.maximum(raw.std(axis=0), OUTPUT_SCALE_FLOOR)
    else:
        net = net.copy()
    targets = encode_actions(net, states, actions)
    n = states.shape[0]
    g = rng.stream(hp["seed"], rng.TRAIN, 1)
    curve = [loss(net, states, targets)]
    for _ in range(int(hp["epochs"])):
        order = g.permutation(n)
        for start in range(0, n, int(hp["batch"])):
            idx = order[start:start + int(hp["batch"])]
            _, gw, gb = loss_and_grads(net, states[idx], targets[idx])
            grads = []
            for w, b in zip(gw, gb):
                grads += [w, b]
            for p, gr in zip(net.params(), grads):
                p -= hp["lr"] * gr
        curve.append(loss(net, states, targets))
    net.metadata = {
        "epochs": int(hp["epochs"]), "batch": int(hp["batch"]), "lr": float(hp["lr"]),
        "seed": int(hp["seed"]),
        "loss_curve": [float(c) for c in curve], "n_pairs": int(n),
    }
    return net


class LearnedPolicy:
    name = "learned"

    def __init__(self, net: PolicyNet, pivot_limit: float = math.pi / 2):
        self.net = net
        self.pivot_limit = pivot_limit

    def act(self, sensors, spec: TargetSpec, grip_setpoint: float = 0.0) -> np.ndarray:
        s = assemble_state(sensors, spec)
        a = decode_action(self.net, s, forward(self.net, s))
        a[1::3] = np.clip(a[1::3], -self.pivot_limit, self.pivot_limit)
        return a


class MixturePolicy:
    """Per-step choice: expert with probability ``beta``, learner otherwise."""

    name = "mixture"

    def __init__(self, expert, learner, beta: float, seed: int = 0):
        if not 0.0 <= beta <= 1.0:
            raise ValueError(f"beta must be in [0, 1], got {beta}")
        self.expert, self.learner, self.beta = expert, learner, beta
        self._rng = rng.stream(seed, rng.DAGGER, 0)
        self.expert_steps = 0
        self.learner_steps = 0

    def act(self, sensors, spec, grip_setpoint):
        if self.beta >= 1.0 or (self.beta > 0.0 and self._rng.random() < self.beta):
            self.expert_steps += 1
            return self.expert.act(sensors, spec, grip_setpoint)
        self.learner_steps += 1
        return self.learner.act(sensors, spec, grip_setpoint)


# ---------------------------------------------------------------------------
# demonstrations and the transformation graph


@dataclass(eq=False)
class DemoSet:
    trajectories: list = field(default_factory=list)   # one per entry of specs
    specs: list = field(default_factory=list)
    aggregated: list = field(default_factory=list)     # DAgger relabelled rollouts
    nodes: list = field(default_factory=list)          # Poses
    edges: list = field(default_factory=list)          # (from_node, to_node, spec_index)
    node_tol_pos: float = 1.0
    node_tol_ang: float = 1.0

    def __eq__(self, other):
        if not isinstance(other, DemoSet):
            return NotImplemented
        return (self.trajectories == other.trajectories and self.specs == other.specs
                and self.aggregated == other.aggregated and self.nodes == other.nodes
                and self.edges == other.edges and self.node_tol_pos == other.node_tol_pos
                and self.node_tol_ang == other.node_tol_ang)

    def all_trajectories(self) -> list:
        return self.trajectories + self.aggregated

    @property
    def size(self) -> int:
        return sum(len(t) for t in self.all_trajectories())

    def find_node(self, pose: Pose, tol_pos=None, tol_ang=None):
        tol_pos = self.node_tol_pos if tol_pos is None else tol_pos
        tol_ang = self.node_tol_ang if tol_ang is None else tol_ang
        best, best_d = None, math.inf
        for i, n in enumerate(self.nodes):
            dp = float(np.linalg.norm(n.position - pose.position))
            da = orientation_error(n.orientation, pose.orientation)
            if dp <= tol_pos and da <= tol_ang and dp + da < best_d:
                best, best_d = i, dp + da
        return best

    def _node(self, pose: Pose) -> int:
        i = self.find_node(pose)
        if i is None:
            self.nodes.append(pose)
            i = len(self.nodes) - 1
        return i

    def add(self, traj: Trajectory) -> None:
        self.trajectories.append(traj)
        self.specs.append(traj.spec)
        a = self._node(traj.spec.start)
        b = self._node(traj.spec.target)
        self.edges.append((a, b, len(self.specs) - 1))

    def extend(self, trajs) -> None:
        for t in trajs:
            self.add(t)


def spec_distance(a: TargetSpec, b: TargetSpec) -> tuple[float, float]:
    """(position distance mm, orientation error) between two transformations."""
    dp = max(float(np.linalg.norm(a.start.position - b.start.position)),
             float(np.linalg.norm(a.target.position - b.target.position)))
    da = max(orientation_error(a.start.orientation, b.start.orientation),
             orientation_error(a.target.orientation, b.target.orientation))
    return dp, da


def nearest_spec(demos: DemoSet, candidate: TargetSpec):
    """Index and distance of the single closest stored transformation."""
    best, best_d = None, (math.inf, math.inf)
    for i, sp in enumerate(demos.specs):
        d = spec_distance(candidate, sp)
        if best is None or d[0] / 10.0 + d[1] / 10.0 < best_d[0] / 10.0 + best_d[1] / 10.0:
            best, best_d = i, d
    return best, best_d


def _as_policy(net_or_policy):
    return net_or_policy if hasattr(net_or_policy, "act") else LearnedPolicy(net_or_policy)


def dagger_round(net, expert, env, specs, beta: float, seed: int = 0,
                 max_steps: int = DEFAULT_MAX_STEPS,
                 stop_threshold: float = DEFAULT_STOP_THRESHOLD) -> list:
    """Roll the beta-mixture on each spec; label every visited state with the expert."""
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must be in [0, 1], got {beta}")
    learner = _as_policy(net)
    out = []
    for k, spec in enumerate(specs):
        mix = MixturePolicy(expert, learner, beta, seed=rng.episode_seed(seed, 7, k))
        traj = run_episode(env, mix, spec, max_steps, stop_threshold,
                           seed=rng.episode_seed(seed, 8, k), label_policy=expert)
        traj.policy = f"dagger(beta={beta:g})"
        out.append(traj)
    return out


def dagger(demos: DemoSet, expert, env, specs, rounds: int = 5, hyper: dict | None = None,
           seed: int = 0, max_steps: int = DEFAULT_MAX_STEPS,
           stop_threshold: float = DEFAULT_STOP_THRESHOLD, net: PolicyNet | None = None,
           log=None):
    """Behaviour cloning followed by DAgger rounds with ``beta_k = 0.5**k``.

    Returns the final network and the per-round dataset sizes.
    """
    if net is None:
        net = train_bc(demos, hyper)
    sizes = [demos.size]
    for k in range(1, rounds + 1):
        beta = 0.5 ** k
        new = dagger_round(net, expert, env, specs, beta, seed=rng.episode_seed(seed, 9, k),
                           max_steps=max_steps, stop_threshold=stop_threshold)
        demos.aggregated.extend(new)
        sizes.append(demos.size)
        if log is not None:
            log(f"dagger round {k}: beta={beta:g} dataset={demos.size}")
        net = train_bc(demos, hyper, net=net)
    return net, sizes


def accumulate(demos: DemoSet, candidate: TargetSpec, net, env, eps_pos: float = 10.0,
               eps_ang: float = 10.0, max_steps: int = DEFAULT_MAX_STEPS,
               stop_threshold: float = DEFAULT_STOP_THRESHOLD, seed: int = 0) -> bool:
    """Try a nearby transformation with the learned policy; keep it if it succeeds.

    Returns True when ``candidate`` was added to the set and the graph.
    """
    idx, (dp, da) = nearest_spec(demos, candidate)
    if idx is None or dp > eps_pos or da > eps_ang:
        return False
    traj = run_episode(env, _as_policy(net), candidate, max_steps, stop_threshold, seed=seed)
    if traj.reason != "converged" or traj.final_e_omega >= stop_threshold:
        return False
    demos.add(traj)
    return True


def plan_path(demos: DemoSet, start: Pose, goal: Pose, tol_pos=None, tol_ang=None) -> list:
    """Fewest-edge chain of stored transformations from ``start`` to ``goal``."""
    a = demos.find_node(start, tol_pos, tol_ang)
    b = demos.find_node(goal, tol_pos, tol_ang)
    if a is None or b is None:
        raise NoPath("pose not on the graph")
    if a == b:
        return []
    adj: dict[int, list] = {}
    for u, v, k in demos.edges:
        adj.setdefault(u, []).append((v, k))
    prev = {a: None}
    queue = deque([a])
    while queue:
        u = queue.popleft()
        if u == b:
            break
        for v, k in adj.get(u, []):
            if v not in prev:
                prev[v] = (u, k)
                queue.append(v)
    if b not in prev:
        raise NoPath(f"no chain from node {a} to node {b}")
    path = []
    u = b
    while prev[u] is not None:
        u, k = prev[u]
        path.append(demos.specs[k])
    return path[::-1]
