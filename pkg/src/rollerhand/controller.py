"""Handcrafted closed-loop rotation policy and the episode runner."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import GrasperConfig, Pose, pose_delta, quat_to_rotvec
from .kinematics import (
    ContactDecomposition, JointRates, KinematicsError, approx_contact,
    base_rate_for, contact_velocity_from_twist, decompose_contact_motion,
    forward_finger, hand_frames, pivot_angle_for, roller_rate_for, rolling_direction,
)
from .metrics import orientation_error

DEFAULT_STOP_THRESHOLD = 5.0
DEFAULT_MAX_STEPS = 3000


class NotGrasping(Exception):
    pass


@dataclass(frozen=True, eq=False)
class TargetSpec:
    start: Pose
    target: Pose

    def descriptor(self) -> np.ndarray:
        """12-vector: start position, start rotation vector, target position, target rotation vector."""
        return np.concatenate([
            self.start.position, quat_to_rotvec(self.start.orientation),
            self.target.position, quat_to_rotvec(self.target.orientation),
        ])

    def to_dict(self) -> dict:
        return {"start": self.start.to_list(), "target": self.target.to_list()}

    @classmethod
    def from_dict(cls, d) -> "TargetSpec":
        return cls(Pose.from_list(d["start"]), Pose.from_list(d["target"]))

    def __eq__(self, other):
        if not isinstance(other, TargetSpec):
            return NotImplemented
        return self.start == other.start and self.target == other.target


@dataclass(frozen=True, eq=False)
class ControlCommand:
    joint_targets: np.ndarray
    decompositions: tuple = ()
    rates: tuple = ()
    degenerate_flags: tuple = (False, False, False)


def desired_object_velocity(current: Pose, target: Pose, lam: float, w_pos: float = 1.0):
    if not 0.0 < lam <= 1.0:
        raise ValueError(f"lambda must be in (0, 1], got {lam}")
    translation, aa = pose_delta(current, target)
    return lam * w_pos * translation, lam * aa.rotvec


def step_policy(config: GrasperConfig, frames, contacts, current: Pose, target: Pose,
                joints) -> ControlCommand:
    """Nine joint targets for the next step."""
    if any(c is None for c in contacts) or len(contacts) != 3:
        raise NotGrasping("every finger needs a contact")
    joints = np.asarray(joints, dtype=float).reshape(3, 3)
    setpoint = config.grip_setpoint
    if setpoint is None:
        raise ValueError("grip_setpoint must be resolved before control")
    v, w = desired_object_velocity(current, target, config.lam, config.w_pos)
    x = current.position
    out = joints.copy()
    decs, rates, flags = [], [], []
    for i, (f, c) in enumerate(zip(frames, contacts)):
        dx = contact_velocity_from_twist(v, w, c.point, x)
        dec = decompose_contact_motion(dx, f.z2, c.normal)
        theta2 = joints[i, 1]
        target2 = theta2
        if not dec.degenerate:
            try:
                target2 = pivot_angle_for(f.z1, f.z2, dec.z_cr_hat, f.z0, config.pivot_limit)
            except KinematicsError:
                target2 = theta2
            else:
                target2 = _hold_side(target2, theta2, config)
        step2 = float(np.clip(target2 - theta2, -config.pivot_rate_limit, config.pivot_rate_limit))
        new2 = float(np.clip(theta2 + step2, -config.pivot_limit, config.pivot_limit))

        omega3 = 0.0
        if not dec.degenerate:
            moved = forward_finger(config, i, joints[i, 0], new2)
            try:
                d = rolling_direction(moved.z3, c.normal)
                along = float(dec.delta_x_cr @ d) * d
                omega3 = roller_rate_for(along, moved.z3, c.normal, config.roller_radius_r)
            except (KinematicsError, ValueError):
                omega3 = 0.0
        try:
            omega1 = base_rate_for(dec.delta_x_cb, f, c.point)
        except KinematicsError:
            omega1 = 0.0

        out[i, 0] = setpoint
        out[i, 1] = new2
        out[i, 2] = joints[i, 2] + omega3
        decs.append(dec)
        rates.append(JointRates(omega1, omega3, target2))
        flags.append(dec.degenerate)
    return ControlCommand(out.reshape(9), tuple(decs), tuple(rates), tuple(flags))


def _hold_side(target2: float, theta2: float, config: GrasperConfig) -> float:
    """Keep the pivot on its current side when the target sits at the opposite limit.

    Near +/-pi/2 the two roller-axis signs are equivalent rolling lines; within
    ``pivot_flip_band`` of the limit the equivalent angle on the current side
    is used instead of sweeping across the whole range.
    """
    band = config.pivot_flip_band
    if band <= 0.0 or target2 * theta2 >= 0.0:
        return target2
    if abs(target2) < config.pivot_limit - band:
        return target2
    alt = target2 - math.copysign(math.pi, target2)
    return float(np.clip(alt, -config.pivot_limit, config.pivot_limit))


class HandcraftedPolicy:
    """Expert policy: measured pose in, nine joint targets out."""

    name = "handcrafted"

    def __init__(self, config: GrasperConfig):
        self.config = config

    def command(self, sensors, spec: TargetSpec, grip_setpoint: float) -> ControlCommand:
        cfg = self.config
        if cfg.grip_setpoint is None:
            from dataclasses import replace
            cfg = replace(cfg, grip_setpoint=grip_setpoint)
        joints = sensors.joints_meas
        frames = hand_frames(cfg, joints)
        x = sensors.object_pose_meas.position
        contacts = [approx_contact(f, x) for f in frames]
        return step_policy(cfg, frames, contacts, sensors.object_pose_meas, spec.target, joints)

    def act(self, sensors, spec: TargetSpec, grip_setpoint: float) -> np.ndarray:
        return self.command(sensors, spec, grip_setpoint).joint_targets


@dataclass(eq=False)
class Trajectory:
    spec: TargetSpec
    seed: int = 0
    states: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    e_omega: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    dropped: list = field(default_factory=list)
    reason: str = ""
    final_e_omega: float = math.nan
    policy: str = ""

    def __len__(self):
        return len(self.states)

    def pairs(self):
        return zip(self.states, self.actions)

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        same = lambda a, b: len(a) == len(b) and all(
            np.array_equal(np.asarray(x), np.asarray(y)) for x, y in zip(a, b))
        return (self.spec == other.spec and self.seed == other.seed
                and same(self.states, other.states) and same(self.actions, other.actions)
                and self.e_omega == other.e_omega and same(self.residuals, other.residuals)
                and self.dropped == other.dropped and self.reason == other.reason
                and _same_float(self.final_e_omega, other.final_e_omega)
                and self.policy == other.policy)


def _same_float(a, b):
    return a == b or (math.isnan(a) and math.isnan(b))


def run_episode(env, policy, spec: TargetSpec, max_steps: int = DEFAULT_MAX_STEPS,
                stop_threshold: float = DEFAULT_STOP_THRESHOLD, seed: int | None = None,
                label_policy=None) -> Trajectory:
    """Roll ``policy`` in closed loop from ``spec.start`` until converged, dropped or out of budget.

    Convergence is judged on the measured pose. When ``label_policy`` is given
    the recorded actions are its labels for each visited state while
    ``policy`` drives the world (used for DAgger).
    """
    from .learner import assemble_state

    state = env.reset(spec.start, seed)
    traj = Trajectory(spec=spec, seed=env.seed, policy=getattr(policy, "name", ""))
    reason = "budget"
    for _ in range(max_steps):
        sensors = env.read_sensors()
        s = assemble_state(sensors, spec)
        a = np.asarray(policy.act(sensors, spec, state.grip_setpoint), dtype=float)
        label = a if label_policy is None else np.asarray(
            label_policy.act(sensors, spec, state.grip_setpoint), dtype=float)
        state = env.step(a)
        traj.states.append(s)
        traj.actions.append(label.copy())
        traj.e_omega.append(orientation_error(spec.target.orientation, state.object.orientation))
        traj.residuals.append(state.residuals)
        traj.dropped.append(state.dropped)
        if state.dropped:
            reason = "dropped"
            break
        meas = env.read_sensors().object_pose_meas
        if orientation_error(spec.target.orientation, meas.orientation) < stop_threshold:
            reason = "converged"
            break
    traj.reason = reason
    traj.final_e_omega = orientation_error(spec.target.orientation, state.object.orientation)
    return traj
