"""Deterministic kinematic rolling world.

The object is held by three spherical rollers. Each step the commanded joints
move under per-joint rate limits, the rollers' surface velocities at the
contacts are computed, and the object twist is the least-squares fit of the
rolling-without-slipping contact constraints (by default their tangential
components only). Base joints are
compliant: they close toward their setpoint but never penetrate the object,
and the object pushes them open when its surface sweeps outward.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import kernels, rng
from .core import (
    GrasperConfig, ObjectModel, Pose, quat_from_angle_axis, AngleAxis,
    quat_from_rotvec, quat_mul, joint_vector,
)
from .kinematics import CONTACT_TOL, ContactState, finger_base, hand_frames

DROP_GAP = 5.0       # mm
DROP_FALL = 30.0     # mm below grasp height
OPEN_LIMIT = -math.pi / 3
CLOSE_LIMIT = math.pi / 3


class WorldError(Exception):
    pass


class Unreachable(WorldError):
    pass


class AlreadyDropped(WorldError):
    pass


@dataclass(frozen=True)
class SensorModel:
    sigma_pos: float = 1.0                  # mm
    sigma_ang: float = math.radians(1.0)    # rad

    def __post_init__(self):
        if self.sigma_pos < 0 or self.sigma_ang < 0:
            raise ValueError("sensor noise must be >= 0")


NOISELESS = SensorModel(0.0, 0.0)


@dataclass(frozen=True, eq=False)
class WorldState:
    config: GrasperConfig
    object_model: ObjectModel
    joints: np.ndarray
    object: Pose
    previous_object: Pose
    contacts: tuple
    step_index: int
    rng_seed: int
    dropped: bool
    grasp_height: float
    grip_setpoint: float
    sensors: SensorModel = NOISELESS
    residuals: tuple = (0.0, 0.0, 0.0)
    normal_weight: float = 0.0

    def same_as(self, other: "WorldState") -> bool:
        """Bit-level equality of the dynamic state."""
        return (np.array_equal(self.joints, other.joints)
                and self.object == other.object
                and self.previous_object == other.previous_object
                and self.step_index == other.step_index
                and self.dropped == other.dropped
                and self.residuals == other.residuals
                and all(np.array_equal(a.point, b.point) and np.array_equal(a.normal, b.normal)
                        for a, b in zip(self.contacts, other.contacts)))


@dataclass(frozen=True, eq=False)
class SensorFrame:
    joints_meas: np.ndarray
    object_pose_meas: Pose
    previous_object_pose_meas: Pose


@dataclass(frozen=True, eq=False)
class TwistSolve:
    v: np.ndarray
    omega: np.ndarray
    slip_residual_per_contact: tuple


# ---------------------------------------------------------------------------
# geometry helpers


def _shape_args(obj: ObjectModel):
    if obj.is_sphere:
        return 0, np.array([obj.shape.radius, 0.0, 0.0])
    return 1, obj.shape.half_extents


def _finger_geometry(config: GrasperConfig, i: int):
    o1, _z1, radial = finger_base(config, i)
    return o1, np.array([0.0, 0.0, 1.0]), radial


def finger_gap(config, obj, pose: Pose, i: int, theta1: float) -> float:
    o1, z0, er = _finger_geometry(config, i)
    kind, dims = _shape_args(obj)
    return kernels.finger_gap(theta1, o1, z0, er, config.finger_length,
                              config.roller_radius_r, pose.position, pose.orientation,
                              kind, dims)


def _contact_angle(config, obj, pose, i, lo, hi) -> float:
    o1, z0, er = _finger_geometry(config, i)
    kind, dims = _shape_args(obj)
    return kernels.contact_angle(lo, hi, o1, z0, er, config.finger_length,
                                 config.roller_radius_r, pose.position, pose.orientation,
                                 kind, dims)


def _comply(config, obj, pose, i, theta_des, theta_ref) -> float:
    """Largest base angle <= theta_des that does not penetrate the object."""
    if finger_gap(config, obj, pose, i, theta_des) >= 0.0:
        return theta_des
    lo = min(theta_ref, theta_des)
    for _ in range(64):
        if finger_gap(config, obj, pose, i, lo) > 0.0:
            break
        lo -= 0.05
    else:
        return lo
    return _contact_angle(config, obj, pose, i, lo, theta_des)


def compute_contacts(config: GrasperConfig, obj: ObjectModel, pose: Pose, joints):
    frames = hand_frames(config, joints)
    kind, dims = _shape_args(obj)
    out = []
    for f in frames:
        gap, n = kernels.surface_gap(f.roller_center, f.roller_radius, pose.position,
                                     pose.orientation, kind, dims)
        n = np.array(n)
        out.append(ContactState(f.roller_center + f.roller_radius * n, n, float(gap)))
    return frames, tuple(out)


# ---------------------------------------------------------------------------
# operations


def init_grasp(config: GrasperConfig, object_model: ObjectModel, start: Pose,
               seed: int = 0, sensors: SensorModel = NOISELESS,
               normal_weight: float = 0.0) -> WorldState:
    """Close the three base joints onto the object from an open pose.

    ``normal_weight`` in [0, 1] weights the normal components of the contact
    velocity mismatch in the twist fit; 0 treats the fingers as compliant
    along the normals.
    """
    if not 0.0 <= normal_weight <= 1.0:
        raise ValueError(f"normal_weight must be in [0, 1], got {normal_weight}")
    sweep = np.arange(OPEN_LIMIT, CLOSE_LIMIT + 1e-12, math.radians(0.5))
    joints = np.zeros(9)
    for i in range(3):
        gaps = [finger_gap(config, object_model, start, i, t) for t in sweep]
        if gaps[0] <= 0.0:
            raise Unreachable(f"finger {i} penetrates the object when fully open")
        hit = next((k for k, g in enumerate(gaps) if g <= 0.0), None)
        if hit is None:
            raise Unreachable(f"finger {i} finds no contact while closing")
        joints[3 * i] = _contact_angle(config, object_model, start, i,
                                       sweep[hit - 1], sweep[hit])
    setpoint = config.grip_setpoint
    if setpoint is None:
        setpoint = float(np.mean(joints[0::3])) + config.grip_preload
    _, contacts = compute_contacts(config, object_model, start, joints)
    return WorldState(
        config=config, object_model=object_model, joints=joints, object=start,
        previous_object=start, contacts=contacts, step_index=0, rng_seed=int(seed),
        dropped=False, grasp_height=float(start.position[2]), grip_setpoint=setpoint,
        sensors=sensors, normal_weight=float(normal_weight),
    )


def solve_object_twist(points, normals, x_obj, vsurf, active=(True, True, True),
                       normal_weight: float = 0.0) -> TwistSolve:
    """Least-squares object twist matching roller surface velocities."""
    points = np.asarray(points, dtype=float)
    normals = np.asarray(normals, dtype=float)
    vsurf = np.asarray(vsurf, dtype=float)
    ok, v, w, res = kernels.solve_twist(points, normals, x_obj, vsurf, active, normal_weight)
    if ok:
        return TwistSolve(np.array(v), np.array(w), tuple(res))
    # rank-deficient: minimum-norm solution
    rows, rhs = [], []
    for i, a in enumerate(active):
        if not a:
            continue
        n = normals[i]
        proj = np.eye(3) - (1.0 - math.sqrt(normal_weight)) * np.outer(n, n)
        r = points[i] - x_obj
        b = np.hstack([np.eye(3), -_skew(r)])
        rows.append(proj @ b)
        rhs.append(proj @ vsurf[i])
    if not rows:
        return TwistSolve(np.zeros(3), np.zeros(3), tuple(0.0 for _ in active))
    a_mat = np.vstack(rows)
    sol = np.linalg.lstsq(a_mat, np.concatenate(rhs), rcond=None)[0]
    res, k = [], 0
    for a in active:
        if a:
            e = rows[k] @ sol - rhs[k]
            res.append(float(np.linalg.norm(e)))
            k += 1
        else:
            res.append(0.0)
    return TwistSolve(sol[:3], sol[3:], tuple(res))


def _skew(r):
    return np.array([[0.0, -r[2], r[1]], [r[2], 0.0, -r[0]], [-r[1], r[0], 0.0]])


def step(state: WorldState, command) -> WorldState:
    """Advance one step toward the commanded joint targets."""
    if state.dropped:
        raise AlreadyDropped("object already dropped")
    cfg, obj, pose = state.config, state.object_model, state.object
    targets = getattr(command, "joint_targets", command)
    targets = joint_vector(targets).reshape(3, 3)
    j0 = state.joints.reshape(3, 3)
    j = j0.copy()

    d2 = np.clip(targets[:, 1] - j0[:, 1], -cfg.pivot_rate_limit, cfg.pivot_rate_limit)
    j[:, 1] = np.clip(j0[:, 1] + d2, -cfg.pivot_limit, cfg.pivot_limit)
    d3 = np.clip(targets[:, 2] - j0[:, 2], -cfg.roller_rate_limit, cfg.roller_rate_limit)
    j[:, 2] = j0[:, 2] + d3
    for i in range(3):
        d1 = float(np.clip(targets[i, 0] - j0[i, 0], -cfg.base_rate_limit, cfg.base_rate_limit))
        j[i, 0] = _comply(cfg, obj, pose, i, j0[i, 0] + d1, j0[i, 0])

    frames, contacts = compute_contacts(cfg, obj, pose, j.reshape(9))
    dpivot = j[:, 1] - j0[:, 1]
    droll = j[:, 2] - j0[:, 2]
    points = np.array([c.point for c in contacts])
    normals = np.array([c.normal for c in contacts])
    active = [c.gap <= CONTACT_TOL for c in contacts]
    vsurf = np.empty((3, 3))
    for i, (f, c) in enumerate(zip(frames, contacts)):
        arm = c.point - f.roller_center
        vsurf[i] = droll[i] * np.cross(f.z3, arm) + dpivot[i] * np.cross(f.z2, arm)
    twist = solve_object_twist(points, normals, pose.position, vsurf, active,
                               state.normal_weight)

    if np.any(twist.omega):
        orientation = quat_mul(quat_from_rotvec(twist.omega), pose.orientation)
    else:
        orientation = pose.orientation
    new_pose = Pose(pose.position + twist.v, orientation)
    for i in range(3):
        j[i, 0] = _comply(cfg, obj, new_pose, i, j[i, 0], j[i, 0])
    joints = j.reshape(9)
    _, contacts = compute_contacts(cfg, obj, new_pose, joints)
    new = replace(state, joints=joints, object=new_pose, previous_object=pose,
                  contacts=contacts, step_index=state.step_index + 1,
                  residuals=tuple(float(r) for r in twist.slip_residual_per_contact))
    return replace(new, dropped=check_drop(new))


def check_drop(state: WorldState) -> bool:
    if any(c.gap > DROP_GAP for c in state.contacts):
        return True
    return bool(state.object.position[2] < state.grasp_height - DROP_FALL)


def _measure(pose: Pose, sensors: SensorModel, seed: int, step_index: int) -> Pose:
    if sensors.sigma_pos == 0.0 and sensors.sigma_ang == 0.0:
        return pose
    g = rng.stream(seed, rng.SENSOR, step_index)
    dpos = g.normal(0.0, 1.0, 3) * sensors.sigma_pos
    axis = g.normal(0.0, 1.0, 3)
    axis /= np.linalg.norm(axis)
    angle = g.normal(0.0, 1.0) * sensors.sigma_ang
    noise_q = quat_from_angle_axis(AngleAxis(axis, angle))
    return Pose(pose.position + dpos, quat_mul(noise_q, pose.orientation))


def read_sensors(state: WorldState) -> SensorFrame:
    k = state.step_index
    cur = _measure(state.object, state.sensors, state.rng_seed, k)
    prev = cur if k == 0 else _measure(state.previous_object, state.sensors,
                                       state.rng_seed, k - 1)
    return SensorFrame(state.joints.copy(), cur, prev)


class GraspEnv:
    """Owns one world state for an episode runner."""

    def __init__(self, config: GrasperConfig, object_model: ObjectModel,
                 sensors: SensorModel = NOISELESS, seed: int = 0,
                 normal_weight: float = 0.0):
        self.config = config
        self.object_model = object_model
        self.sensor_model = sensors
        self.seed = seed
        self.normal_weight = normal_weight
        self.state: WorldState | None = None

    def reset(self, start: Pose, seed: int | None = None) -> WorldState:
        if seed is not None:
            self.seed = seed
        self.state = init_grasp(self.config, self.object_model, start, self.seed,
                                self.sensor_model, self.normal_weight)
        return self.state

    def step(self, command) -> WorldState:
        self.state = step(self.state, command)
        return self.state

    def read_sensors(self) -> SensorFrame:
        return read_sensors(self.state)
