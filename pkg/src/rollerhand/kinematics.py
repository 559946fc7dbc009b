"""Finger forward kinematics, contact geometry and the contact-motion split.

Finger chain (per finger ``i``):

- base origin on a horizontal circle at azimuth ``finger_azimuths[i]``;
- base axis ``Z1`` horizontal, tangent to that circle, oriented so that a
  positive base angle tilts the finger inward;
- finger axis ``F = R(theta1, Z1) Z0``; link ``a`` then link ``b`` run along
  it and end at the roller centre;
- pivot axis ``Z2 = F x Z1`` (perpendicular to the finger, radial);
- roller spin axis ``Z3 = cos(theta2) F + sin(theta2) Z1``: at zero pivot
  the roller axis lies along the finger.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import GrasperConfig, ObjectModel, Z_AXIS, unit

CONTACT_TOL = 1.0  # mm of gap still counted as touching
POLE_TOL = 1e-6
ARM_TOL = 1e-6


class KinematicsError(Exception):
    pass


class NoContact(KinematicsError):
    pass


class DegenerateContact(KinematicsError):
    pass


class DegenerateRollDirection(KinematicsError):
    pass


class PoleContact(KinematicsError):
    pass


class ZeroMomentArm(KinematicsError):
    pass


@dataclass(frozen=True, eq=False)
class FingerFrames:
    base_origin: np.ndarray
    z0: np.ndarray
    z1: np.ndarray
    z2: np.ndarray
    z3: np.ndarray
    finger_axis: np.ndarray
    radial: np.ndarray
    roller_center: np.ndarray
    roller_radius: float
    length: float


@dataclass(frozen=True, eq=False)
class ContactState:
    point: np.ndarray
    normal: np.ndarray
    gap: float = 0.0


@dataclass(frozen=True, eq=False)
class ContactDecomposition:
    delta_x_cb: np.ndarray
    delta_x_cr: np.ndarray
    alpha: float
    beta: float
    z_cr_hat: np.ndarray
    degenerate: bool


@dataclass(frozen=True)
class JointRates:
    omega1: float
    omega3: float
    theta2_target: float


def finger_base(config: GrasperConfig, finger_index: int):
    """Base origin, base axis and outward radial direction of a finger."""
    if finger_index not in (0, 1, 2):
        raise IndexError(f"finger_index must be 0, 1 or 2, got {finger_index}")
    phi = config.finger_azimuths[finger_index]
    radial = np.array([math.cos(phi), math.sin(phi), 0.0])
    o1 = config.base_circle_radius * radial
    z1 = np.array([math.sin(phi), -math.cos(phi), 0.0])
    return o1, z1, radial


def forward_finger(config: GrasperConfig, finger_index: int, theta1: float,
                   theta2: float) -> FingerFrames:
    if abs(theta2) > config.pivot_limit + 1e-12:
        raise ValueError(f"pivot angle {theta2} outside +/-{config.pivot_limit}")
    o1, z1, radial = finger_base(config, finger_index)
    c1, s1 = math.cos(theta1), math.sin(theta1)
    f = c1 * Z_AXIS - s1 * radial
    z2 = np.cross(f, z1)
    z3 = math.cos(theta2) * f + math.sin(theta2) * z1
    length = config.finger_length
    return FingerFrames(
        base_origin=o1, z0=Z_AXIS.copy(), z1=z1, z2=z2, z3=z3, finger_axis=f,
        radial=radial, roller_center=o1 + length * f,
        roller_radius=config.roller_radius_r, length=length,
    )


def hand_frames(config: GrasperConfig, joints) -> list[FingerFrames]:
    j = np.asarray(joints, dtype=float).reshape(3, 3)
    return [forward_finger(config, i, j[i, 0], j[i, 1]) for i in range(3)]


def contact_state(frames: FingerFrames, obj: ObjectModel, x_obj,
                  tol: float = CONTACT_TOL) -> ContactState:
    """Contact point and normal between a roller and a spherical object."""
    if not obj.is_sphere:
        raise TypeError("contact_state models a spherical object")
    d = np.asarray(x_obj, dtype=float) - frames.roller_center
    dist = float(np.linalg.norm(d))
    if dist == 0.0:
        raise DegenerateContact("object centre coincides with roller centre")
    gap = dist - obj.shape.radius - frames.roller_radius
    if gap > tol:
        raise NoContact(f"gap {gap:.3f} mm exceeds {tol} mm")
    n = d / dist
    return ContactState(frames.roller_center + frames.roller_radius * n, n, gap)


def approx_contact(frames: FingerFrames, x_obj) -> ContactState:
    """Contact under the spherical-object approximation, no gap test.

    The approximating sphere is centred on ``x_obj`` and touches the roller.
    """
    d = np.asarray(x_obj, dtype=float) - frames.roller_center
    dist = float(np.linalg.norm(d))
    if dist == 0.0:
        raise DegenerateContact("object centre coincides with roller centre")
    n = d / dist
    return ContactState(frames.roller_center + frames.roller_radius * n, n, 0.0)


def contact_velocity_from_twist(v_obj, omega_obj, p, x_obj) -> np.ndarray:
    return np.asarray(v_obj, dtype=float) + np.cross(
        omega_obj, np.asarray(p, dtype=float) - np.asarray(x_obj, dtype=float))


def decompose_contact_motion(delta_x_contact, z_cb_hat, n_con_hat) -> ContactDecomposition:
    alpha, beta, zcr, degenerate = kernels.decompose(delta_x_contact, z_cb_hat, n_con_hat)
    zcb = np.asarray(z_cb_hat, dtype=float)
    zcr = np.array(zcr)
    return ContactDecomposition(
        delta_x_cb=alpha * zcb, delta_x_cr=beta * zcr, alpha=alpha, beta=beta,
        z_cr_hat=zcr, degenerate=bool(degenerate),
    )


def roller_axis_for(z1, z2, z_cr_hat, z0) -> np.ndarray:
    """Roller spin axis whose rolling direction is ``z_cr_hat``, kept in the Z0 half-space."""
    z3 = np.cross(z2, z_cr_hat)
    n = float(np.linalg.norm(z3))
    if n <= 1e-9:
        raise DegenerateRollDirection("pivot axis parallel to rolling direction")
    z3 = z3 / n
    if float(z3 @ z0) < 0.0:
        z3 = -z3
    return z3


def pivot_angle_for(z1, z2, z_cr_hat, z0, limit: float = math.pi / 2) -> float:
    """Pivot angle aligning the rolling direction with ``z_cr_hat``.

    The angle is measured about ``Z2`` from the finger axis ``Z1 x Z2``
    toward ``Z1``; with ``Z3`` in the Z0 half-space it equals
    ``pi/2 - arccos(Z1 . Z3)``.
    """
    z3 = roller_axis_for(z1, z2, z_cr_hat, z0)
    f = np.cross(z1, z2)
    theta = math.atan2(float(z3 @ z1), float(z3 @ f))
    return min(max(theta, -limit), limit)


def rolling_direction(z3, n_con_hat) -> np.ndarray:
    """Unit surface-velocity direction at the contact for positive roller spin."""
    return unit(np.cross(z3, n_con_hat))


def roller_rate_for(delta_x_cr, z3, n_con_hat, r: float) -> float:
    t = np.cross(z3, n_con_hat)
    arm = float(np.linalg.norm(t))
    if arm <= POLE_TOL:
        raise PoleContact("contact at the roller pole")
    d = np.asarray(delta_x_cr, dtype=float)
    mag = float(np.linalg.norm(d))
    if mag == 0.0:
        return 0.0
    rate = mag / (r * arm)
    return rate if float(t @ d) >= 0.0 else -rate


def base_rate_for(delta_x_cb, frames: FingerFrames, p) -> float:
    t = np.cross(frames.z1, np.asarray(p, dtype=float) - frames.base_origin)
    arm = float(np.linalg.norm(t))
    if arm <= ARM_TOL:
        raise ZeroMomentArm("contact on the base axis")
    d = np.asarray(delta_x_cb, dtype=float)
    mag = float(np.linalg.norm(d))
    if mag == 0.0:
        return 0.0
    rate = mag / arm
    return rate if float(t @ d) >= 0.0 else -rate
