"""Shared geometry, quaternion algebra and configuration types.

Conventions
-----------
- Quaternions are scalar-first ``[w, x, y, z]`` numpy arrays, Hamilton product,
  right-handed frames.
- Positions in millimetres, masses in grams, angles in radians.
- Angle-axis values are canonical: angle in ``[0, pi]`` with the axis flipped
  when needed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])
Z_AXIS = np.array([0.0, 0.0, 1.0])


def vec3(x, y=None, z=None) -> np.ndarray:
    if y is None:
        v = np.asarray(x, dtype=float).reshape(3)
    else:
        v = np.array([x, y, z], dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError(f"non-finite vector {v}")
    return v


def unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = math.sqrt(float(v @ v))
    if n == 0.0:
        raise ValueError("cannot normalize zero vector")
    return v / n


# ---------------------------------------------------------------------------
# quaternions


def quat(w, x=None, y=None, z=None) -> np.ndarray:
    """Build a unit quaternion, normalizing the input."""
    if x is None:
        q = np.asarray(w, dtype=float).reshape(4)
    else:
        q = np.array([w, x, y, z], dtype=float)
    return quat_normalize(q)


def quat_normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = math.sqrt(float(q @ q))
    if n == 0.0 or not math.isfinite(n):
        raise ValueError(f"invalid quaternion {q}")
    if n == 1.0:
        return q.copy()
    return q / n


def quat_conj(q) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]], dtype=float)


def _hamilton(q1, q2) -> np.ndarray:
    w1, x1, y1, z1 = q1
    w2, x2, y2, z2 = q2
    return np.array([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ])


def quat_mul(q1, q2) -> np.ndarray:
    """Hamilton product ``q1 * q2``, renormalized."""
    return quat_normalize(_hamilton(q1, q2))


def quat_rotate(q, v) -> np.ndarray:
    """Rotate vector ``v`` by unit quaternion ``q``."""
    w = q[0]
    u = np.asarray(q[1:], dtype=float)
    v = np.asarray(v, dtype=float)
    t = 2.0 * np.cross(u, v)
    return v + w * t + np.cross(u, t)


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


@dataclass(frozen=True, eq=False)
class AngleAxis:
    axis: np.ndarray
    angle: float

    def __post_init__(self):
        object.__setattr__(self, "axis", vec3(self.axis))
        object.__setattr__(self, "angle", float(self.angle))

    @property
    def rotvec(self) -> np.ndarray:
        return self.axis * self.angle


def quat_from_angle_axis(aa: AngleAxis) -> np.ndarray:
    if aa.angle == 0.0:
        return IDENTITY_QUAT.copy()
    n = math.sqrt(float(aa.axis @ aa.axis))
    if n == 0.0:
        raise ValueError("zero rotation axis with nonzero angle")
    axis = aa.axis / n
    h = 0.5 * aa.angle
    return quat_normalize(np.concatenate(([math.cos(h)], math.sin(h) * axis)))


def quat_from_rotvec(rv) -> np.ndarray:
    rv = np.asarray(rv, dtype=float)
    angle = math.sqrt(float(rv @ rv))
    if angle == 0.0:
        return IDENTITY_QUAT.copy()
    return quat_from_angle_axis(AngleAxis(rv / angle, angle))


def quat_to_angle_axis(q) -> AngleAxis:
    """Canonical angle-axis of ``q``: angle in [0, pi].

    The identity maps to angle 0 about +z.
    """
    q = np.asarray(q, dtype=float)
    if q[0] < 0.0:
        q = -q
    s = math.sqrt(float(q[1:] @ q[1:]))
    if s == 0.0:
        return AngleAxis(Z_AXIS, 0.0)
    angle = 2.0 * math.atan2(s, q[0])
    axis = q[1:] / s
    if angle > math.pi:  # only reachable through rounding
        angle = 2.0 * math.pi - angle
        axis = -axis
    return AngleAxis(axis, angle)


def quat_to_rotvec(q) -> np.ndarray:
    return quat_to_angle_axis(q).rotvec


# ---------------------------------------------------------------------------
# poses


@dataclass(frozen=True, eq=False)
class Pose:
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    orientation: np.ndarray = field(default_factory=lambda: IDENTITY_QUAT.copy())

    def __post_init__(self):
        object.__setattr__(self, "position", vec3(self.position))
        object.__setattr__(self, "orientation", quat_normalize(self.orientation))

    def __eq__(self, other):
        if not isinstance(other, Pose):
            return NotImplemented
        return bool(np.array_equal(self.position, other.position)
                    and np.array_equal(self.orientation, other.orientation))

    def to_list(self) -> list[float]:
        return [float(v) for v in (*self.position, *self.orientation)]

    @classmethod
    def from_list(cls, values) -> "Pose":
        values = list(values)
        if len(values) != 7:
            raise ValueError(f"pose needs 7 values, got {len(values)}")
        return cls(np.array(values[:3]), np.array(values[3:]))


def pose_delta(current: Pose, target: Pose) -> tuple[np.ndarray, AngleAxis]:
    """Translation and canonical rotation carrying ``current`` onto ``target``."""
    translation = target.position - current.position
    if np.array_equal(target.orientation, current.orientation):
        return translation, AngleAxis(Z_AXIS, 0.0)
    dq = _hamilton(target.orientation, quat_conj(current.orientation))
    return translation, quat_to_angle_axis(dq)


# ---------------------------------------------------------------------------
# joints: finger-major [base, pivot, roller] x 3

N_FINGERS = 3
BASE, PIVOT, ROLLER = 0, 1, 2


def joint_vector(values=None) -> np.ndarray:
    if values is None:
        return np.zeros(9)
    v = np.asarray(values, dtype=float).reshape(9)
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite joint values")
    return v.copy()


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class GrasperConfig:
    link_a: float = 48.0
    link_b: float = 122.0
    roller_radius_r: float = 21.5
    base_circle_radius: float = 50.0
    finger_azimuths: tuple = (0.0, 2.0 * math.pi / 3.0, 4.0 * math.pi / 3.0)
    pivot_limit: float = math.pi / 2.0
    pivot_rate_limit: float = math.radians(3.0)
    base_rate_limit: float = math.radians(2.0)
    roller_rate_limit: float = 0.2
    lam: float = 0.05
    # None: derived at grasp time as contact angle + grip_preload
    grip_setpoint: float | None = None
    grip_preload: float = math.radians(0.5)
    leaky_slope: float = 0.01
    w_pos: float = 1.0
    pivot_flip_band: float = 0.0

    def __post_init__(self):
        for name in ("link_a", "link_b", "roller_radius_r", "base_circle_radius"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        for name in ("pivot_rate_limit", "base_rate_limit", "roller_rate_limit"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        if not 0.0 < self.lam <= 1.0:
            raise ValueError(f"lambda must be in (0, 1], got {self.lam}")
        if not 0.0 < self.pivot_limit <= math.pi / 2.0:
            raise ValueError(f"pivot_limit must be in (0, pi/2], got {self.pivot_limit}")
        if len(self.finger_azimuths) != N_FINGERS:
            raise ValueError("finger_azimuths needs three angles")
        object.__setattr__(self, "finger_azimuths",
                           tuple(float(a) for a in self.finger_azimuths))
        if self.w_pos < 0:
            raise ValueError(f"w_pos must be >= 0, got {self.w_pos}")

    @property
    def finger_length(self) -> float:
        return self.link_a + self.link_b


@dataclass(frozen=True)
class Sphere:
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"sphere radius must be > 0, got {self.radius}")


@dataclass(frozen=True)
class Box:
    dx: float
    dy: float
    dz: float

    def __post_init__(self):
        if not (self.dx > 0 and self.dy > 0 and self.dz > 0):
            raise ValueError(f"box dims must be > 0, got {(self.dx, self.dy, self.dz)}")

    @property
    def half_extents(self) -> np.ndarray:
        return 0.5 * np.array([self.dx, self.dy, self.dz])


@dataclass(frozen=True)
class ObjectModel:
    shape: Sphere | Box
    mass: float = 0.0

    @property
    def is_sphere(self) -> bool:
        return isinstance(self.shape, Sphere)

    @property
    def inscribed_radius(self) -> float:
        if self.is_sphere:
            return self.shape.radius
        return float(min(self.shape.half_extents))


def sphere(radius=30.0, mass=0.0) -> ObjectModel:
    return ObjectModel(Sphere(radius), mass)


def cube(side=60.0, mass=32.4) -> ObjectModel:
    return ObjectModel(Box(side, side, side), mass)


def prism(dx=60.0, dy=60.0, dz=80.0, mass=0.0) -> ObjectModel:
    return ObjectModel(Box(dx, dy, dz), mass)
