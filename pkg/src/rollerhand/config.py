"""Run configuration: a JSON file with explicit units in the field names.

Angles are given in degrees here and converted to radians on load; every
other quantity is already in the internal units (mm, g, rad/step for the
roller).
"""
from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field

from .core import GrasperConfig, ObjectModel, Pose, AngleAxis, Box, Sphere, quat_from_angle_axis, unit
from .controller import DEFAULT_MAX_STEPS, DEFAULT_STOP_THRESHOLD, TargetSpec
from .evalsuite import S_AXES, D_AXES, N_AXES, START_POSITION
from .world import SensorModel

OUT_ENV = "ROLLERHAND_OUT"
DEFAULT_OUT = "runs"


class ConfigError(ValueError):
    def __init__(self, message, path=None, line=None):
        self.path, self.line = path, line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)


# json key -> (internal name, converter)
_GRASPER_FIELDS = {
    "link_a_mm": ("link_a", float),
    "link_b_mm": ("link_b", float),
    "roller_radius_mm": ("roller_radius_r", float),
    "base_circle_radius_mm": ("base_circle_radius", float),
    "finger_azimuths_deg": ("finger_azimuths", lambda v: tuple(math.radians(float(a)) for a in v)),
    "pivot_limit_deg": ("pivot_limit", lambda v: math.radians(float(v))),
    "pivot_rate_limit_deg": ("pivot_rate_limit", lambda v: math.radians(float(v))),
    "base_rate_limit_deg": ("base_rate_limit", lambda v: math.radians(float(v))),
    "roller_rate_limit_rad": ("roller_rate_limit", float),
    "lambda": ("lam", float),
    "grip_setpoint_deg": ("grip_setpoint", lambda v: None if v is None else math.radians(float(v))),
    "grip_preload_deg": ("grip_preload", lambda v: math.radians(float(v))),
    "w_pos": ("w_pos", float),
    "pivot_flip_band_deg": ("pivot_flip_band", lambda v: math.radians(float(v))),
}

# checks stated on the json values, so messages use the user's units
_GRASPER_CHECKS = {
    "link_a_mm": (lambda v: v > 0, "must be > 0"),
    "link_b_mm": (lambda v: v > 0, "must be > 0"),
    "roller_radius_mm": (lambda v: v > 0, "must be > 0"),
    "base_circle_radius_mm": (lambda v: v > 0, "must be > 0"),
    "finger_azimuths_deg": (lambda v: len(v) == 3, "needs three angles"),
    "pivot_limit_deg": (lambda v: 0 < v <= 90, "must be in (0, 90]"),
    "pivot_rate_limit_deg": (lambda v: v > 0, "must be > 0"),
    "base_rate_limit_deg": (lambda v: v > 0, "must be > 0"),
    "roller_rate_limit_rad": (lambda v: v > 0, "must be > 0"),
    "lambda": (lambda v: 0 < v <= 1, "must be in (0, 1]"),
    "grip_preload_deg": (lambda v: v >= 0, "must be >= 0"),
    "w_pos": (lambda v: v >= 0, "must be >= 0"),
    "pivot_flip_band_deg": (lambda v: v >= 0, "must be >= 0"),
}

_SECTIONS = {
    "seed": None, "out_dir": None,
    "grasper": set(_GRASPER_FIELDS),
    "object": {"shape", "radius_mm", "dims_mm", "mass_g"},
    "sensors": {"sigma_pos_mm", "sigma_ang_deg"},
    "controller": {"stop_threshold", "max_steps"},
    "expert": {"suite", "axes", "angle_deg", "episodes", "start_position_mm"},
    "learner": {"epochs", "batch", "lr", "dagger_rounds", "min_loss_ratio"},
    "eval": {"suite", "trials"},
}

_SUITE_AXES = {"S": S_AXES, "D": D_AXES, "N": N_AXES}


@dataclass(eq=False)
class RunConfig:
    grasper: GrasperConfig = field(default_factory=GrasperConfig)
    object_model: ObjectModel = field(default_factory=lambda: ObjectModel(Box(60.0, 60.0, 60.0), 32.4))
    sensors: SensorModel = field(default_factory=SensorModel)
    stop_threshold: float = DEFAULT_STOP_THRESHOLD
    max_steps: int = DEFAULT_MAX_STEPS
    expert_axes: tuple = S_AXES
    expert_angle: float = math.pi / 2
    expert_episodes: int = 50
    start_position: tuple = START_POSITION
    epochs: int = 200
    batch: int = 64
    lr: float = 1e-3
    dagger_rounds: int = 0
    min_loss_ratio: float = 10.0
    suite: str = "S"
    trials: int = 5
    seed: int = 0
    out_dir: str | None = None

    def expert_specs(self) -> list[TargetSpec]:
        start = Pose(self.start_position)
        return [TargetSpec(start, Pose(self.start_position,
                                       quat_from_angle_axis(AngleAxis(unit(a), self.expert_angle))))
                for a in self.expert_axes]

    def hyper(self) -> dict:
        return {"epochs": self.epochs, "batch": self.batch, "lr": self.lr, "seed": self.seed}

    def output_dir(self) -> str:
        if self.out_dir:
            return self.out_dir
        return os.environ.get(OUT_ENV, DEFAULT_OUT)

    def canonical(self) -> dict:
        """Semantic content only (the output directory is excluded)."""
        g = self.grasper
        shape = self.object_model.shape
        obj = ({"shape": "sphere", "radius": shape.radius} if isinstance(shape, Sphere)
               else {"shape": "box", "dims": [shape.dx, shape.dy, shape.dz]})
        obj["mass"] = self.object_model.mass
        return {
            "grasper": {k: (list(v) if isinstance(v, tuple) else v)
                        for k, v in vars(g).items()},
            "object": obj,
            "sensors": {"sigma_pos": self.sensors.sigma_pos, "sigma_ang": self.sensors.sigma_ang},
            "controller": {"stop_threshold": self.stop_threshold, "max_steps": self.max_steps},
            "expert": {"axes": [[float(x) for x in a] for a in self.expert_axes],
                       "angle": self.expert_angle, "episodes": self.expert_episodes,
                       "start_position": [float(x) for x in self.start_position]},
            "learner": {"epochs": self.epochs, "batch": self.batch, "lr": self.lr,
                        "dagger_rounds": self.dagger_rounds,
                        "min_loss_ratio": self.min_loss_ratio},
            "eval": {"suite": self.suite, "trials": self.trials},
            "seed": self.seed,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _line_of(text: str, keys) -> int | None:
    pos = 0
    idx = -1
    for k in keys:
        idx = text.find(f'"{k}"', pos)
        if idx < 0:
            return None
        pos = idx + 1
    return text.count("\n", 0, idx) + 1


def _number(v, where, kind=float):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise TypeError(f"{where}: expected a number, got {v!r}")
    if kind is int and (not float(v).is_integer()):
        raise TypeError(f"{where}: expected an integer, got {v!r}")
    return kind(v)


def parse_config(text: str, path: str = "<config>") -> RunConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON: {e.msg} (column {e.colno})", path, e.lineno) from None
    if not isinstance(raw, dict):
        raise ConfigError("top level must be an object", path, 1)

    def fail(msg, *keys):
        raise ConfigError(msg, path, _line_of(text, keys))

    for key, val in raw.items():
        if key not in _SECTIONS:
            fail(f"unknown field {key!r}", key)
        allowed = _SECTIONS[key]
        if allowed is not None:
            if not isinstance(val, dict):
                fail(f"{key}: expected an object", key)
            for sub in val:
                if sub not in allowed:
                    fail(f"unknown field {key}.{sub}", key, sub)

    cfg = RunConfig()
    g = raw.get("grasper", {})
    kwargs = {}
    for key, val in g.items():
        name, conv = _GRASPER_FIELDS[key]
        if key == "finger_azimuths_deg":
            if not isinstance(val, list):
                fail("grasper.finger_azimuths_deg: expected a list", "grasper", key)
            check_val = val
        elif key == "grip_setpoint_deg" and val is None:
            check_val = None
        else:
            try:
                check_val = _number(val, f"grasper.{key}")
            except TypeError as e:
                fail(str(e), "grasper", key)
        check = _GRASPER_CHECKS.get(key)
        if check and not check[0](check_val):
            fail(f"grasper.{key} {check[1]}, got {val!r}", "grasper", key)
        kwargs[name] = conv(val)
    try:
        cfg.grasper = GrasperConfig(**kwargs)
    except ValueError as e:
        fail(f"grasper: {e}", "grasper")

    o = raw.get("object")
    if o is not None:
        shape = o.get("shape", "box")
        mass = _checked(o, "mass_g", 0.0, lambda v: v >= 0, "must be >= 0", fail, "object")
        if shape == "sphere":
            r = _checked(o, "radius_mm", 30.0, lambda v: v > 0, "must be > 0", fail, "object")
            cfg.object_model = ObjectModel(Sphere(r), mass)
        elif shape == "box":
            dims = o.get("dims_mm", [60.0, 60.0, 60.0])
            if (not isinstance(dims, list) or len(dims) != 3
                    or not all(isinstance(d, (int, float)) and not isinstance(d, bool)
                               and d > 0 for d in dims)):
                fail(f"object.dims_mm must be three positive numbers, got {dims!r}",
                     "object", "dims_mm")
            cfg.object_model = ObjectModel(Box(*map(float, dims)), mass)
        else:
            fail(f"object.shape must be 'sphere' or 'box', got {shape!r}", "object", "shape")

    s = raw.get("sensors", {})
    cfg.sensors = SensorModel(
        _checked(s, "sigma_pos_mm", 1.0, lambda v: v >= 0, "must be >= 0", fail, "sensors"),
        math.radians(_checked(s, "sigma_ang_deg", 1.0, lambda v: v >= 0, "must be >= 0",
                              fail, "sensors")))

    c = raw.get("controller", {})
    cfg.stop_threshold = _checked(c, "stop_threshold", DEFAULT_STOP_THRESHOLD,
                                  lambda v: 0 <= v <= 100, "must be in [0, 100]", fail,
                                  "controller")
    cfg.max_steps = _checked(c, "max_steps", DEFAULT_MAX_STEPS, lambda v: v >= 1,
                             "must be >= 1", fail, "controller", int)

    e = raw.get("expert", {})
    if "axes" in e and "suite" in e:
        fail("expert: give either suite or axes, not both", "expert")
    if "axes" in e:
        axes = e["axes"]
        ok = isinstance(axes, list) and axes and all(
            isinstance(a, list) and len(a) == 3
            and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in a)
            and any(x != 0 for x in a) for a in axes)
        if not ok:
            fail("expert.axes must be a non-empty list of nonzero 3-vectors", "expert", "axes")
        cfg.expert_axes = tuple(tuple(float(x) for x in a) for a in axes)
    elif "suite" in e:
        if e["suite"] not in _SUITE_AXES:
            fail(f"expert.suite must be one of S, D, N, got {e['suite']!r}", "expert", "suite")
        cfg.expert_axes = _SUITE_AXES[e["suite"]]
    cfg.expert_angle = math.radians(_checked(e, "angle_deg", 90.0, lambda v: 0 < v <= 180,
                                             "must be in (0, 180]", fail, "expert"))
    cfg.expert_episodes = _checked(e, "episodes", 50, lambda v: v >= 1, "must be >= 1",
                                   fail, "expert", int)
    if "start_position_mm" in e:
        sp = e["start_position_mm"]
        if not (isinstance(sp, list) and len(sp) == 3 and all(
                isinstance(x, (int, float)) and not isinstance(x, bool) for x in sp)):
            fail("expert.start_position_mm must be three numbers", "expert",
                 "start_position_mm")
        cfg.start_position = tuple(float(x) for x in sp)

    ln = raw.get("learner", {})
    cfg.epochs = _checked(ln, "epochs", 200, lambda v: v >= 0, "must be >= 0", fail,
                          "learner", int)
    cfg.batch = _checked(ln, "batch", 64, lambda v: v >= 1, "must be >= 1", fail,
                         "learner", int)
    cfg.lr = _checked(ln, "lr", 1e-3, lambda v: v > 0, "must be > 0", fail, "learner")
    cfg.dagger_rounds = _checked(ln, "dagger_rounds", 0, lambda v: v >= 0, "must be >= 0",
                                 fail, "learner", int)
    cfg.min_loss_ratio = _checked(ln, "min_loss_ratio", 10.0, lambda v: v >= 1,
                                  "must be >= 1", fail, "learner")

    ev = raw.get("eval", {})
    suite = ev.get("suite", "S")
    if suite not in ("S", "D", "N", "all"):
        fail(f"eval.suite must be one of S, D, N, all, got {suite!r}", "eval", "suite")
    cfg.suite = suite
    cfg.trials = _checked(ev, "trials", 5, lambda v: v >= 1, "must be >= 1", fail, "eval", int)

    if "seed" in raw:
        seed = raw["seed"]
        if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2 ** 64:
            fail(f"seed must be an unsigned 64-bit integer, got {seed!r}", "seed")
        cfg.seed = seed
    if "out_dir" in raw:
        if not isinstance(raw["out_dir"], str):
            fail("out_dir must be a string", "out_dir")
        cfg.out_dir = raw["out_dir"]
    return cfg


def _checked(section, key, default, pred, msg, fail, name, kind=float):
    if key not in section:
        return default
    val = section[key]
    try:
        v = _number(val, f"{name}.{key}", kind)
    except TypeError as e:
        fail(str(e), name, key)
    if not pred(v):
        fail(f"{name}.{key} {msg}, got {val!r}", name, key)
    return v


def load_config(path) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        with open(path, encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e.strerror}", str(path)) from None
    return parse_config(text, str(path))
