"""Experiment batteries: simple (S), difficult (D) and novel-object (N) suites.

Every case starts at the identity orientation and asks for a rotation of
``angle`` about ``axis``. Each case is repeated over ``trials`` noise seeds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .controller import DEFAULT_MAX_STEPS, DEFAULT_STOP_THRESHOLD, TargetSpec, run_episode
from .core import AngleAxis, ObjectModel, Pose, cube, prism, quat_from_angle_axis, unit
from .metrics import orientation_error

__all__ = [
    "orientation_error", "SuiteCase", "SuiteSpec", "TrialRecord", "SuiteResult",
    "suite_S", "suite_D", "suite_N", "default_suites", "run_suite", "compare_report",
    "Report", "START_POSITION", "FAILED_E_OMEGA",
]

START_POSITION = (0.0, 0.0, 170.0)
FAILED_E_OMEGA = 100.0

S_AXES = ([0, 0, 1], [0.25, 0, 0.968], [0, 0.25, 0.968], [0.35, 0.35, 0.868],
          [-0.25, 0, 0.968])
D_AXES = ([1, 0, 0], [0, 1, 0], [0.707, 0.707, 0], [0.968, 0, 0.25], [0, 0.968, 0.25],
          [0.707, -0.707, 0])
N_AXES = ([1, 0, 0], [0.707, 0.707, 0])


@dataclass(frozen=True, eq=False)
class SuiteCase:
    axis: np.ndarray
    angle: float
    object_model: ObjectModel
    object_name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "axis", unit(self.axis))

    def spec(self, start_position=START_POSITION) -> TargetSpec:
        target = quat_from_angle_axis(AngleAxis(self.axis, self.angle))
        return TargetSpec(Pose(start_position), Pose(start_position, target))


@dataclass(frozen=True, eq=False)
class SuiteSpec:
    name: str
    cases: tuple
    trials: int = 5
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "cases", tuple(self.cases))
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")

    def __len__(self):
        return len(self.cases)

    def specs(self) -> list[TargetSpec]:
        return [c.spec() for c in self.cases]


def _suite(name, axes, obj, obj_name, trials, seed, angle=math.pi / 2):
    return SuiteSpec(name, [SuiteCase(a, angle, obj, obj_name) for a in axes], trials, seed)


def suite_S(trials=5, seed=0, obj=None) -> SuiteSpec:
    return _suite("S", S_AXES, obj or cube(), "cube", trials, seed)


def suite_D(trials=5, seed=0, obj=None) -> SuiteSpec:
    return _suite("D", D_AXES, obj or cube(), "cube", trials, seed)


def suite_N(trials=5, seed=0, obj=None) -> SuiteSpec:
    return _suite("N", N_AXES, obj or prism(), "prism", trials, seed)


def default_suites(names="all", trials=5, seed=0) -> list[SuiteSpec]:
    makers = {"S": suite_S, "D": suite_D, "N": suite_N}
    if names == "all":
        names = "SDN"
    out = []
    for n in names:
        if n not in makers:
            raise ValueError(f"unknown suite {n!r}")
        out.append(makers[n](trials, seed))
    return out


@dataclass(frozen=True)
class TrialRecord:
    case: int
    trial: int
    seed: int
    final_e_omega: float
    steps: int
    reason: str
    dropped: bool


@dataclass(eq=False)
class SuiteResult:
    suite: SuiteSpec
    policy: str
    records: list = field(default_factory=list)

    @property
    def values(self) -> np.ndarray:
        return np.array([r.final_e_omega for r in self.records], dtype=float)

    @property
    def mean(self) -> float:
        v = self.values
        return float(v.mean()) if v.size else math.nan

    @property
    def std(self) -> float:
        v = self.values
        return float(v.std(ddof=1)) if v.size > 1 else 0.0

    @property
    def drop_count(self) -> int:
        return sum(r.dropped for r in self.records)

    @property
    def reasons(self) -> list[str]:
        return [r.reason for r in self.records]

    def per_case(self) -> list[np.ndarray]:
        out = [[] for _ in self.suite.cases]
        for r in self.records:
            out[r.case].append(r.final_e_omega)
        return [np.array(v) for v in out]


def run_suite(policy, suite: SuiteSpec, env_factory, max_steps: int = DEFAULT_MAX_STEPS,
              stop_threshold: float = DEFAULT_STOP_THRESHOLD, trials: int | None = None,
              seed: int | None = None) -> SuiteResult:
    """Run every (case, trial) of ``suite`` and collect final orientation errors.

    ``env_factory(object_model)`` builds a fresh environment. Dropped
    episodes are recorded with the failure value 100.
    """
    if not suite.cases:
        raise ValueError("empty suite")
    trials = suite.trials if trials is None else trials
    seed = suite.seed if seed is None else seed
    result = SuiteResult(suite, getattr(policy, "name", str(policy)))
    for ci, case in enumerate(suite.cases):
        env = env_factory(case.object_model)
        spec = case.spec()
        for t in range(trials):
            s = rng.episode_seed(seed, ci, t)
            traj = run_episode(env, policy, spec, max_steps, stop_threshold, seed=s)
            dropped = traj.reason == "dropped"
            e = FAILED_E_OMEGA if dropped else float(traj.final_e_omega)
            result.records.append(TrialRecord(ci, t, s, e, len(traj), traj.reason, dropped))
    return result


@dataclass
class Report:
    header: list
    rows: list
    footer: list

    def lines(self) -> list[str]:
        def fmt(v):
            return f"{v:.3f}" if isinstance(v, float) else str(v)
        return [",".join(fmt(v) for v in r) for r in [self.header, *self.rows, *self.footer]]


def compare_report(results: dict) -> Report:
    """Side-by-side table of final errors keyed by ``(policy, suite_name)``.

    Rows are (suite, case, trial), columns are policies, the footer holds
    mean and std per policy and a delta-mean row when exactly two policies
    are compared.
    """
    if not results:
        raise ValueError("no results to report")
    policies = sorted({p for p, _ in results})
    suites = sorted({s for _, s in results})
    header = ["suite", "case", "trial", *policies]
    rows, footer = [], []
    for sname in suites:
        shapes = set()
        for p in policies:
            if (p, sname) not in results:
                raise ValueError(f"missing result for policy {p!r} on suite {sname!r}")
            shapes.add(tuple((r.case, r.trial) for r in results[(p, sname)].records))
        if len(shapes) != 1:
            raise ValueError(f"mismatched suite shapes for {sname!r}")
        keys = shapes.pop()
        for k, (c, t) in enumerate(keys):
            rows.append([sname, c, t, *(results[(p, sname)].records[k].final_e_omega
                                        for p in policies)])
        footer.append([sname, "mean", "", *(results[(p, sname)].mean for p in policies)])
        footer.append([sname, "std", "", *(results[(p, sname)].std for p in policies)])
        if len(policies) == 2:
            a, b = (results[(p, sname)].mean for p in policies)
            footer.append([sname, "delta_mean", "", b - a, ""])
    return Report(header, rows, footer)
