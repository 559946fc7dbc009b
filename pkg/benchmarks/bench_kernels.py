"""Compare the compiled and pure-Python kernel backends.

    python benchmarks/bench_kernels.py [--repeat 5]

Times each kernel on fixed inputs, then a full 90 degree closed-loop episode
on the cube. Prints microseconds per call and the speedup.
"""
import argparse
import math
import timeit

import numpy as np

from rollerhand import kernels
from rollerhand.controller import HandcraftedPolicy, TargetSpec, run_episode
from rollerhand.core import AngleAxis, GrasperConfig, Pose, cube, quat_from_angle_axis
from rollerhand.world import NOISELESS, GraspEnv

START = [0.0, 0.0, 170.0]
Q = [math.cos(0.2), 0.0, math.sin(0.2), 0.0]
PTS = np.array([[30.0, 0.0, 170.0], [-15.0, 26.0, 170.0], [-15.0, -26.0, 170.0]])
NRM = -(PTS - START) / 30.0
VS = np.array([[0.0, 0.6, 0.0], [-0.5, -0.3, 0.0], [0.5, -0.3, 0.0]])

CASES = {
    "decompose": lambda: kernels.decompose([1.0, 2.0, 3.0], [0.0, 0.0, 1.0], [0.6, 0.8, 0.0]),
    "solve_twist": lambda: kernels.solve_twist(PTS, NRM, START, VS, (True, True, True)),
    "surface_gap": lambda: kernels.surface_gap([50.0, 0.0, 170.0], 21.5, START, Q, 1,
                                               [25.0, 25.0, 25.0]),
    "contact_angle": lambda: kernels.contact_angle(
        -0.5, 0.5, [50.0, 0.0, 0.0], [0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], 170.0, 21.5,
        START, Q, 1, [25.0, 25.0, 25.0]),
}


def episode():
    spec = TargetSpec(Pose(START), Pose(START, quat_from_angle_axis(AngleAxis([0, 0, 1], math.pi / 2))))
    run_episode(GraspEnv(GrasperConfig(), cube(), NOISELESS), HandcraftedPolicy(GrasperConfig()),
                spec, max_steps=3000)


def best_of(fn, number, repeat):
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    backends = ["python"] + (["cython"] if kernels.cython_available() else [])
    if len(backends) == 1:
        print("compiled extension not built; timing the Python backend only")
    rows = {}
    for name in backends:
        kernels.use_backend(name)
        for case, fn in CASES.items():
            rows.setdefault(case, {})[name] = best_of(fn, 2000, args.repeat) * 1e6
        rows.setdefault("episode (cube, 90 deg)", {})[name] = best_of(episode, 1, args.repeat) * 1e6
    print(f"{'kernel':<24}" + "".join(f"{b + ' us':>14}" for b in backends) + f"{'speedup':>10}")
    for case, t in rows.items():
        line = f"{case:<24}" + "".join(f"{t[b]:>14.1f}" for b in backends)
        if "cython" in t:
            line += f"{t['python'] / t['cython']:>9.1f}x"
        print(line)


if __name__ == "__main__":
    main()
