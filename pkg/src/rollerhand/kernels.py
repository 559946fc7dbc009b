"""Backend selection for the per-step contact kernels.

The compiled extension is used when it was built; otherwise the pure-Python
module is loaded. Set ``ROLLERHAND_PURE_PYTHON=1`` to force the fallback.
"""
import os

import numpy as np

from . import _kernels_py

if os.environ.get("ROLLERHAND_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"


def use_backend(name: str) -> None:
    """Switch backend at runtime ("cython" or "python"). Used by benchmarks/tests."""
    global _impl, BACKEND
    if name == "python":
        _impl = _kernels_py
    elif name == "cython":
        from . import _kernels
        _impl = _kernels
    else:
        raise ValueError(f"unknown backend {name!r}")
    BACKEND = name


def cython_available() -> bool:
    try:
        from . import _kernels  # noqa: F401
    except ImportError:
        return False
    return True


def _arr(v):
    a = np.ascontiguousarray(v, dtype=np.float64).reshape(-1)
    # plain floats are much faster than numpy scalars in the Python kernels
    return a.tolist() if BACKEND == "python" else a


def decompose(dx, zcb, n):
    return _impl.decompose(_arr(dx), _arr(zcb), _arr(n))


def solve_twist(points, normals, x, vsurf, active, normal_weight=0.0):
    return _impl.solve_twist(_arr(points), _arr(normals), _arr(x), _arr(vsurf),
                             tuple(bool(a) for a in active), float(normal_weight))


def surface_gap(c, r, x, q, kind, dims):
    return _impl.surface_gap(_arr(c), float(r), _arr(x), _arr(q), int(kind), _arr(dims))


def finger_gap(theta, o1, z0, er, length, r, x, q, kind, dims):
    return _impl.finger_gap(float(theta), _arr(o1), _arr(z0), _arr(er), float(length),
                            float(r), _arr(x), _arr(q), int(kind), _arr(dims))


def contact_angle(lo, hi, o1, z0, er, length, r, x, q, kind, dims):
    return _impl.contact_angle(float(lo), float(hi), _arr(o1), _arr(z0), _arr(er),
                               float(length), float(r), _arr(x), _arr(q), int(kind),
                               _arr(dims))
