import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rollerhand import _kernels_py, kernels
from rollerhand.world import solve_object_twist

needs_cython = pytest.mark.skipif(not kernels.cython_available(), reason="extension not built")


def _skew(r):
    return np.array([[0.0, -r[2], r[1]], [r[2], 0.0, -r[0]], [-r[1], r[0], 0.0]])


def _random_config(g, spread=40.0):
    x = g.normal(size=3) * 5.0
    points = x + g.normal(size=(3, 3)) * spread
    normals = g.normal(size=(3, 3))
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    vsurf = g.normal(size=(3, 3))
    return points, normals, x, vsurf


def _oracle(points, normals, x, vsurf, weight, active=(1, 1, 1)):
    """Weighted least squares through numpy's pseudoinverse."""
    rows, rhs = [], []
    for i in range(3):
        if not active[i]:
            continue
        n = normals[i]
        m = np.eye(3) - (1.0 - math.sqrt(weight)) * np.outer(n, n)
        b = np.hstack([np.eye(3), -_skew(points[i] - x)])
        rows.append(m @ b)
        rhs.append(m @ vsurf[i])
    a, y = np.vstack(rows), np.concatenate(rhs)
    return np.linalg.pinv(a) @ y, a, y


def _cost(a, y, sol):
    e = a @ sol - y
    return float(e @ e)


@pytest.mark.parametrize("weight", [0.0, 0.3, 1.0])
def test_twist_matches_pinv_oracle(weight):
    g = np.random.default_rng(11)
    for _ in range(100):
        pts, nrm, x, vs = _random_config(g)
        sol = solve_object_twist(pts, nrm, x, vs, normal_weight=weight)
        ref, a, y = _oracle(pts, nrm, x, vs, weight)
        got = np.concatenate([sol.v, sol.omega])
        assert np.allclose(got, ref, atol=1e-6, rtol=0)
        # first-order optimality and no better neighbour
        assert np.linalg.norm(a.T @ (a @ got - y)) < 1e-8
        c0 = _cost(a, y, got)
        for d in g.normal(size=(20, 6)) * 1e-3:
            assert _cost(a, y, got + d) >= c0 - 1e-12


def test_twist_residuals_match_oracle():
    g = np.random.default_rng(5)
    pts, nrm, x, vs = _random_config(g)
    sol = solve_object_twist(pts, nrm, x, vs, normal_weight=1.0)
    ref, a, y = _oracle(pts, nrm, x, vs, 1.0)
    e = (a @ ref - y).reshape(3, 3)
    assert np.allclose(sol.slip_residual_per_contact, np.linalg.norm(e, axis=1), atol=1e-9)


def test_projected_twist_fits_three_generic_contacts_exactly():
    # 6 tangential equations, 6 unknowns
    g = np.random.default_rng(2)
    pts, nrm, x, vs = _random_config(g)
    sol = solve_object_twist(pts, nrm, x, vs)
    assert max(sol.slip_residual_per_contact) < 1e-9


def test_consistent_yaw_gives_pure_z_rotation():
    x = np.array([0.0, 0.0, 170.0])
    w = 0.03
    pts, nrm, vs = [], [], []
    for k in range(3):
        phi = 2 * math.pi * k / 3
        r = 30.0 * np.array([math.cos(phi), math.sin(phi), 0.0])
        pts.append(x + r)
        nrm.append(-r / 30.0)
        vs.append(np.cross([0, 0, w], r))
    for weight in (0.0, 1.0):
        sol = solve_object_twist(pts, nrm, x, vs, normal_weight=weight)
        assert np.allclose(sol.omega, [0, 0, w], atol=1e-12)
        assert np.allclose(sol.v, 0, atol=1e-12)
        assert max(sol.slip_residual_per_contact) < 1e-9


def test_inactive_contacts_report_zero_residual():
    g = np.random.default_rng(3)
    pts, nrm, x, vs = _random_config(g)
    sol = solve_object_twist(pts, nrm, x, vs, active=(True, False, True), normal_weight=1.0)
    assert sol.slip_residual_per_contact[1] == 0.0
    ref, _, _ = _oracle(pts, nrm, x, vs, 1.0, active=(1, 0, 1))
    assert np.allclose(np.concatenate([sol.v, sol.omega]), ref, atol=1e-6)


def test_no_active_contacts_gives_zero_twist():
    g = np.random.default_rng(4)
    pts, nrm, x, vs = _random_config(g)
    sol = solve_object_twist(pts, nrm, x, vs, active=(False, False, False))
    assert not np.any(sol.v) and not np.any(sol.omega)


def test_decompose_kernel_example():
    s3 = math.sqrt(3.0)
    alpha, beta, zcr, deg = _kernels_py.decompose([1.0, 3.0, 4.0 + s3], [0.5, 0.0, s3 / 2],
                                                   [1.0, 0.0, 0.0])
    assert not deg
    assert alpha == pytest.approx(2.0, abs=1e-12)
    assert beta == pytest.approx(5.0, abs=1e-12)
    assert np.allclose(zcr, [0.0, 0.6, 0.8], atol=1e-12)


def test_surface_gap_sphere_and_box():
    gap, n = _kernels_py.surface_gap([100.0, 0, 0], 20.0, [0, 0, 0], [1, 0, 0, 0], 0,
                                     [30.0, 0, 0])
    assert gap == pytest.approx(50.0)
    assert np.allclose(n, [-1, 0, 0])
    gap, n = _kernels_py.surface_gap([0, 60.0, 0], 20.0, [0, 0, 0], [1, 0, 0, 0], 1,
                                     [30.0, 30.0, 30.0])
    assert gap == pytest.approx(10.0)
    assert np.allclose(n, [0, -1, 0])


def test_box_gap_is_rotation_covariant():
    # a 90 degree turn about z swaps the x and y extents
    h = math.sqrt(0.5)
    q = [h, 0.0, 0.0, h]
    gap, _ = _kernels_py.surface_gap([0, 100.0, 0], 10.0, [0, 0, 0], q, 1, [50.0, 20.0, 20.0])
    assert gap == pytest.approx(40.0)


@needs_cython
def test_backends_agree():
    from rollerhand import _kernels as cy
    g = np.random.default_rng(8)
    for _ in range(200):
        pts, nrm, x, vs = _random_config(g)
        act = tuple(bool(a) for a in g.integers(0, 2, 3))
        w = float(g.random())
        a = _kernels_py.solve_twist(pts.ravel().tolist(), nrm.ravel().tolist(), x.tolist(),
                                    vs.ravel().tolist(), act, w)
        b = cy.solve_twist(pts.ravel(), nrm.ravel(), x, vs.ravel(), act, w)
        assert a[0] == b[0]
        if a[0]:
            assert np.allclose(a[1], b[1], atol=1e-9) and np.allclose(a[2], b[2], atol=1e-9)
            assert np.allclose(a[3], b[3], atol=1e-9)
        dx, zcb, n = g.normal(size=3), g.normal(size=3), g.normal(size=3)
        zcb /= np.linalg.norm(zcb)
        n /= np.linalg.norm(n)
        da = _kernels_py.decompose(dx.tolist(), zcb.tolist(), n.tolist())
        db = cy.decompose(dx, zcb, n)
        assert da[3] == db[3]
        assert np.allclose(da[:2], db[:2], atol=1e-9) and np.allclose(da[2], db[2], atol=1e-12)
        c, xo = g.normal(size=3) * 80, g.normal(size=3)
        q = g.normal(size=4)
        q /= np.linalg.norm(q)
        kind = int(g.integers(0, 2))
        dims = np.array([30.0, 25.0, 40.0])
        ga = _kernels_py.surface_gap(c.tolist(), 21.5, xo.tolist(), q.tolist(), kind,
                                     dims.tolist())
        gb = cy.surface_gap(c, 21.5, xo, q, kind, dims)
        assert ga[0] == pytest.approx(gb[0], abs=1e-9)
        assert np.allclose(ga[1], gb[1], atol=1e-9)


@needs_cython
@given(st.floats(-1.0, 0.3), st.floats(0.4, 1.0))
def test_contact_angle_backends_agree(lo, hi):
    from rollerhand import _kernels as cy
    args = ([50.0, 0, 0], [0, 0, 1.0], [1.0, 0, 0], 170.0, 21.5, [0, 0, 170.0],
            [1.0, 0, 0, 0], 0, [30.0, 0, 0])
    f = _kernels_py.finger_gap
    if not f(lo, *args) >= 0.0 >= f(hi, *args):
        return
    a = _kernels_py.contact_angle(lo, hi, *args)
    b = cy.contact_angle(lo, hi, *(np.asarray(v, dtype=float) if isinstance(v, list) else v
                                   for v in args))
    assert a == pytest.approx(b, abs=1e-12)
    assert abs(f(a, *args)) < 1e-9
