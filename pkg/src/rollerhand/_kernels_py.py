"""Pure-Python hot kernels. Mirrors ``_kernels.pyx`` function for function.

All functions take flat float sequences and return plain tuples so the two
backends are interchangeable.
"""
import math

DEGENERATE_TOL = 1e-9


def _cross(a0, a1, a2, b0, b1, b2):
    return (a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0)


def decompose(dx, zcb, n):
    """Split a contact displacement into base and rolling parts.

    Returns ``(alpha, beta, zcr, degenerate)`` with
    ``alpha * zcb + beta * zcr == dx`` unless ``degenerate``.
    """
    d0, d1, d2 = dx[0], dx[1], dx[2]
    b0, b1, b2 = zcb[0], zcb[1], zcb[2]
    n0, n1, n2 = n[0], n[1], n[2]
    u0, u1, u2 = _cross(b0, b1, b2, d0, d1, d2)
    un = math.sqrt(u0 * u0 + u1 * u1 + u2 * u2)
    w0, w1, w2 = _cross(u0, u1, u2, n0, n1, n2)
    wn = math.sqrt(w0 * w0 + w1 * w1 + w2 * w2)
    if un < DEGENERATE_TOL or wn < DEGENERATE_TOL:
        return (d0 * b0 + d1 * b1 + d2 * b2, 0.0, (0.0, 0.0, 0.0), True)
    r0, r1, r2 = w0 / wn, w1 / wn, w2 / wn
    m0, m1, m2 = _cross(r0, r1, r2, b0, b1, b2)
    mn = math.sqrt(m0 * m0 + m1 * m1 + m2 * m2)
    if mn < DEGENERATE_TOL:
        return (d0 * b0 + d1 * b1 + d2 * b2, 0.0, (0.0, 0.0, 0.0), True)
    z0, z1, z2 = m0 / mn, m1 / mn, m2 / mn
    # nz . (zcr x zcb) == mn
    c0, c1, c2 = _cross(r0, r1, r2, d0, d1, d2)
    alpha = (z0 * c0 + z1 * c1 + z2 * c2) / mn
    # nz . (zcb x dx) == nz . u ;  nz . (zcb x zcr) == -mn
    beta = -(z0 * u0 + z1 * u1 + z2 * u2) / mn
    return (alpha, beta, (r0, r1, r2), False)


def _solve_dense(a, b, n):
    """Gaussian elimination with partial pivoting on an n x n row-major list.

    Returns None when the matrix is numerically singular.
    """
    scale = 0.0
    for v in a:
        if abs(v) > scale:
            scale = abs(v)
    if scale == 0.0:
        return None
    tol = 1e-12 * scale
    a = list(a)
    b = list(b)
    for col in range(n):
        piv = col
        best = abs(a[col * n + col])
        for row in range(col + 1, n):
            v = abs(a[row * n + col])
            if v > best:
                best, piv = v, row
        if best <= tol:
            return None
        if piv != col:
            for k in range(n):
                a[col * n + k], a[piv * n + k] = a[piv * n + k], a[col * n + k]
            b[col], b[piv] = b[piv], b[col]
        p = a[col * n + col]
        for row in range(col + 1, n):
            f = a[row * n + col] / p
            if f != 0.0:
                for k in range(col, n):
                    a[row * n + k] -= f * a[col * n + k]
                b[row] -= f * b[col]
    x = [0.0] * n
    for row in range(n - 1, -1, -1):
        s = b[row]
        for k in range(row + 1, n):
            s -= a[row * n + k] * x[k]
        x[row] = s / a[row * n + row]
    return x


def solve_twist(points, normals, x, vsurf, active, normal_weight=0.0):
    """Least-squares object twist from contact velocities.

    ``points``, ``normals`` and ``vsurf`` are flat 3*k sequences; ``active``
    a length-k sequence of 0/1. Minimizes
    ``sum_i |M_i (v + w x (p_i - x) - vsurf_i)|^2`` with
    ``M_i = I - (1 - sqrt(normal_weight)) n_i n_i^T``: weight 0 matches the
    tangential components only, weight 1 the full velocities.

    Returns ``(ok, v, w, residuals)``; ``ok`` is False when the normal
    equations are singular, in which case the caller must fall back to a
    minimum-norm solve.
    """
    k = len(active)
    shrink = 1.0 - math.sqrt(normal_weight)
    m = [0.0] * 36
    rhs = [0.0] * 6
    rows = []
    for i in range(k):
        if not active[i]:
            rows.append(None)
            continue
        r0 = points[3 * i] - x[0]
        r1 = points[3 * i + 1] - x[1]
        r2 = points[3 * i + 2] - x[2]
        n0, n1, n2 = normals[3 * i], normals[3 * i + 1], normals[3 * i + 2]
        # B = [I, -[r]x]; row j of B as 6 entries
        bmat = (
            (1.0, 0.0, 0.0, 0.0, r2, -r1),
            (0.0, 1.0, 0.0, -r2, 0.0, r0),
            (0.0, 0.0, 1.0, r1, -r0, 0.0),
        )
        # A = M B
        a = []
        for j in range(3):
            nj = shrink * (n0, n1, n2)[j]
            row = [0.0] * 6
            for c in range(6):
                row[c] = bmat[j][c] - nj * (n0 * bmat[0][c] + n1 * bmat[1][c] + n2 * bmat[2][c])
            a.append(row)
        s0, s1, s2 = vsurf[3 * i], vsurf[3 * i + 1], vsurf[3 * i + 2]
        sn = shrink * (n0 * s0 + n1 * s1 + n2 * s2)
        t = (s0 - n0 * sn, s1 - n1 * sn, s2 - n2 * sn)
        rows.append((a, t))
        for r in range(6):
            for c in range(r, 6):
                m[r * 6 + c] += a[0][r] * a[0][c] + a[1][r] * a[1][c] + a[2][r] * a[2][c]
            rhs[r] += a[0][r] * t[0] + a[1][r] * t[1] + a[2][r] * t[2]
    for r in range(6):
        for c in range(r):
            m[r * 6 + c] = m[c * 6 + r]
    sol = _solve_dense(m, rhs, 6)
    if sol is None:
        return (False, (0.0, 0.0, 0.0), (0.0, 0.0, 0.0), tuple(0.0 for _ in range(k)))
    residuals = []
    for i in range(k):
        if rows[i] is None:
            residuals.append(0.0)
            continue
        a, t = rows[i]
        acc = 0.0
        for j in range(3):
            e = a[j][0] * sol[0] + a[j][1] * sol[1] + a[j][2] * sol[2] \
                + a[j][3] * sol[3] + a[j][4] * sol[4] + a[j][5] * sol[5] - t[j]
            acc += e * e
        residuals.append(math.sqrt(acc))
    return (True, (sol[0], sol[1], sol[2]), (sol[3], sol[4], sol[5]), tuple(residuals))


def _rotate_inv(q, v0, v1, v2):
    # rotate by conjugate of q
    w, x, y, z = q[0], -q[1], -q[2], -q[3]
    t0, t1, t2 = _cross(x, y, z, v0, v1, v2)
    t0, t1, t2 = 2.0 * t0, 2.0 * t1, 2.0 * t2
    c0, c1, c2 = _cross(x, y, z, t0, t1, t2)
    return (v0 + w * t0 + c0, v1 + w * t1 + c1, v2 + w * t2 + c2)


def _rotate(q, v0, v1, v2):
    w, x, y, z = q[0], q[1], q[2], q[3]
    t0, t1, t2 = _cross(x, y, z, v0, v1, v2)
    t0, t1, t2 = 2.0 * t0, 2.0 * t1, 2.0 * t2
    c0, c1, c2 = _cross(x, y, z, t0, t1, t2)
    return (v0 + w * t0 + c0, v1 + w * t1 + c1, v2 + w * t2 + c2)


def surface_gap(c, r, x, q, kind, dims):
    """Signed gap between a roller sphere (centre ``c``, radius ``r``) and the object.

    ``kind`` 0 is a sphere with ``dims[0]`` its radius; 1 is a box with half
    extents ``dims``. Returns ``(gap, n)`` where ``n`` is the unit contact
    normal pointing from the roller toward the object.
    """
    if kind == 0:
        d0, d1, d2 = x[0] - c[0], x[1] - c[1], x[2] - c[2]
        dist = math.sqrt(d0 * d0 + d1 * d1 + d2 * d2)
        if dist == 0.0:
            return (-dims[0] - r, (0.0, 0.0, 0.0))
        return (dist - dims[0] - r, (d0 / dist, d1 / dist, d2 / dist))
    l0, l1, l2 = _rotate_inv(q, c[0] - x[0], c[1] - x[1], c[2] - x[2])
    h0, h1, h2 = dims[0], dims[1], dims[2]
    p0 = min(max(l0, -h0), h0)
    p1 = min(max(l1, -h1), h1)
    p2 = min(max(l2, -h2), h2)
    e0, e1, e2 = l0 - p0, l1 - p1, l2 - p2
    dist = math.sqrt(e0 * e0 + e1 * e1 + e2 * e2)
    if dist > 0.0:
        n0, n1, n2 = _rotate(q, -e0 / dist, -e1 / dist, -e2 / dist)
        return (dist - r, (n0, n1, n2))
    # centre inside the box: push out through the nearest face
    depths = (h0 - abs(l0), h1 - abs(l1), h2 - abs(l2))
    k = 0
    if depths[1] < depths[k]:
        k = 1
    if depths[2] < depths[k]:
        k = 2
    loc = [0.0, 0.0, 0.0]
    loc[k] = -1.0 if (l0, l1, l2)[k] >= 0.0 else 1.0
    n0, n1, n2 = _rotate(q, loc[0], loc[1], loc[2])
    return (-depths[k] - r, (n0, n1, n2))


def finger_gap(theta, o1, z0, er, length, r, x, q, kind, dims):
    ct, st = math.cos(theta), math.sin(theta)
    c = (o1[0] + length * (ct * z0[0] - st * er[0]),
         o1[1] + length * (ct * z0[1] - st * er[1]),
         o1[2] + length * (ct * z0[2] - st * er[2]))
    return surface_gap(c, r, x, q, kind, dims)[0]


def contact_angle(lo, hi, o1, z0, er, length, r, x, q, kind, dims, tol=1e-13):
    """Bisect the base angle in [lo, hi] where the roller just touches.

    Requires ``gap(lo) >= 0 >= gap(hi)``.
    """
    for _ in range(200):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if finger_gap(mid, o1, z0, er, length, r, x, q, kind, dims) > 0.0:
            lo = mid
        else:
            hi = mid
    return lo
