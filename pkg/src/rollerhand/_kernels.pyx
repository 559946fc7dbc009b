# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels. Same contracts as ``_kernels_py``."""
from libc.math cimport sqrt, fabs, cos, sin

cdef double DEGENERATE_TOL = 1e-9


cdef inline void _cross(double a0, double a1, double a2,
                        double b0, double b1, double b2, double* out) noexcept nogil:
    out[0] = a1 * b2 - a2 * b1
    out[1] = a2 * b0 - a0 * b2
    out[2] = a0 * b1 - a1 * b0


def decompose(const double[::1] dx, const double[::1] zcb, const double[::1] n):
    cdef double u[3]
    cdef double w[3]
    cdef double m[3]
    cdef double c[3]
    cdef double un, wn, mn, r0, r1, r2, z0, z1, z2, alpha, beta
    _cross(zcb[0], zcb[1], zcb[2], dx[0], dx[1], dx[2], u)
    un = sqrt(u[0] * u[0] + u[1] * u[1] + u[2] * u[2])
    _cross(u[0], u[1], u[2], n[0], n[1], n[2], w)
    wn = sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2])
    if un < DEGENERATE_TOL or wn < DEGENERATE_TOL:
        return (dx[0] * zcb[0] + dx[1] * zcb[1] + dx[2] * zcb[2], 0.0, (0.0, 0.0, 0.0), True)
    r0 = w[0] / wn
    r1 = w[1] / wn
    r2 = w[2] / wn
    _cross(r0, r1, r2, zcb[0], zcb[1], zcb[2], m)
    mn = sqrt(m[0] * m[0] + m[1] * m[1] + m[2] * m[2])
    if mn < DEGENERATE_TOL:
        return (dx[0] * zcb[0] + dx[1] * zcb[1] + dx[2] * zcb[2], 0.0, (0.0, 0.0, 0.0), True)
    z0 = m[0] / mn
    z1 = m[1] / mn
    z2 = m[2] / mn
    _cross(r0, r1, r2, dx[0], dx[1], dx[2], c)
    alpha = (z0 * c[0] + z1 * c[1] + z2 * c[2]) / mn
    beta = -(z0 * u[0] + z1 * u[1] + z2 * u[2]) / mn
    return (alpha, beta, (r0, r1, r2), False)


cdef bint _solve6(double* a, double* b, double* x) noexcept nogil:
    cdef int n = 6
    cdef int col, row, k, piv
    cdef double scale = 0.0, tol, best, v, p, f, s, tmp
    for k in range(36):
        if fabs(a[k]) > scale:
            scale = fabs(a[k])
    if scale == 0.0:
        return False
    tol = 1e-12 * scale
    for col in range(n):
        piv = col
        best = fabs(a[col * n + col])
        for row in range(col + 1, n):
            v = fabs(a[row * n + col])
            if v > best:
                best = v
                piv = row
        if best <= tol:
            return False
        if piv != col:
            for k in range(n):
                tmp = a[col * n + k]
                a[col * n + k] = a[piv * n + k]
                a[piv * n + k] = tmp
            tmp = b[col]
            b[col] = b[piv]
            b[piv] = tmp
        p = a[col * n + col]
        for row in range(col + 1, n):
            f = a[row * n + col] / p
            if f != 0.0:
                for k in range(col, n):
                    a[row * n + k] -= f * a[col * n + k]
                b[row] -= f * b[col]
    for row in range(n - 1, -1, -1):
        s = b[row]
        for k in range(row + 1, n):
            s -= a[row * n + k] * x[k]
        x[row] = s / a[row * n + row]
    return True


def solve_twist(const double[::1] points, const double[::1] normals,
                const double[::1] x, const double[::1] vsurf, active,
                double normal_weight=0.0):
    cdef int k = len(active)
    cdef int i, j, r, c
    cdef double m[36]
    cdef double rhs[6]
    cdef double sol[6]
    cdef double bm[18]
    cdef double a[3][18]
    cdef double t[3][3]
    cdef double nn[3]
    cdef double r0, r1, r2, sn, acc, e, proj
    cdef int act[3]
    cdef double shrink = 1.0 - sqrt(normal_weight)
    if k > 3:
        raise ValueError("at most three contacts")
    for r in range(36):
        m[r] = 0.0
    for r in range(6):
        rhs[r] = 0.0
    for i in range(k):
        act[i] = 1 if active[i] else 0
        if not act[i]:
            continue
        r0 = points[3 * i] - x[0]
        r1 = points[3 * i + 1] - x[1]
        r2 = points[3 * i + 2] - x[2]
        nn[0] = normals[3 * i]
        nn[1] = normals[3 * i + 1]
        nn[2] = normals[3 * i + 2]
        bm[0] = 1.0; bm[1] = 0.0; bm[2] = 0.0; bm[3] = 0.0; bm[4] = r2; bm[5] = -r1
        bm[6] = 0.0; bm[7] = 1.0; bm[8] = 0.0; bm[9] = -r2; bm[10] = 0.0; bm[11] = r0
        bm[12] = 0.0; bm[13] = 0.0; bm[14] = 1.0; bm[15] = r1; bm[16] = -r0; bm[17] = 0.0
        for j in range(3):
            for c in range(6):
                proj = nn[0] * bm[c] + nn[1] * bm[6 + c] + nn[2] * bm[12 + c]
                a[i][6 * j + c] = bm[6 * j + c] - shrink * nn[j] * proj
        sn = shrink * (nn[0] * vsurf[3 * i] + nn[1] * vsurf[3 * i + 1] + nn[2] * vsurf[3 * i + 2])
        for j in range(3):
            t[i][j] = vsurf[3 * i + j] - nn[j] * sn
        for r in range(6):
            for c in range(r, 6):
                m[r * 6 + c] += a[i][r] * a[i][c] + a[i][6 + r] * a[i][6 + c] + a[i][12 + r] * a[i][12 + c]
            rhs[r] += a[i][r] * t[i][0] + a[i][6 + r] * t[i][1] + a[i][12 + r] * t[i][2]
    for r in range(6):
        for c in range(r):
            m[r * 6 + c] = m[c * 6 + r]
    if not _solve6(m, rhs, sol):
        return (False, (0.0, 0.0, 0.0), (0.0, 0.0, 0.0), tuple([0.0] * k))
    res = []
    for i in range(k):
        if not act[i]:
            res.append(0.0)
            continue
        acc = 0.0
        for j in range(3):
            e = -t[i][j]
            for c in range(6):
                e += a[i][6 * j + c] * sol[c]
            acc += e * e
        res.append(sqrt(acc))
    return (True, (sol[0], sol[1], sol[2]), (sol[3], sol[4], sol[5]), tuple(res))


cdef inline void _rot(double w, double qx, double qy, double qz,
                      double v0, double v1, double v2, double* out) noexcept nogil:
    cdef double t[3]
    cdef double c[3]
    _cross(qx, qy, qz, v0, v1, v2, t)
    t[0] *= 2.0
    t[1] *= 2.0
    t[2] *= 2.0
    _cross(qx, qy, qz, t[0], t[1], t[2], c)
    out[0] = v0 + w * t[0] + c[0]
    out[1] = v1 + w * t[1] + c[1]
    out[2] = v2 + w * t[2] + c[2]


cdef double _gap(double c0, double c1, double c2, double r,
                 const double[::1] x, const double[::1] q, int kind,
                 const double[::1] dims, double* nout) noexcept nogil:
    cdef double d0, d1, d2, dist, p0, p1, p2, e0, e1, e2
    cdef double l[3]
    cdef double depths[3]
    cdef double loc[3]
    cdef int k
    if kind == 0:
        d0 = x[0] - c0
        d1 = x[1] - c1
        d2 = x[2] - c2
        dist = sqrt(d0 * d0 + d1 * d1 + d2 * d2)
        if dist == 0.0:
            nout[0] = 0.0
            nout[1] = 0.0
            nout[2] = 0.0
            return -dims[0] - r
        nout[0] = d0 / dist
        nout[1] = d1 / dist
        nout[2] = d2 / dist
        return dist - dims[0] - r
    _rot(q[0], -q[1], -q[2], -q[3], c0 - x[0], c1 - x[1], c2 - x[2], l)
    p0 = min(max(l[0], -dims[0]), dims[0])
    p1 = min(max(l[1], -dims[1]), dims[1])
    p2 = min(max(l[2], -dims[2]), dims[2])
    e0 = l[0] - p0
    e1 = l[1] - p1
    e2 = l[2] - p2
    dist = sqrt(e0 * e0 + e1 * e1 + e2 * e2)
    if dist > 0.0:
        _rot(q[0], q[1], q[2], q[3], -e0 / dist, -e1 / dist, -e2 / dist, nout)
        return dist - r
    depths[0] = dims[0] - fabs(l[0])
    depths[1] = dims[1] - fabs(l[1])
    depths[2] = dims[2] - fabs(l[2])
    k = 0
    if depths[1] < depths[k]:
        k = 1
    if depths[2] < depths[k]:
        k = 2
    loc[0] = 0.0
    loc[1] = 0.0
    loc[2] = 0.0
    loc[k] = -1.0 if l[k] >= 0.0 else 1.0
    _rot(q[0], q[1], q[2], q[3], loc[0], loc[1], loc[2], nout)
    return -depths[k] - r


def surface_gap(const double[::1] c, double r, const double[::1] x,
                const double[::1] q, int kind, const double[::1] dims):
    cdef double n[3]
    cdef double g = _gap(c[0], c[1], c[2], r, x, q, kind, dims, n)
    return (g, (n[0], n[1], n[2]))


cdef double _finger_gap(double theta, const double[::1] o1, const double[::1] z0,
                        const double[::1] er, double length, double r,
                        const double[::1] x, const double[::1] q, int kind,
                        const double[::1] dims) noexcept nogil:
    cdef double ct = cos(theta), st = sin(theta)
    cdef double n[3]
    return _gap(o1[0] + length * (ct * z0[0] - st * er[0]),
                o1[1] + length * (ct * z0[1] - st * er[1]),
                o1[2] + length * (ct * z0[2] - st * er[2]),
                r, x, q, kind, dims, n)


def finger_gap(double theta, const double[::1] o1, const double[::1] z0,
               const double[::1] er, double length, double r,
               const double[::1] x, const double[::1] q, int kind,
               const double[::1] dims):
    return _finger_gap(theta, o1, z0, er, length, r, x, q, kind, dims)


def contact_angle(double lo, double hi, const double[::1] o1, const double[::1] z0,
                  const double[::1] er, double length, double r,
                  const double[::1] x, const double[::1] q, int kind,
                  const double[::1] dims, double tol=1e-13):
    cdef int it
    cdef double mid
    for it in range(200):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if _finger_gap(mid, o1, z0, er, length, r, x, q, kind, dims) > 0.0:
            lo = mid
        else:
            hi = mid
    return lo
