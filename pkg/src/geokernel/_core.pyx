# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled numerical core: pairwise geometry, force field, RK4 with projection,
and regression vectors for the learning matrix.

Same call signatures and results as ``_pycore``; inner loops release the GIL
so trajectories can be processed on a thread pool.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt, atan2, log1p, fabs, isfinite
from libc.stdlib cimport malloc, free

cnp.import_array()

ctypedef cnp.int64_t i64

cdef double PI = 3.141592653589793
cdef double CUT_LOCUS_BAND = 1e-6
cdef double COINCIDENT_TOL = 1e-14
cdef double COLLINEAR_TOL = 1e-12
cdef double DISK_GUARD = 1e-12
# below this |y|^2 the inversion y / |y|^2 overflows; treat y as the origin
cdef double ORIGIN_TOL = 1e-100


cdef struct Table:
    int K
    const i64* pair_start
    const double* support_end
    const double* seg_lo
    const double* seg_shift
    const i64* seg_pmin
    const i64* coef_start
    const double* coefs


cdef struct Geom:
    int kind
    int a
    double radius
    double factor


cdef Table _table(object t, list keep):
    cdef Table tab
    cdef i64[::1] ps = np.ascontiguousarray(t.pair_start, dtype=np.int64)
    cdef double[::1] se = np.ascontiguousarray(t.support_end, dtype=np.float64)
    cdef double[::1] lo = np.ascontiguousarray(t.seg_lo, dtype=np.float64)
    cdef double[::1] sh = np.ascontiguousarray(t.seg_shift, dtype=np.float64)
    cdef i64[::1] pm = np.ascontiguousarray(t.seg_pmin, dtype=np.int64)
    cdef i64[::1] cs = np.ascontiguousarray(t.coef_start, dtype=np.int64)
    cdef double[::1] co = np.ascontiguousarray(t.coefs, dtype=np.float64)
    keep.extend([ps, se, lo, sh, pm, cs, co])
    tab.K = t.K
    tab.pair_start = &ps[0]
    tab.support_end = &se[0]
    tab.seg_lo = &lo[0]
    tab.seg_shift = &sh[0]
    tab.seg_pmin = &pm[0]
    tab.coef_start = &cs[0]
    tab.coefs = &co[0]
    return tab


cdef inline double _ipow(double u, i64 k) noexcept nogil:
    cdef double acc = 1.0
    cdef i64 n = k if k >= 0 else -k
    while n > 0:
        acc *= u
        n -= 1
    return acc if k >= 0 else 1.0 / acc


cdef inline double _keval(const Table* t, int pair, double r) noexcept nogil:
    if r >= t.support_end[pair]:
        return 0.0
    cdef i64 lo = t.pair_start[pair]
    cdef i64 hi = t.pair_start[pair + 1] - 1
    cdef i64 mid
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if t.seg_lo[mid] <= r:
            lo = mid
        else:
            hi = mid - 1
    cdef double u = r - t.seg_shift[lo]
    cdef double acc = 0.0
    cdef i64 c = t.coef_start[lo + 1] - 1
    while c >= t.coef_start[lo]:
        acc = acc * u + t.coefs[c]
        c -= 1
    if t.seg_pmin[lo] != 0:
        acc *= _ipow(u, t.seg_pmin[lo])
    return acc


cdef inline double _acosh1p(double z) noexcept nogil:
    return log1p(z + sqrt(z * (z + 2.0)))


cdef inline double _dist(const double* x, const double* y, const Geom* g) noexcept nogil:
    cdef double dx, dy, dz, dot, cx, cy, cz, xx, yy, dd
    if g.kind == 1:
        dot = x[0] * y[0] + x[1] * y[1] + x[2] * y[2]
        cx = x[1] * y[2] - x[2] * y[1]
        cy = x[2] * y[0] - x[0] * y[2]
        cz = x[0] * y[1] - x[1] * y[0]
        return g.radius * atan2(sqrt(cx * cx + cy * cy + cz * cz), dot)
    cdef int c
    dd = 0.0
    for c in range(g.a):
        dx = y[c] - x[c]
        dd += dx * dx
    if g.kind == 2:
        xx = x[0] * x[0] + x[1] * x[1]
        yy = y[0] * y[0] + y[1] * y[1]
        return _acosh1p(g.factor * dd / ((1.0 - xx) * (1.0 - yy)))
    return sqrt(dd)


cdef inline void _weight(const double* x, const double* y, double d, const Geom* g,
                         double* w) noexcept nogil:
    """w = d * v(x, y); zero on coincidence or cut locus."""
    cdef int c
    cdef double u[3]
    cdef double dd = 0.0, xx = 0.0, dot = 0.0, un = 0.0, scale, theta
    cdef double a0, a1, b0, b1, yy, det, na, nb, aa, bb, n0, n1, nn, pr
    for c in range(g.a):
        w[c] = 0.0
        dd += (y[c] - x[c]) * (y[c] - x[c])
        xx += x[c] * x[c]
        dot += x[c] * y[c]
    scale = sqrt(xx)
    if scale < 1.0:
        scale = 1.0
    if sqrt(dd) <= COINCIDENT_TOL * scale:
        return
    if g.kind == 1:
        theta = d / g.radius
        if theta > PI - CUT_LOCUS_BAND:
            return
        for c in range(3):
            u[c] = y[c] - (dot / xx) * x[c]
            un += u[c] * u[c]
        un = sqrt(un)
    elif g.kind == 2:
        a0 = y[0] - x[0]
        a1 = y[1] - x[1]
        u[0] = a0
        u[1] = a1
        yy = y[0] * y[0] + y[1] * y[1]
        if yy > ORIGIN_TOL:
            b0 = y[0] / yy - x[0]
            b1 = y[1] / yy - x[1]
            det = a0 * b1 - a1 * b0
            aa = a0 * a0 + a1 * a1
            bb = b0 * b0 + b1 * b1
            na = sqrt(aa)
            nb = sqrt(bb)
            if fabs(det) > COLLINEAR_TOL * na * nb:
                n0 = b1 * aa - a1 * bb
                n1 = a0 * bb - b0 * aa
                nn = n0 * n0 + n1 * n1
                if nn > 0.0:
                    pr = (a0 * n0 + a1 * n1) / nn
                    u[0] = a0 - pr * n0
                    u[1] = a1 - pr * n1
        un = sqrt(u[0] * u[0] + u[1] * u[1]) * 2.0 / (1.0 - xx)
    else:
        for c in range(g.a):
            u[c] = y[c] - x[c]
        un = sqrt(dd)
    if un == 0.0:
        return
    for c in range(g.a):
        w[c] = d * u[c] / un


cdef void _field(const double* X, int N, const Geom* g, const i64* types,
                 const Table* t, double* V) noexcept nogil:
    cdef int i, j, c, K = t.K, a = g.a
    cdef double d, pij, pji
    cdef double w[3]
    cdef double invN = 1.0 / N
    for i in range(N * a):
        V[i] = 0.0
    for i in range(N):
        for j in range(i + 1, N):
            d = _dist(&X[i * a], &X[j * a], g)
            if d <= 0.0:
                continue
            pij = _keval(t, <int>(types[i] * K + types[j]), d)
            pji = _keval(t, <int>(types[j] * K + types[i]), d)
            if pij != 0.0:
                _weight(&X[i * a], &X[j * a], d, g, w)
                for c in range(a):
                    V[i * a + c] += pij * w[c] * invN
            if pji != 0.0:
                _weight(&X[j * a], &X[i * a], d, g, w)
                for c in range(a):
                    V[j * a + c] += pji * w[c] * invN


cdef int _project(double* X, int N, const Geom* g) noexcept nogil:
    cdef int i, c, a = g.a
    cdef double nrm, lim = 1.0 - DISK_GUARD, s
    for i in range(N):
        nrm = 0.0
        for c in range(a):
            if not isfinite(X[i * a + c]):
                return 1
            nrm += X[i * a + c] * X[i * a + c]
        nrm = sqrt(nrm)
        if g.kind == 1:
            if nrm < 1e-12:
                return 2
            s = g.radius / nrm
        elif g.kind == 2 and nrm > lim:
            s = lim / nrm
        else:
            continue
        for c in range(a):
            X[i * a + c] *= s
    return 0


cdef Geom _geom(int kind, int a, double radius, double factor):
    cdef Geom g
    g.kind = kind
    g.a = a
    g.radius = radius
    g.factor = factor
    return g


def pair_geometry(X, int kind, double radius, double factor):
    """Pairwise distances D[i, j] and weight vectors W[i, j] = d v(x_i, x_j)."""
    cdef double[:, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef int N = x.shape[0], a = x.shape[1], i, j, c
    cdef Geom g = _geom(kind, a, radius, factor)
    D_arr = np.zeros((N, N))
    W_arr = np.zeros((N, N, a))
    cdef double[:, ::1] D = D_arr
    cdef double[:, :, ::1] W = W_arr
    cdef double d
    with nogil:
        for i in range(N):
            for j in range(i + 1, N):
                d = _dist(&x[i, 0], &x[j, 0], &g)
                D[i, j] = d
                D[j, i] = d
                _weight(&x[i, 0], &x[j, 0], d, &g, &W[i, j, 0])
                _weight(&x[j, 0], &x[i, 0], d, &g, &W[j, i, 0])
    return D_arr, W_arr


def metric_factors(X, int kind):
    X = np.asarray(X, dtype=float)
    if kind == 2:
        return 4.0 / (1.0 - np.sum(X * X, axis=-1)) ** 2
    return np.ones(X.shape[:-1])


def table_eval(table, int pair, r):
    cdef list keep = []
    cdef Table t = _table(table, keep)
    r = np.asarray(r, dtype=float)
    cdef double[::1] rr = np.ascontiguousarray(r.ravel())
    out = np.empty(rr.shape[0])
    cdef double[::1] o = out
    cdef Py_ssize_t n
    for n in range(rr.shape[0]):
        o[n] = _keval(&t, pair, rr[n])
    return out.reshape(r.shape)


def field(X, int kind, double radius, double factor, types0, table):
    """Right-hand side (1/N) sum_j phi(d_ij) w_ij for every agent."""
    cdef list keep = []
    cdef Table t = _table(table, keep)
    cdef double[:, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef i64[::1] ty = np.ascontiguousarray(types0, dtype=np.int64)
    cdef int N = x.shape[0], a = x.shape[1]
    cdef Geom g = _geom(kind, a, radius, factor)
    out = np.empty((N, a))
    cdef double[:, ::1] v = out
    with nogil:
        _field(&x[0, 0], N, &g, &ty[0], &t, &v[0, 0])
    return out


def project(X, int kind, double radius):
    out = np.array(X, dtype=np.float64, order="C")
    cdef double[:, ::1] x = out
    cdef Geom g = _geom(kind, x.shape[1], radius, 1.0)
    if _project(&x[0, 0], x.shape[0], &g) == 2:
        raise FloatingPointError("radial projection undefined at the origin")
    return out


def integrate_rk4(X0, int kind, double radius, double factor, types0, table,
                  double h, Py_ssize_t nsteps):
    """Fixed-step RK4 with per-step projection; returns node states and velocities."""
    cdef list keep = []
    cdef Table t = _table(table, keep)
    cdef double[:, ::1] x0 = np.ascontiguousarray(X0, dtype=np.float64)
    cdef i64[::1] ty = np.ascontiguousarray(types0, dtype=np.int64)
    cdef int N = x0.shape[0], a = x0.shape[1]
    cdef int M = N * a
    cdef Geom g = _geom(kind, a, radius, factor)
    Xs_arr = np.empty((nsteps + 1, N, a))
    Vs_arr = np.empty((nsteps + 1, N, a))
    cdef double[:, :, ::1] Xs = Xs_arr
    cdef double[:, :, ::1] Vs = Vs_arr
    cdef double* k2 = <double*> malloc(M * sizeof(double))
    cdef double* k3 = <double*> malloc(M * sizeof(double))
    cdef double* k4 = <double*> malloc(M * sizeof(double))
    cdef double* tmp = <double*> malloc(M * sizeof(double))
    cdef Py_ssize_t n, fail = -1
    cdef int q, status = 0
    cdef double* xc
    cdef double* xn
    cdef double* k1
    if k2 == NULL or k3 == NULL or k4 == NULL or tmp == NULL:
        free(k2); free(k3); free(k4); free(tmp)
        raise MemoryError()
    Xs[0, :, :] = x0
    try:
        with nogil:
            for n in range(nsteps):
                xc = &Xs[n, 0, 0]
                xn = &Xs[n + 1, 0, 0]
                k1 = &Vs[n, 0, 0]
                _field(xc, N, &g, &ty[0], &t, k1)
                for q in range(M):
                    tmp[q] = xc[q] + 0.5 * h * k1[q]
                _field(tmp, N, &g, &ty[0], &t, k2)
                for q in range(M):
                    tmp[q] = xc[q] + 0.5 * h * k2[q]
                _field(tmp, N, &g, &ty[0], &t, k3)
                for q in range(M):
                    tmp[q] = xc[q] + h * k3[q]
                _field(tmp, N, &g, &ty[0], &t, k4)
                for q in range(M):
                    xn[q] = xc[q] + (h / 6.0) * (k1[q] + 2.0 * k2[q] + 2.0 * k3[q] + k4[q])
                status = _project(xn, N, &g)
                if status != 0:
                    fail = n + 1
                    break
            if status == 0:
                _field(&Xs[nsteps, 0, 0], N, &g, &ty[0], &t, &Vs[nsteps, 0, 0])
    finally:
        free(k2); free(k3); free(k4); free(tmp)
    if status != 0:
        raise FloatingPointError(f"integration failed at step {fail}")
    return Xs_arr, Vs_arr


cdef inline i64 _find_span(const double* knots, int p, i64 n, double r) noexcept nogil:
    if r >= knots[n]:
        return n - 1
    cdef i64 lo = p, hi = n, mid
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if r < knots[mid]:
            hi = mid
        else:
            lo = mid
    return lo


cdef inline void _basis_funs(const double* knots, int p, i64 span, double r,
                             double* vals, double* left, double* right) noexcept nogil:
    cdef int j, q
    cdef double saved, temp, den
    vals[0] = 1.0
    for j in range(1, p + 1):
        left[j] = r - knots[span + 1 - j]
        right[j] = knots[span + j] - r
        saved = 0.0
        for q in range(j):
            den = right[q + 1] + left[j - q]
            temp = vals[q] / den if den != 0.0 else 0.0
            vals[q] = saved + right[q + 1] * temp
            saved = left[j - q] * temp
        vals[j] = saved


def regression_vectors(Xs, int kind, double radius, double factor, types0,
                       int observer, lay):
    """Psi[l, eta, i, :] = (1/N) sum_j psi_eta(r_ij) w_ij for observers i."""
    cdef double[:, :, ::1] x = np.ascontiguousarray(Xs, dtype=np.float64)
    cdef i64[::1] ty = np.ascontiguousarray(types0, dtype=np.int64)
    cdef i64[::1] off = np.ascontiguousarray(lay.offset, dtype=np.int64)
    cdef i64[::1] size = np.ascontiguousarray(lay.size, dtype=np.int64)
    cdef i64[::1] deg = np.ascontiguousarray(lay.degree, dtype=np.int64)
    cdef i64[::1] ks = np.ascontiguousarray(lay.knot_start, dtype=np.int64)
    knots_arr = np.ascontiguousarray(lay.knots, dtype=np.float64)
    if knots_arr.size == 0:
        knots_arr = np.zeros(1)
    cdef double[::1] knots = knots_arr
    cdef double[::1] blo = np.ascontiguousarray(lay.lo, dtype=np.float64)
    cdef double[::1] bhi = np.ascontiguousarray(lay.hi, dtype=np.float64)
    cdef int L = x.shape[0], N = x.shape[1], a = x.shape[2]
    cdef int nblocks = size.shape[0]
    obs_idx = np.nonzero(np.asarray(types0) == observer)[0].astype(np.int64)
    cdef i64[::1] obs = obs_idx if obs_idx.size else np.zeros(1, dtype=np.int64)
    cdef int nobs = obs_idx.size
    cdef i64 ntot = int(np.sum(lay.size))
    Psi_arr = np.zeros((L, ntot, nobs, a))
    if nobs == 0 or ntot == 0:
        return Psi_arr, 0
    cdef double[:, :, :, ::1] Psi = Psi_arr
    cdef Geom g = _geom(kind, a, radius, factor)
    cdef Py_ssize_t n_out = 0
    cdef int l, ii, j, k2, c, q, p
    cdef i64 i, span, nb, row
    cdef double d, invN = 1.0 / N
    cdef double w[3]
    cdef double vals[16]
    cdef double left[16]
    cdef double right[16]
    for k2 in range(nblocks):
        if deg[k2] > 15:
            raise ValueError("spline degree above 15 not supported")
    with nogil:
        for l in range(L):
            for ii in range(nobs):
                i = obs[ii]
                for j in range(N):
                    if j == i:
                        continue
                    k2 = <int>ty[j]
                    nb = size[k2]
                    if nb == 0:
                        continue
                    d = _dist(&x[l, i, 0], &x[l, j, 0], &g)
                    if d < blo[k2] or d > bhi[k2]:
                        n_out += 1
                        continue
                    _weight(&x[l, i, 0], &x[l, j, 0], d, &g, w)
                    p = <int>deg[k2]
                    span = _find_span(&knots[ks[k2]], p, nb, d)
                    _basis_funs(&knots[ks[k2]], p, span, d, vals, left, right)
                    for q in range(p + 1):
                        row = off[k2] + span - p + q
                        for c in range(a):
                            Psi[l, row, ii, c] += vals[q] * w[c] * invN
    return Psi_arr, n_out
