"""Pure numpy implementation of the numerical core.

Mirrors the compiled ``_core`` extension function for function; used when the
extension is unavailable or ``GEOKERNEL_PURE=1`` is set. ``kind`` codes are
0 = Euclidean, 1 = sphere, 2 = Poincare disk; ``factor`` multiplies the
Poincare acosh fraction.
"""
import math

import numpy as np

from .basis import basis_funs

CUT_LOCUS_BAND = 1e-6
COINCIDENT_TOL = 1e-14
COLLINEAR_TOL = 1e-12
DISK_GUARD = 1e-12
ORIGIN_TOL = 1e-100


def _acosh1p(z):
    return np.log1p(z + np.sqrt(z * (z + 2.0)))


def metric_factors(X, kind):
    if kind == 2:
        return 4.0 / (1.0 - np.sum(X * X, axis=-1)) ** 2
    return np.ones(X.shape[:-1])


def pair_geometry(X, kind, radius, factor):
    """Pairwise distances D[i, j] and weight vectors W[i, j] = d v(x_i, x_j)."""
    X = np.asarray(X, dtype=float)
    N = X.shape[0]
    xi = X[:, None, :]
    xj = X[None, :, :]
    diff = xj - xi
    dnorm = np.linalg.norm(diff, axis=-1)
    scale = np.maximum(1.0, np.linalg.norm(X, axis=-1))[:, None]
    coincident = dnorm <= COINCIDENT_TOL * scale
    if kind == 1:
        dots = X @ X.T
        cr = np.linalg.norm(np.cross(xi, xj), axis=-1)
        theta = np.arctan2(cr, dots)
        D = radius * theta
        sq = np.sum(X * X, axis=-1)
        U = xj - (dots / sq[:, None])[:, :, None] * xi
        unorm = np.linalg.norm(U, axis=-1)
        bad = coincident | (theta > math.pi - CUT_LOCUS_BAND) | (unorm == 0.0)
    elif kind == 2:
        sq = np.sum(X * X, axis=-1)
        num = factor * dnorm**2
        den = (1.0 - sq)[:, None] * (1.0 - sq)[None, :]
        D = _acosh1p(num / den)
        U = _poincare_directions(X, diff)
        unorm = np.linalg.norm(U, axis=-1) * (2.0 / (1.0 - sq))[:, None]
        bad = coincident | (unorm == 0.0)
    else:
        D = dnorm
        U = diff
        unorm = dnorm
        bad = coincident
    np.fill_diagonal(D, 0.0)
    bad = bad | np.eye(N, dtype=bool)
    coef = np.where(bad, 0.0, D / np.where(bad, 1.0, unorm))
    W = coef[:, :, None] * U
    return D, W


def _poincare_directions(X, A):
    # A[i, j] = x_j - x_i; inversion of x_j in the unit circle
    yy = np.sum(X * X, axis=-1)
    near0 = yy <= ORIGIN_TOL
    safe = np.where(near0, 1.0, yy)
    Yinv = X / safe[:, None]
    B = Yinv[None, :, :] - X[:, None, :]
    det = A[..., 0] * B[..., 1] - A[..., 1] * B[..., 0]
    na = np.linalg.norm(A, axis=-1)
    nb = np.linalg.norm(B, axis=-1)
    straight = (np.abs(det) <= COLLINEAR_TOL * na * nb) | near0[None, :]
    aa = na**2
    bb = nb**2
    n = np.stack([B[..., 1] * aa - A[..., 1] * bb, A[..., 0] * bb - B[..., 0] * aa], axis=-1)
    nn = np.sum(n * n, axis=-1)
    proj = np.sum(A * n, axis=-1) / np.where(straight | (nn == 0), 1.0, nn)
    U = A - np.where(straight | (nn == 0), 0.0, proj)[..., None] * n
    return U


def table_eval(table, pair, r):
    """Evaluate kernel ``pair`` (= k * K + k2) of a KernelTable at distances r."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    s0, s1 = table.pair_start[pair], table.pair_start[pair + 1]
    inside = r < table.support_end[pair]
    if not np.any(inside):
        return out
    los = table.seg_lo[s0:s1]
    idx = np.searchsorted(los, r, side="right") - 1 + s0
    for s in range(s0, s1):
        sel = inside & (idx == s)
        if not np.any(sel):
            continue
        u = r[sel] - table.seg_shift[s]
        c = table.coefs[table.coef_start[s]:table.coef_start[s + 1]]
        acc = np.zeros_like(u)
        for co in c[::-1]:
            acc = acc * u + co
        pm = table.seg_pmin[s]
        out[sel] = acc * u ** float(pm) if pm else acc
    return out


def _kernel_values(D, types0, table):
    N = D.shape[0]
    K = table.K
    if K == 1:
        return table_eval(table, 0, D)
    Phi = np.zeros_like(D)
    for k in range(K):
        rows = types0 == k
        for k2 in range(K):
            cols = types0 == k2
            sel = rows[:, None] & cols[None, :]
            if np.any(sel):
                Phi[sel] = table_eval(table, k * K + k2, D[sel])
    return Phi


def field(X, kind, radius, factor, types0, table):
    """Right-hand side (1/N) sum_j phi(d_ij) w_ij for every agent."""
    D, W = pair_geometry(X, kind, radius, factor)
    Phi = _kernel_values(D, types0, table)
    return np.einsum("ij,ijc->ic", Phi, W) / X.shape[0]


def project(X, kind, radius):
    if kind == 1:
        nrm = np.linalg.norm(X, axis=-1, keepdims=True)
        if np.any(nrm < 1e-12):
            raise FloatingPointError("radial projection undefined at the origin")
        return radius * X / nrm
    if kind == 2:
        nrm = np.linalg.norm(X, axis=-1, keepdims=True)
        lim = 1.0 - DISK_GUARD
        return np.where(nrm > lim, X * (lim / np.maximum(nrm, lim)), X)
    return X


def rk4_step(X, h, kind, radius, factor, types0, table, k1=None):
    if k1 is None:
        k1 = field(X, kind, radius, factor, types0, table)
    k2 = field(X + 0.5 * h * k1, kind, radius, factor, types0, table)
    k3 = field(X + 0.5 * h * k2, kind, radius, factor, types0, table)
    k4 = field(X + h * k3, kind, radius, factor, types0, table)
    return project(X + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4), kind, radius)


def integrate_rk4(X0, kind, radius, factor, types0, table, h, nsteps):
    """Fixed-step RK4 with per-step projection; returns node states and velocities."""
    X = np.array(X0, dtype=float)
    Xs = np.empty((nsteps + 1,) + X.shape)
    Vs = np.empty_like(Xs)
    Xs[0] = X
    for n in range(nsteps):
        Vs[n] = field(X, kind, radius, factor, types0, table)
        X = rk4_step(X, h, kind, radius, factor, types0, table, Vs[n])
        if not np.all(np.isfinite(X)):
            raise FloatingPointError(f"non-finite state at step {n + 1}")
        Xs[n + 1] = X
    Vs[nsteps] = field(X, kind, radius, factor, types0, table)
    return Xs, Vs


def regression_vectors(Xs, kind, radius, factor, types0, observer, lay):
    """Psi[l, eta, i, :] = (1/N) sum_j psi_eta(r_ij) w_ij for observers i.

    Observers are the agents of type ``observer`` (in index order); neighbor
    j of type k2 feeds block k2 of ``lay``. Distances outside a block's
    [lo, hi] are skipped and counted. Returns (Psi, out_of_range).
    """
    Xs = np.asarray(Xs, dtype=float)
    L, N, a = Xs.shape
    obs = np.nonzero(types0 == observer)[0]
    ntot = int(np.sum(lay.size))
    Psi = np.zeros((L, ntot, obs.size, a))
    n_out = 0
    for l in range(L):
        D, W = pair_geometry(Xs[l], kind, radius, factor)
        for k2 in range(lay.size.size):
            nb = int(lay.size[k2])
            cols = np.nonzero(types0 == k2)[0]
            if nb == 0 or cols.size == 0:
                continue
            ii, jj = np.meshgrid(np.arange(obs.size), cols, indexing="ij")
            ii = ii.ravel()
            jj = jj.ravel()
            keep = obs[ii] != jj
            ii, jj = ii[keep], jj[keep]
            r = D[obs[ii], jj]
            inr = (r >= lay.lo[k2]) & (r <= lay.hi[k2])
            n_out += int(np.count_nonzero(~inr))
            ii, jj, r = ii[inr], jj[inr], r[inr]
            if r.size == 0:
                continue
            p = int(lay.degree[k2])
            knots = lay.knots[lay.knot_start[k2]:lay.knot_start[k2 + 1]]
            span, vals = basis_funs(knots, p, nb, r)
            w = W[obs[ii], jj] / N
            for q in range(p + 1):
                eta = lay.offset[k2] + span - p + q
                np.add.at(Psi[l], (eta, ii), vals[:, q, None] * w)
    return Psi, n_out
