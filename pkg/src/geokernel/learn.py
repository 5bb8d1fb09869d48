"""Least-squares learning of interaction kernels from trajectory data.

Normalization: with Psi_eta(i) = (1/N) sum_j psi_eta(r_ij) w_ij,

    A(eta, eta') = 1/(LM) sum_{m,l} (1/N) sum_i g(x_i) <Psi_eta(i), Psi_eta'(i)>
    b(eta)       = 1/(LM) sum_{m,l} (1/N) sum_i g(x_i) <xdot_i, Psi_eta(i)>
    c            = 1/(LM) sum_{m,l} (1/N) sum_i g(x_i) |xdot_i|^2

so that the loss at coefficients alpha is alpha'A alpha - 2 b'alpha + c.
Columns scaled by 1/sqrt(N) with the Gram product summed over l and divided
by LM give A/N; the factor N only rescales eigenvalues, not the solution.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from . import _backend
from .basis import Estimator, SplineBasis, build, layout, observed_range
from .integrate import TrajectoryDataset, map_ordered
from .kernels import KernelMatrix, PiecewiseKernel, pack, zero_kernel

log = logging.getLogger(__name__)

RANK_CUTOFF = 1e-12


@dataclass
class NormalEquations:
    A: np.ndarray
    b: np.ndarray
    c: float
    scale: float            # the 1/(LM) already applied
    n_out: int = 0          # pair distances outside the basis range
    blocks: list = field(default_factory=list)   # (k2, offset, size) per block

    @property
    def n(self) -> int:
        return self.b.size

    def loss(self, alpha) -> float:
        alpha = np.asarray(alpha, dtype=float)
        return float(alpha @ self.A @ alpha - 2.0 * self.b @ alpha + self.c)


@dataclass
class LearnReport:
    coeffs: np.ndarray
    lambda_min: float
    lambda_max: float
    cond: float
    residual_loss: float
    flagged: bool = False
    rank: int = 0

    def to_dict(self) -> dict:
        return {"coeffs": [float(c) for c in self.coeffs], "lambda_min": self.lambda_min,
                "lambda_max": self.lambda_max, "cond": self.cond,
                "residual_loss": self.residual_loss, "flagged": self.flagged, "rank": self.rank}


def _check_types(ds: TrajectoryDataset, K: int | None = None) -> np.ndarray:
    t = np.asarray(ds.types, dtype=np.int64)
    K = ds.K if K is None else K
    if t.min() < 1 or t.max() > K:
        raise ValueError("type label outside 1..K")
    return t - 1


def _assemble(ds: TrajectoryDataset, bases, observer: int, types0, threads=None):
    m = ds.manifold
    lay = layout(bases)
    n = lay.total
    N, a = ds.N, ds.X.shape[-1]
    obs = np.nonzero(types0 == observer)[0]

    def one(mi):
        Psi, n_out = _backend.core.regression_vectors(
            ds.X[mi], m.code, m.radius, m.distance_factor, types0, observer, lay)
        Xo = ds.X[mi][:, obs]
        Vo = ds.V[mi][:, obs]
        sg = np.sqrt(_backend.core.metric_factors(Xo, m.code))      # (L, nobs)
        Q = (Psi * sg[:, None, :, None]).transpose(1, 0, 2, 3).reshape(n, -1)
        v = (Vo * sg[:, :, None]).reshape(-1)
        return Q @ Q.T, Q @ v, float(v @ v), n_out

    parts = map_ordered(one, range(ds.M), threads)
    A = np.zeros((n, n))
    b = np.zeros(n)
    c = 0.0
    n_out = 0
    for Am, bm, cm, no in parts:   # fixed order keeps results deterministic
        A += Am
        b += bm
        c += cm
        n_out += no
    scale = 1.0 / (ds.L * ds.M)
    A *= scale / N
    A = 0.5 * (A + A.T)
    b *= scale / N
    c *= scale / N
    if n_out:
        log.info("%d pair distances outside the basis range were ignored", n_out)
    blocks = [(k2, int(lay.offset[k2]), int(lay.size[k2])) for k2 in range(len(bases))]
    return NormalEquations(A, b, c, scale, n_out, blocks)


def assemble(ds: TrajectoryDataset, basis: SplineBasis, threads=None) -> NormalEquations:
    types0 = _check_types(ds)
    if ds.K != 1:
        raise ValueError("assemble expects a homogeneous dataset; use assemble_hetero")
    return _assemble(ds, [basis], 0, types0, threads)


def _pair_exists(types0, k, k2) -> bool:
    nk2 = int(np.count_nonzero(types0 == k2))
    return nk2 - (1 if k == k2 else 0) > 0 and np.any(types0 == k)


def assemble_hetero(ds: TrajectoryDataset, bases: dict, K: int | None = None,
                    threads=None) -> list[NormalEquations]:
    """One system per observer type k; ``bases[(k, k2)]`` is 1-based, None = empty."""
    K = ds.K if K is None else K
    types0 = _check_types(ds, K)
    out = []
    for k in range(K):
        blk = []
        for k2 in range(K):
            b = bases.get((k + 1, k2 + 1))
            blk.append(b if b is not None and _pair_exists(types0, k, k2) else None)
        out.append(_assemble(ds, blk, k, types0, threads))
    return out


def solve(ne: NormalEquations) -> LearnReport:
    """SPD solve of A alpha = b; minimum-norm fallback when nearly singular."""
    A, b = ne.A, ne.b
    n = b.size
    if n == 0:
        return LearnReport(np.zeros(0), 0.0, 0.0, 1.0, ne.c, False, 0)
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
        raise FloatingPointError("non-finite entries in the normal equations")
    lam, U = linalg.eigh(A)
    lmin, lmax = float(lam[0]), float(lam[-1])
    flagged = not lmin > RANK_CUTOFF * lmax
    if not flagged:
        try:
            alpha = linalg.cho_solve(linalg.cho_factor(A), b)
        except linalg.LinAlgError:
            flagged = True
    if flagged:
        keep = lam > RANK_CUTOFF * max(lmax, 0.0)
        alpha = U[:, keep] @ ((U[:, keep].T @ b) / lam[keep])
        rank = int(np.count_nonzero(keep))
    else:
        rank = n
    cond = lmax / lmin if lmin > 0 else float("inf")
    return LearnReport(alpha, lmin, lmax, cond, ne.loss(alpha), flagged, rank)


# --- direct loss -----------------------------------------------------------

def as_kernel_matrix(kernels, K: int = 1) -> KernelMatrix:
    """Accept a kernel, an estimator, a KernelMatrix or a {(k, k2): ...} dict."""
    if isinstance(kernels, KernelMatrix):
        return kernels
    if isinstance(kernels, (PiecewiseKernel, Estimator)):
        kernels = {(1, 1): kernels}
    rows = []
    for k in range(1, K + 1):
        row = []
        for k2 in range(1, K + 1):
            e = kernels.get((k, k2))
            if e is None:
                row.append(zero_kernel())
            elif isinstance(e, Estimator):
                row.append(e.to_kernel())
            else:
                row.append(e)
        rows.append(row)
    return KernelMatrix(rows)


def loss(ds: TrajectoryDataset, kernels) -> float:
    """(1/LM) sum_{m,l} (1/N) sum_i |xdot_i - f_i(X)|_g^2."""
    km = as_kernel_matrix(kernels, ds.K)
    types0 = _check_types(ds, km.K)
    table = pack(km)
    m = ds.manifold
    total = 0.0
    for mi in range(ds.M):
        for l in range(ds.L):
            X = ds.X[mi, l]
            F = _backend.core.field(X, m.code, m.radius, m.distance_factor, types0, table)
            g = _backend.core.metric_factors(X, m.code)
            total += float(np.sum(g * np.sum((ds.V[mi, l] - F) ** 2, axis=-1)))
    return total / (ds.L * ds.M * ds.N)


# --- end to end ------------------------------------------------------------

@dataclass
class LearnResult:
    estimators: dict          # (k, k2) 1-based -> Estimator or None
    reports: list             # LearnReport per observer type
    systems: list             # NormalEquations per observer type
    timings: dict

    def estimator(self, k: int = 1, k2: int = 1) -> Estimator | None:
        return self.estimators.get((k, k2))

    def kernel_matrix(self, K: int) -> KernelMatrix:
        return as_kernel_matrix(self.estimators, K)


def learn(ds: TrajectoryDataset, n, degree=1, K: int | None = None, threads=None,
          ranges: dict | None = None) -> LearnResult:
    """Build bases on the observed ranges, assemble, solve.

    ``n`` and ``degree`` are ints or {(k, k2): int} dicts (1-based pairs).
    ``ranges`` overrides the observed range per pair.
    """
    K = ds.K if K is None else K
    t0 = time.perf_counter()
    bases = {}
    for k in range(1, K + 1):
        for k2 in range(1, K + 1):
            rng = (ranges or {}).get((k, k2))
            if rng is None:
                rng = observed_range(ds, (k, k2) if K > 1 else None)
            nk = n.get((k, k2), 1) if isinstance(n, dict) else n
            pk = degree.get((k, k2), 1) if isinstance(degree, dict) else degree
            if rng is None or nk == 0:
                bases[(k, k2)] = None
                continue
            lo, hi = rng
            if not hi > lo:
                hi = lo + max(1e-12, 1e-9 * abs(lo))
            bases[(k, k2)] = build(lo, hi, nk, min(pk, nk - 1))
    t1 = time.perf_counter()
    systems = assemble_hetero(ds, bases, K, threads)
    t2 = time.perf_counter()
    reports = [solve(ne) for ne in systems]
    t3 = time.perf_counter()
    estimators = {}
    for k, (ne, rep) in enumerate(zip(systems, reports), start=1):
        for k2, off, size in ne.blocks:
            estimators[(k, k2 + 1)] = (
                Estimator(bases[(k, k2 + 1)], rep.coeffs[off:off + size]) if size else None)
    timings = {"pairwise": t1 - t0, "assembly": t2 - t1, "solve": t3 - t2}
    return LearnResult(estimators, reports, systems, timings)
