"""Empirical distance measures, L2(rho) errors, trajectory errors and rate studies."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import _backend
from .basis import Estimator, n_star, smooth
from .dynamics import ModelSpec, SystemState
from .geometry import ICSpec, ManifoldDescriptor, distances, sample_initial
from .integrate import (IntegratorConfig, ObservationSet, TrajectoryDataset, generate_dataset,
                        map_ordered, observe, simulate, trajectory_rng)
from .kernels import KernelMatrix, zero_kernel


@dataclass
class EmpiricalMeasure:
    """Weighted point masses on pairwise distances."""

    r: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        self.r = np.asarray(self.r, dtype=float)
        self.w = np.asarray(self.w, dtype=float)
        if self.r.size == 0:
            raise ValueError("empty measure")
        if self.r.shape != self.w.shape or np.any(self.w < 0):
            raise ValueError("weights must be nonnegative, one per sample")
        total = self.w.sum()
        if abs(total - 1.0) > 1e-12:
            self.w = self.w / total

    @property
    def support(self) -> tuple[float, float]:
        return float(self.r.min()), float(self.r.max())

    def histogram(self, bins: int = 200, range=None):
        """(bin centers, mass per bin)."""
        mass, edges = np.histogram(self.r, bins=bins, range=range or self.support, weights=self.w)
        return 0.5 * (edges[:-1] + edges[1:]), mass


def uniform_measure(r) -> EmpiricalMeasure:
    r = np.asarray(r, dtype=float)
    return EmpiricalMeasure(r, np.full(r.size, 1.0 / max(r.size, 1)))


def rho_empirical(ds: TrajectoryDataset, pair_filter=None) -> EmpiricalMeasure:
    """Uniform mass on every (m, l, pair) distance.

    Unordered pairs i < i' without a filter or for k = k'; ordered pairs
    (type k observer, type k' neighbor) for k != k'.
    """
    types = np.asarray(ds.types)
    N = types.size
    if pair_filter is None:
        mask = np.triu(np.ones((N, N), dtype=bool), 1)
    else:
        k, k2 = pair_filter
        mask = (types == k)[:, None] & (types == k2)[None, :]
        mask = np.triu(mask, 1) if k == k2 else mask
        np.fill_diagonal(mask, False)
    if not mask.any():
        raise ValueError(f"no agent pairs for filter {pair_filter}")
    m = ds.manifold
    chunks = []
    for Xm in ds.X:
        for X in Xm:
            D, _ = _backend.core.pair_geometry(X, m.code, m.radius, m.distance_factor)
            chunks.append(D[mask])
    return uniform_measure(np.concatenate(chunks))


def _values(f, r):
    if f is None:
        return np.zeros_like(r)
    return np.asarray(f(r), dtype=float)


def l2_rho(f, mu: EmpiricalMeasure) -> float:
    """sqrt(sum_j w_j (f(r_j) r_j)^2)."""
    return float(math.sqrt(np.sum(mu.w * (_values(f, mu.r) * mu.r) ** 2)))


def rel_error(est, truth, mu: EmpiricalMeasure, with_flag: bool = False):
    """||(est - truth) r|| / ||truth r|| in L2(mu).

    For a truth of zero norm the absolute error is returned (0 when the
    estimator vanishes too); ``with_flag`` adds "relative" or "absolute".
    """
    e = _values(est, mu.r)
    t = _values(truth, mu.r)
    num = float(math.sqrt(np.sum(mu.w * ((e - t) * mu.r) ** 2)))
    den = float(math.sqrt(np.sum(mu.w * (t * mu.r) ** 2)))
    if den > 0:
        val, kind = num / den, "relative"
    else:
        val, kind = num, "absolute"
    return (val, kind) if with_flag else val


def traj_error(X: ObservationSet, Xhat: ObservationSet, m: ManifoldDescriptor) -> float:
    """max over the observation grid of the RMS geodesic distance between agents."""
    if X.X.shape != Xhat.X.shape or not np.allclose(X.times, Xhat.times, rtol=0, atol=1e-12):
        raise ValueError("trajectories are on different grids")
    d = distances(m, X.X, Xhat.X)          # (L, N)
    return float(np.max(np.sqrt(np.mean(d * d, axis=-1))))


def estimator_model(model: ModelSpec, estimators, smoothed: bool = True) -> ModelSpec:
    """Model driven by estimators; ``estimators`` is an Estimator or {(k, k2): Estimator}."""
    if isinstance(estimators, Estimator):
        estimators = {(1, 1): estimators}
    K = model.K
    rows = []
    for k in range(1, K + 1):
        row = []
        for k2 in range(1, K + 1):
            e = estimators.get((k, k2))
            if e is None:
                row.append(zero_kernel())
            else:
                if smoothed and e.smoothing is None:
                    e = smooth(e)
                row.append(e.to_kernel())
        rows.append(row)
    return model.with_kernels(KernelMatrix(rows))


def random_ics(model: ModelSpec, ic: ICSpec, count: int, seed: int, first: int = 0) -> np.ndarray:
    return np.stack([sample_initial(model.manifold, ic, trajectory_rng(seed, first + j))
                     for j in range(count)])


def traj_errors(model_true: ModelSpec, model_est: ModelSpec, ICs, T: float, L: int,
                cfg: IntegratorConfig, threads=None) -> np.ndarray:
    """Per-IC trajectory errors between the true and the estimated dynamics."""
    ICs = np.asarray(ICs, dtype=float)
    types = model_true.types(ICs.shape[1])

    def one(j):
        x0 = SystemState(ICs[j], types)
        a = observe(simulate(model_true, x0, T, cfg), L, T, model_true)
        b = observe(simulate(model_est, x0, T, cfg), L, T, model_est)
        return traj_error(a, b, model_true.manifold)

    return np.array(map_ordered(one, range(ICs.shape[0]), threads))


def traj_error_stats(model_true: ModelSpec, model_est: ModelSpec, ICs, T: float, L: int,
                     cfg: IntegratorConfig, threads=None) -> tuple[float, float]:
    errs = traj_errors(model_true, model_est, ICs, T, L, cfg, threads)
    return float(np.mean(errs)), float(np.std(errs))


@dataclass
class ErrorReport:
    rel_l2: float
    abs_l2: float
    traj_mean: float = float("nan")
    traj_std: float = float("nan")
    pairs: dict = field(default_factory=dict)   # (k, k2) -> (value, "relative" | "absolute")


# --- convergence study -----------------------------------------------------

@dataclass
class ConvergenceExperiment:
    model: ModelSpec
    ic: ICSpec
    L: int
    T: float
    cfg: IntegratorConfig
    degree: int = 1
    n_rule: object = None        # M -> n; default n_star
    seed: int = 0
    rho_M: int = 0               # size of the independent reference set for rho; 0 = training data
    duplicate: bool = False      # grow M by duplicating data (no new information)

    def n_for(self, M: int) -> int:
        if self.n_rule is not None:
            return int(self.n_rule(M))
        return n_star(M, self.L, self.ic.N, self.model.manifold.dim)


@dataclass
class StudyResult:
    M: np.ndarray
    errors: np.ndarray           # (len(M), repeats)
    slope: float
    ci: tuple
    flags: list

    def rows(self):
        for M, e in zip(self.M, self.errors):
            yield int(M), float(np.mean(e)), float(np.std(e))


FLOOR = 1e-8


def fit_slope(M, errors, level: float = 0.95):
    """Least-squares slope of log(error) against log(M) over all repeats, with a t-interval."""
    M = np.asarray(M, dtype=float)
    errors = np.asarray(errors, dtype=float)
    x = np.repeat(np.log(M), errors.shape[1])
    y = np.log(np.maximum(errors.ravel(), np.finfo(float).tiny))
    fit = stats.linregress(x, y)
    dof = x.size - 2
    half = float(stats.t.ppf(0.5 + level / 2, dof) * fit.stderr) if dof > 0 else float("inf")
    return float(fit.slope), (float(fit.slope) - half, float(fit.slope) + half)


def convergence_study(exp: ConvergenceExperiment, M_list, repeats: int = 1,
                      threads=None) -> StudyResult:
    """Learn on nested data sets of size M and fit the decay of the L2(rho) error."""
    from .learn import learn

    M_list = sorted(int(M) for M in M_list)
    if len(M_list) < 3:
        raise ValueError("convergence study needs at least 3 values of M")
    if repeats < 1:
        raise ValueError("need repeats >= 1")
    truth = exp.model.kernels[0, 0]
    Mmax = M_list[-1]
    mu = None
    if exp.rho_M:
        ref = generate_dataset(exp.model, exp.ic, exp.rho_M, exp.L, exp.T, exp.cfg,
                               exp.seed, threads, first=10**6)
        mu = rho_empirical(ref)
    errors = np.zeros((len(M_list), repeats))
    for rep in range(repeats):
        base = M_list[0] if exp.duplicate else Mmax
        full = generate_dataset(exp.model, exp.ic, base, exp.L, exp.T, exp.cfg,
                                exp.seed, threads, first=rep * Mmax)
        for j, M in enumerate(M_list):
            if exp.duplicate:
                ds = full.subset(np.tile(np.arange(base), M // base))
            else:
                ds = full.subset(np.arange(M))
            res = learn(ds, exp.n_for(M), exp.degree, threads=threads)
            errors[j, rep] = rel_error(res.estimator(), truth, mu or rho_empirical(ds))
    slope, ci = fit_slope(M_list, errors)
    flags = []
    if np.max(errors) < FLOOR:
        flags.append("floor-limited")
    if ci[0] <= 0.0 <= ci[1] or abs(slope) < 0.05:
        flags.append("no-decay")
    return StudyResult(np.array(M_list), errors, slope, ci, flags)
