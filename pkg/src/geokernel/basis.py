"""Clamped B-spline hypothesis spaces and the estimators built on them."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .kernels import PiecewiseKernel, Segment, constant_segment


@dataclass(frozen=True)
class SplineBasis:
    degree: int
    knots: np.ndarray
    n: int

    @property
    def rmin(self) -> float:
        return float(self.knots[0])

    @property
    def rmax(self) -> float:
        return float(self.knots[-1])

    @property
    def breakpoints(self) -> np.ndarray:
        return np.unique(self.knots)

    def to_dict(self) -> dict:
        return {"degree": self.degree, "n": self.n, "knots": [float(t) for t in self.knots]}

    @classmethod
    def from_dict(cls, d: dict) -> "SplineBasis":
        return cls(int(d["degree"]), np.asarray(d["knots"], dtype=float), int(d["n"]))


def build(rmin: float, rmax: float, n: int, p: int = 1) -> SplineBasis:
    """n clamped B-splines of degree p on a uniform partition of [rmin, rmax]."""
    if not (math.isfinite(rmin) and math.isfinite(rmax)) or not rmax > rmin:
        raise ValueError(f"invalid basis range [{rmin}, {rmax}]")
    if p < 0 or n < p + 1:
        raise ValueError(f"need n >= p + 1 (n={n}, p={p})")
    interior = np.linspace(rmin, rmax, n - p + 1)
    knots = np.concatenate([np.full(p, rmin), interior, np.full(p, rmax)])
    return SplineBasis(p, knots, n)


def find_span(knots: np.ndarray, p: int, n: int, r: np.ndarray) -> np.ndarray:
    span = np.searchsorted(knots, r, side="right") - 1
    return np.clip(span, p, n - 1)


def basis_funs(knots: np.ndarray, p: int, n: int, r) -> tuple[np.ndarray, np.ndarray]:
    """Cox-de Boor triangle: nonzero basis values at each r.

    Returns ``(span, vals)``; ``vals[:, q]`` is the value of basis function
    ``span - p + q``. Callers are responsible for r lying in the knot range.
    """
    r = np.atleast_1d(np.asarray(r, dtype=float))
    span = find_span(knots, p, n, r)
    vals = np.zeros((r.size, p + 1))
    vals[:, 0] = 1.0
    left = np.zeros((r.size, p + 1))
    right = np.zeros((r.size, p + 1))
    for j in range(1, p + 1):
        left[:, j] = r - knots[span + 1 - j]
        right[:, j] = knots[span + j] - r
        saved = np.zeros(r.size)
        for q in range(j):
            den = right[:, q + 1] + left[:, j - q]
            temp = np.divide(vals[:, q], den, out=np.zeros(r.size), where=den != 0)
            vals[:, q] = saved + right[:, q + 1] * temp
            saved = left[:, j - q] * temp
        vals[:, j] = saved
    return span, vals


def design_matrix(b: SplineBasis, r) -> np.ndarray:
    """Dense (len(r), n) matrix of basis values; zero outside [rmin, rmax]."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    out = np.zeros((r.size, b.n))
    inside = (r >= b.rmin) & (r <= b.rmax)
    if np.any(inside):
        span, vals = basis_funs(b.knots, b.degree, b.n, r[inside])
        rows = np.nonzero(inside)[0]
        for q in range(b.degree + 1):
            out[rows, span - b.degree + q] = vals[:, q]
    return out


def eval_basis(b: SplineBasis, eta: int, r) -> np.ndarray | float:
    """Value of the eta-th (0-based) basis function."""
    if not 0 <= eta < b.n:
        raise IndexError(eta)
    vals = design_matrix(b, r)[:, eta]
    return float(vals[0]) if np.ndim(r) == 0 else vals


def n_star(M: int, L: int, N: int, d: int) -> int:
    """Suggested dimension (ML / ln ML)^(1/3) N^(1/d), rounded, at least 1."""
    ML = M * L
    if ML <= math.e:
        raise ValueError("n_star needs M * L > e")
    return max(1, round((ML / math.log(ML)) ** (1.0 / 3.0) * N ** (1.0 / d)))


def _fit_polynomial_segment(f, a: float, b: float, deg: int) -> Segment:
    # f restricted to [a, b] is a polynomial of degree <= deg; recover it
    # in powers of u = r - a from deg + 1 Chebyshev samples
    if deg == 0:
        return constant_segment(a, b, float(f(np.array([(a + b) / 2]))[0]))
    k = np.arange(deg + 1)
    u = (b - a) * (1 - np.cos((2 * k + 1) * np.pi / (2 * deg + 2))) / 2
    V = np.vander(u, deg + 1, increasing=True)
    coeffs = np.linalg.solve(V, f(a + u))
    return Segment(a, b, tuple(float(c) for c in coeffs), 0, a)


@dataclass
class Estimator:
    """phi_hat = sum_eta coeffs[eta] psi_eta on [rmin, rmax], zero elsewhere."""

    basis: SplineBasis
    coeffs: np.ndarray
    smoothing: dict | None = None
    _kernel: PiecewiseKernel | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.basis.n,):
            raise ValueError("coefficient count does not match the basis")

    def __call__(self, r):
        return self.eval(r)

    def eval(self, r):
        if self.smoothing is not None:
            return self.to_kernel()(r)
        vals = design_matrix(self.basis, r) @ self.coeffs
        return float(vals[0]) if np.ndim(r) == 0 else vals

    def to_kernel(self) -> PiecewiseKernel:
        """Exact piecewise-polynomial form, usable to drive the dynamics."""
        if self._kernel is None:
            if self.smoothing is not None:
                self._kernel = _smoothed_kernel(self)
            else:
                self._kernel = _spline_kernel(self.basis, self.coeffs)
        return self._kernel

    def to_dict(self) -> dict:
        return {"basis": self.basis.to_dict(), "coeffs": [float(c) for c in self.coeffs],
                "smoothing": self.smoothing}

    @classmethod
    def from_dict(cls, d: dict) -> "Estimator":
        return cls(SplineBasis.from_dict(d["basis"]), np.asarray(d["coeffs"], dtype=float),
                   d.get("smoothing"))


def _spline_kernel(b: SplineBasis, coeffs: np.ndarray) -> PiecewiseKernel:
    f = lambda r: design_matrix(b, r) @ coeffs  # noqa: E731
    bp = b.breakpoints
    segs = [constant_segment(0.0, b.rmin, 0.0)] if b.rmin > 0 else []
    for a, c in zip(bp[:-1], bp[1:]):
        segs.append(_fit_polynomial_segment(f, a, c, b.degree))
    # the basis is closed at rmax, kernel supports are half-open
    end = float(np.nextafter(b.rmax, np.inf))
    segs[-1] = replace(segs[-1], hi=end)
    return PiecewiseKernel(segs, end)


def _antiderivative(b: SplineBasis, coeffs: np.ndarray):
    """F(r) = integral_{-inf}^r phi_hat, piecewise exact."""
    kern = _spline_kernel(b, coeffs)
    segs = [s for s in kern.segments if s.lo >= b.rmin]
    los = np.array([s.lo for s in segs])
    cum = np.concatenate([[0.0], np.cumsum([_seg_integral(s, s.lo, s.hi) for s in segs])])
    total = cum[-1]

    def F(r):
        r = np.atleast_1d(np.asarray(r, dtype=float))
        out = np.where(r >= b.rmax, total, 0.0)
        mid = (r > b.rmin) & (r < b.rmax)
        idx = np.searchsorted(los, r[mid], side="right") - 1
        vals = np.empty(idx.size)
        for n, (j, x) in enumerate(zip(idx, r[mid])):
            vals[n] = cum[j] + _seg_integral(segs[j], segs[j].lo, x)
        out[mid] = vals
        return out

    return F


def _seg_integral(s: Segment, a: float, c: float) -> float:
    ua, uc = a - s.shift, c - s.shift
    return sum(co * (uc ** (j + 1) - ua ** (j + 1)) / (j + 1) for j, co in enumerate(s.coeffs))


def smooth(e: Estimator) -> Estimator:
    """Moving average over one knot spacing: one degree up, integral preserved."""
    if e.smoothing is not None:
        raise ValueError("estimator is already smoothed")
    bp = e.basis.breakpoints
    width = float(np.min(np.diff(bp))) if bp.size > 1 else 0.0
    return Estimator(e.basis, e.coeffs.copy(), {"method": "box", "width": width})


def _smoothed_kernel(e: Estimator) -> PiecewiseKernel:
    b = e.basis
    width = float(e.smoothing["width"])
    if width <= 0:
        return _spline_kernel(b, e.coeffs)
    F = _antiderivative(b, e.coeffs)
    half = width / 2.0

    def g(r):
        return (F(r + half) - F(r - half)) / width

    bp = b.breakpoints
    cuts = np.unique(np.concatenate([bp - half, bp + half]))
    cuts = cuts[cuts > 0.0]
    cuts = np.concatenate([[0.0], cuts])
    segs = []
    for a, c in zip(cuts[:-1], cuts[1:]):
        if c - a <= 1e-15 * max(1.0, c):
            continue
        if c <= b.rmin - half:
            segs.append(constant_segment(a, c, 0.0))
        else:
            segs.append(_fit_polynomial_segment(g, a, c, b.degree + 1))
    # re-chain after dropping slivers
    fixed = []
    for s in segs:
        lo = fixed[-1].hi if fixed else 0.0
        fixed.append(Segment(lo, s.hi, s.coeffs, s.pmin, s.shift))
    return PiecewiseKernel(fixed, fixed[-1].hi)


# --- multi-block layout for the assembly core ------------------------------

@dataclass(frozen=True)
class BlockLayout:
    """Concatenated bases, one block per neighbor type."""

    offset: np.ndarray      # (K,) int64 start of each block's coefficients
    size: np.ndarray        # (K,) int64, 0 for a collapsed block
    degree: np.ndarray      # (K,) int64
    knot_start: np.ndarray  # (K + 1,) int64
    knots: np.ndarray
    lo: np.ndarray          # (K,)
    hi: np.ndarray          # (K,)

    @property
    def total(self) -> int:
        return int(np.sum(self.size))


def layout(bases) -> BlockLayout:
    """Pack a list of SplineBasis (None for an empty block)."""
    offset, size, degree, kstart, knots, lo, hi = [], [], [], [0], [], [], []
    pos = 0
    for b in bases:
        offset.append(pos)
        if b is None:
            size.append(0)
            degree.append(0)
            lo.append(0.0)
            hi.append(-1.0)
        else:
            size.append(b.n)
            degree.append(b.degree)
            knots.extend(float(t) for t in b.knots)
            lo.append(b.rmin)
            hi.append(b.rmax)
            pos += b.n
        kstart.append(len(knots))
    i64 = lambda v: np.array(v, dtype=np.int64)  # noqa: E731
    return BlockLayout(i64(offset), i64(size), i64(degree), i64(kstart),
                       np.array(knots, dtype=float), np.array(lo), np.array(hi))


def observed_range(ds, pair=None) -> tuple[float, float] | None:
    """(min, max) pairwise distance over all snapshots, i != i'.

    ``pair = (k, k2)`` (1-based) restricts to observers of type k and
    neighbors of type k2; returns None when no such pair exists.
    """
    from . import _backend

    m = ds.manifold
    types = np.asarray(ds.types)
    if pair is None:
        rows = cols = np.ones(types.size, dtype=bool)
    else:
        rows = types == pair[0]
        cols = types == pair[1]
    mask = rows[:, None] & cols[None, :]
    np.fill_diagonal(mask, False)
    if not mask.any():
        return None
    lo, hi = math.inf, -math.inf
    for Xm in ds.X:
        for X in Xm:
            D, _ = _backend.core.pair_geometry(X, m.code, m.radius, m.distance_factor)
            vals = D[mask]
            lo = min(lo, float(vals.min()))
            hi = max(hi, float(vals.max()))
    return lo, hi
