"""Piecewise interaction kernels phi: [0, R) -> R.

Each segment is a finite Laurent polynomial in ``u = r - shift``::

    phi(r) = sum_j coeffs[j] * u ** (pmin + j)

which covers cubic Hermite blends (shift = segment start, pmin = 0) as well
as the closed-form tails r^-8, r^-14, r^-2, r^-3 (shift = 0, pmin < 0).
"""
from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass

import numpy as np

SQRT_HALF = 1.0 / math.sqrt(2.0)


@dataclass(frozen=True)
class Segment:
    lo: float
    hi: float
    coeffs: tuple
    pmin: int = 0
    shift: float = 0.0

    def value(self, r):
        u = np.asarray(r, dtype=float) - self.shift
        acc = np.zeros_like(u)
        for c in reversed(self.coeffs):
            acc = acc * u + c
        return acc * u**self.pmin if self.pmin else acc

    def deriv(self, r):
        u = np.asarray(r, dtype=float) - self.shift
        acc = np.zeros_like(u)
        for j, c in enumerate(self.coeffs):
            k = self.pmin + j
            if k:
                acc = acc + c * k * u ** (k - 1)
        return acc

    def weighted_integral(self, a: float, b: float) -> float:
        """Exact integral of phi(r) * r over [a, b] within this segment."""
        s = self.shift
        ua, ub = a - s, b - s
        total = 0.0
        for j, c in enumerate(self.coeffs):
            if c == 0.0:
                continue
            k = self.pmin + j
            # phi * r = c u^k (u + s)
            total += c * _power_integral(k + 1, ua, ub)
            if s != 0.0:
                total += c * s * _power_integral(k, ua, ub)
        return total

    def to_dict(self) -> dict:
        return {"lo": self.lo, "hi": _enc(self.hi), "shift": self.shift,
                "pmin": self.pmin, "coeffs": list(self.coeffs)}

    @classmethod
    def from_dict(cls, d: dict) -> "Segment":
        return cls(float(d["lo"]), _dec(d["hi"]), tuple(float(c) for c in d["coeffs"]),
                   int(d["pmin"]), float(d["shift"]))


def _power_integral(k: int, a: float, b: float) -> float:
    if k == -1:
        return math.log(b / a)
    return (b ** (k + 1) - a ** (k + 1)) / (k + 1)


def _enc(v: float):
    return None if math.isinf(v) else v


def _dec(v) -> float:
    return math.inf if v is None else float(v)


def constant_segment(lo, hi, c) -> Segment:
    return Segment(lo, hi, (float(c),), 0, lo)


class PiecewiseKernel:
    """Ordered segments partitioning [0, support_end); zero beyond."""

    def __init__(self, segments, support_end: float):
        segments = tuple(segments)
        if not segments:
            segments = (constant_segment(0.0, support_end, 0.0),)
        if segments[0].lo != 0.0:
            raise ValueError("first segment must start at 0")
        for s0, s1 in zip(segments, segments[1:]):
            if s0.hi != s1.lo:
                raise ValueError(f"segments leave a gap or overlap at {s0.hi}")
        if segments[-1].hi != support_end:
            raise ValueError("last segment must end at support_end")
        self.segments = segments
        self.support_end = float(support_end)
        self._los = [s.lo for s in segments]

    def __call__(self, r):
        return self.eval(r)

    def _locate(self, r: np.ndarray) -> np.ndarray:
        return np.searchsorted(self._los, r, side="right") - 1

    def eval(self, r):
        scalar = np.ndim(r) == 0
        r = np.atleast_1d(np.asarray(r, dtype=float))
        if np.any(r < 0):
            raise ValueError("kernel evaluated at negative distance")
        out = np.zeros_like(r)
        inside = r < self.support_end
        idx = self._locate(r)
        for j, seg in enumerate(self.segments):
            sel = inside & (idx == j)
            if np.any(sel):
                out[sel] = seg.value(r[sel])
        return float(out[0]) if scalar else out

    def eval_deriv(self, r):
        scalar = np.ndim(r) == 0
        r = np.atleast_1d(np.asarray(r, dtype=float))
        if np.any(r < 0):
            raise ValueError("kernel evaluated at negative distance")
        out = np.zeros_like(r)
        inside = r < self.support_end
        idx = self._locate(r)
        for j, seg in enumerate(self.segments):
            sel = inside & (idx == j)
            if np.any(sel):
                out[sel] = seg.deriv(r[sel])
        return float(out[0]) if scalar else out

    def knots(self) -> list:
        return [s.lo for s in self.segments[1:]] + (
            [self.support_end] if math.isfinite(self.support_end) else [])

    def weighted_antiderivative(self, d) -> np.ndarray:
        """G(d) = 1/2 * integral_0^d phi(r) r dr, exact and segmentwise."""
        d = np.atleast_1d(np.asarray(d, dtype=float))
        cum = [0.0]
        for seg in self.segments:
            cum.append(cum[-1] + (0.5 * seg.weighted_integral(seg.lo, seg.hi)
                                  if math.isfinite(seg.hi) else math.nan))
        out = np.empty_like(d)
        for n, x in enumerate(d):
            x = min(float(x), self.support_end)
            j = max(bisect.bisect_right(self._los, x) - 1, 0)
            if j >= len(self.segments):
                j = len(self.segments) - 1
            seg = self.segments[j]
            out[n] = cum[j] + 0.5 * seg.weighted_integral(seg.lo, x) if x > seg.lo else cum[j]
        return out

    def sup_norms(self, grid_points: int = 10_000, r_max: float | None = None):
        """(max |phi|, max |phi'|) over a uniform grid on [0, R]."""
        R = self.support_end if math.isfinite(self.support_end) else (r_max or 10.0)
        r = np.linspace(0.0, R, grid_points)
        return float(np.max(np.abs(self.eval(r)))), float(np.max(np.abs(self.eval_deriv(r))))

    def scaled(self, c: float) -> "PiecewiseKernel":
        return PiecewiseKernel(
            [Segment(s.lo, s.hi, tuple(c * a for a in s.coeffs), s.pmin, s.shift)
             for s in self.segments], self.support_end)

    def to_dict(self) -> dict:
        return {"support_end": _enc(self.support_end),
                "segments": [s.to_dict() for s in self.segments]}

    @classmethod
    def from_dict(cls, d: dict) -> "PiecewiseKernel":
        return cls([Segment.from_dict(s) for s in d["segments"]], _dec(d["support_end"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "PiecewiseKernel":
        return cls.from_dict(json.loads(text))

    def __repr__(self):
        return f"PiecewiseKernel({len(self.segments)} segments, support_end={self.support_end})"


def zero_kernel() -> PiecewiseKernel:
    return PiecewiseKernel([constant_segment(0.0, 1.0, 0.0)], 1.0)


def constant_kernel(c: float, support_end: float = math.inf) -> PiecewiseKernel:
    return PiecewiseKernel([constant_segment(0.0, support_end, c)], support_end)


# --- Hermite blends --------------------------------------------------------

def _hermite_local(r0, r1, f0, f1, d0, d1):
    """Coefficients of the blend in powers of u = r - r0."""
    if not r1 > r0:
        raise ValueError("hermite_blend needs r1 > r0")
    h = r1 - r0
    c2 = (3.0 * (f1 - f0) / h - 2.0 * d0 - d1) / h
    c3 = (d0 + d1 - 2.0 * (f1 - f0) / h) / (h * h)
    return (f0, d0, c2, c3)


def hermite_blend(r0, r1, f0, f1, d0, d1):
    """Cubic a r^3 + b r^2 + c r + d matching values and slopes at r0 and r1.

    Returns ``(a, b, c, d)`` in absolute ``r``.
    """
    e0, e1, e2, e3 = _hermite_local(r0, r1, f0, f1, d0, d1)
    s = r0
    a = e3
    b = e2 - 3.0 * e3 * s
    c = e1 - 2.0 * e2 * s + 3.0 * e3 * s * s
    d = e0 - e1 * s + e2 * s * s - e3 * s**3
    return a, b, c, d


def blend_segment(r0, r1, f0, f1, d0, d1) -> Segment:
    return Segment(r0, r1, _hermite_local(r0, r1, f0, f1, d0, d1), 0, r0)


# --- ground-truth kernels --------------------------------------------------

def make_od() -> PiecewiseKernel:
    k1 = SQRT_HALF
    segs = [
        constant_segment(0.0, k1 - 0.01, 1.0),
        blend_segment(k1 - 0.01, k1, 1.0, 0.1, 0.0, 0.0),
        constant_segment(k1, 0.99, 0.1),
        blend_segment(0.99, 1.0, 0.1, 0.0, 0.0, 0.0),
    ]
    return PiecewiseKernel(segs, 1.0)


def _taper(segs, tail: Segment, R_M: float):
    """Close a closed-form tail with a C1 cubic taper to 0 on [0.99 R_M, R_M)."""
    if math.isinf(R_M):
        segs.append(Segment(tail.lo, math.inf, tail.coeffs, tail.pmin, tail.shift))
        return PiecewiseKernel(segs, math.inf)
    a = 0.99 * R_M
    if not a > tail.lo:
        raise ValueError(f"R_M={R_M} too small for the kernel's closed-form branch")
    segs.append(Segment(tail.lo, a, tail.coeffs, tail.pmin, tail.shift))
    segs.append(blend_segment(a, R_M, float(tail.value(a)), 0.0, float(tail.deriv(a)), 0.0))
    return PiecewiseKernel(segs, R_M)


def lj_closed_form(eps: float, sigma: float, lo: float = 1.0) -> Segment:
    """24 eps / sigma^2 ((sigma/r)^8 - 2 (sigma/r)^14) as a Laurent segment."""
    c = 24.0 * eps / sigma**2
    coeffs = [0.0] * 7
    coeffs[0] = -2.0 * c * sigma**14  # r^-14
    coeffs[6] = c * sigma**8          # r^-8
    return Segment(lo, math.inf, tuple(coeffs), -14, 0.0)


def make_lj(eps: float = 10.0, sigma: float = 1.0, R_M: float = math.inf) -> PiecewiseKernel:
    if not (eps > 0 and sigma > 0):
        raise ValueError("eps and sigma must be positive")
    tail = lj_closed_form(eps, sigma)
    f1 = float(tail.value(1.0))
    g1 = float(tail.deriv(1.0))
    segs = [
        constant_segment(0.0, 0.5, f1 - g1 / 4.0),
        Segment(0.5, 1.0, (f1, -g1, g1), 0, 0.0),
    ]
    return _taper(segs, tail, R_M)


RAMP_END = 0.01


def _ramped(tail: Segment, R_M: float) -> PiecewiseKernel:
    # linear ramp matching value and slope of the closed form at r = 0.01
    f = float(tail.value(RAMP_END))
    g = float(tail.deriv(RAMP_END))
    segs = [Segment(0.0, RAMP_END, (f, g), 0, RAMP_END)]
    return _taper(segs, Segment(RAMP_END, math.inf, tail.coeffs, tail.pmin, 0.0), R_M)


class KernelMatrix:
    """K x K kernels; ``kernels[k][k2]`` is the influence of type k2 on type k (0-based)."""

    def __init__(self, kernels):
        self.kernels = [list(row) for row in kernels]
        K = len(self.kernels)
        if K < 1 or any(len(row) != K for row in self.kernels):
            raise ValueError("kernel matrix must be square and nonempty")

    @property
    def K(self) -> int:
        return len(self.kernels)

    def __getitem__(self, idx):
        k, k2 = idx
        return self.kernels[k][k2]

    @classmethod
    def single(cls, kernel: PiecewiseKernel) -> "KernelMatrix":
        return cls([[kernel]])

    def to_dict(self) -> dict:
        return {"K": self.K, "kernels": [[k.to_dict() for k in row] for row in self.kernels]}

    @classmethod
    def from_dict(cls, d: dict) -> "KernelMatrix":
        return cls([[PiecewiseKernel.from_dict(k) for k in row] for row in d["kernels"]])


def make_ps1(R_M: float = math.inf) -> KernelMatrix:
    """Predator-swarm kernels; type 0 = prey, type 1 = predator."""
    phi11 = _ramped(Segment(RAMP_END, math.inf, (-1.0, 0.0, 1.0), -2, 0.0), R_M)
    phi12 = _ramped(Segment(RAMP_END, math.inf, (-2.0,), -2, 0.0), R_M)
    phi21 = _ramped(Segment(RAMP_END, math.inf, (3.5,), -3, 0.0), R_M)
    return KernelMatrix([[phi11, phi12], [phi21, zero_kernel()]])


# --- packing for the compiled core ----------------------------------------

@dataclass(frozen=True)
class KernelTable:
    """Flat arrays describing a KernelMatrix, consumed by the numerical core."""

    K: int
    pair_start: np.ndarray   # (K*K + 1,) int64 segment ranges per pair
    support_end: np.ndarray  # (K*K,)
    seg_lo: np.ndarray
    seg_shift: np.ndarray
    seg_pmin: np.ndarray     # int64
    coef_start: np.ndarray   # (nseg + 1,) int64
    coefs: np.ndarray


def pack(kernels) -> KernelTable:
    if isinstance(kernels, PiecewiseKernel):
        kernels = KernelMatrix.single(kernels)
    K = kernels.K
    pair_start, support, lo, shift, pmin, cstart, coefs = [0], [], [], [], [], [0], []
    for k in range(K):
        for k2 in range(K):
            ker = kernels[k, k2]
            support.append(ker.support_end)
            for s in ker.segments:
                lo.append(s.lo)
                shift.append(s.shift)
                pmin.append(s.pmin)
                coefs.extend(s.coeffs)
                cstart.append(len(coefs))
            pair_start.append(len(lo))
    return KernelTable(
        K=K,
        pair_start=np.array(pair_start, dtype=np.int64),
        support_end=np.array(support, dtype=float),
        seg_lo=np.array(lo, dtype=float),
        seg_shift=np.array(shift, dtype=float),
        seg_pmin=np.array(pmin, dtype=np.int64),
        coef_start=np.array(cstart, dtype=np.int64),
        coefs=np.array(coefs, dtype=float),
    )
