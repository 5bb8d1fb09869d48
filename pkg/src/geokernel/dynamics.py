"""Right-hand side of the first-order model and its energy."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _backend
from .geometry import ManifoldDescriptor
from .kernels import KernelMatrix, KernelTable, PiecewiseKernel, pack


@dataclass(frozen=True)
class SystemState:
    """Positions (N, ambient), 1-based type labels and the time."""

    points: np.ndarray
    types: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        if self.points.shape[0] < 2:
            raise ValueError("need at least two agents")
        if self.types.shape != (self.points.shape[0],):
            raise ValueError("one type label per agent")


class ModelSpec:
    """Manifold + kernel matrix + type layout of an N-agent system."""

    def __init__(self, manifold: ManifoldDescriptor, kernels, type_counts=None):
        if isinstance(kernels, PiecewiseKernel):
            kernels = KernelMatrix.single(kernels)
        self.manifold = manifold
        self.kernels = kernels
        if type_counts is None:
            type_counts = (0,) * kernels.K
        self.type_counts = tuple(int(c) for c in type_counts)
        if len(self.type_counts) != kernels.K:
            raise ValueError("type_counts length must match the kernel matrix")
        self.table: KernelTable = pack(kernels)

    @property
    def K(self) -> int:
        return self.kernels.K

    @property
    def N(self) -> int:
        return sum(self.type_counts)

    def types(self, N: int | None = None) -> np.ndarray:
        """1-based labels laid out type by type; N overrides the count of type 1."""
        counts = list(self.type_counts)
        if N is not None:
            counts[0] = N - sum(counts[1:])
        if counts[0] < 0:
            raise ValueError("N smaller than the fixed type counts")
        return np.repeat(np.arange(1, self.K + 1), counts)

    def with_kernels(self, kernels) -> "ModelSpec":
        return ModelSpec(self.manifold, kernels, self.type_counts)

    def core_args(self):
        m = self.manifold
        return m.code, m.radius, m.distance_factor


def homogeneous(manifold: ManifoldDescriptor, kernel: PiecewiseKernel, N: int) -> ModelSpec:
    return ModelSpec(manifold, KernelMatrix.single(kernel), (N,))


def _types0(model: ModelSpec, types) -> np.ndarray:
    t = np.asarray(types, dtype=np.int64) - 1
    if t.size and (t.min() < 0 or t.max() >= model.K):
        raise ValueError("type label outside 1..K")
    return t


def rhs_array(model: ModelSpec, X: np.ndarray, types) -> np.ndarray:
    kind, radius, factor = model.core_args()
    return _backend.core.field(X, kind, radius, factor, _types0(model, types), model.table)


def rhs(model: ModelSpec, state: SystemState) -> np.ndarray:
    """Velocity of every agent, (N, ambient), each row tangent at its agent."""
    return rhs_array(model, state.points, state.types)


def pairwise(m: ManifoldDescriptor, X: np.ndarray):
    """(D, W): pairwise distances and weight vectors of a configuration."""
    return _backend.core.pair_geometry(X, m.code, m.radius, m.distance_factor)


def energy(model: ModelSpec, state: SystemState) -> float:
    """E = (1/N) sum_{i, i'} U(d_ii'^2), U(d^2) = 1/2 int_0^d phi(r) r dr.

    With this U the model is exactly the gradient flow of E.
    """
    if model.K != 1:
        raise ValueError("energy is defined for homogeneous systems only")
    D, _ = pairwise(model.manifold, state.points)
    N = D.shape[0]
    iu = np.triu_indices(N, 1)
    G = model.kernels[0, 0].weighted_antiderivative(D[iu])
    return float(2.0 * np.sum(G) / N)
