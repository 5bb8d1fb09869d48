"""Fixed-step geometric integration, observation and dataset generation."""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .dynamics import ModelSpec, SystemState, _types0, rhs_array
from .geometry import ICSpec, ManifoldDescriptor, sample_initial

SCHEMES = ("RK4P", "BDF4P")

# BDF4: 25 y_{n+1} - 48 y_n + 36 y_{n-1} - 16 y_{n-2} + 3 y_{n-3} = 12 h f(y_{n+1})
_BDF4_HIST = (48.0, -36.0, 16.0, -3.0)
_BDF4_F = 12.0
_BDF4_DEN = 25.0


class SimulationError(RuntimeError):
    def __init__(self, message, time=None, trajectory=None):
        super().__init__(message)
        self.time = time
        self.trajectory = trajectory


@dataclass(frozen=True)
class IntegratorConfig:
    h: float
    scheme: str = "RK4P"
    startup_steps: int = 3
    fp_tol: float = 1e-12
    fp_maxiter: int = 50

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("step size h must be positive")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.scheme == "BDF4P" and self.startup_steps < 3:
            raise ValueError("BDF4P needs at least 3 startup steps")


def n_steps(T: float, h: float) -> int:
    if not T > 0:
        raise ValueError("T must be positive")
    if h > T:
        raise ValueError(f"step size h={h} exceeds T={T}")
    q = T / h
    n = round(q)
    if abs(q - n) > 1e-9 * max(1.0, q):
        raise ValueError(f"T/h = {q} is not an integer")
    return int(n)


@dataclass
class Trajectory:
    times: np.ndarray
    X: np.ndarray       # (nodes, N, ambient)
    V: np.ndarray       # rhs at each node
    types: np.ndarray   # 1-based
    h: float

    def state(self, j: int) -> SystemState:
        return SystemState(self.X[j], self.types, float(self.times[j]))


@dataclass
class ObservationSet:
    times: np.ndarray
    X: np.ndarray       # (L, N, ambient)
    V: np.ndarray
    types: np.ndarray
    m: int = 0


def _project(model: ModelSpec, X):
    m = model.manifold
    return _backend.core.project(X, m.code, m.radius)


def _rk4_step(model, X, types0, h):
    kind, radius, factor = model.core_args()
    f = lambda Y: _backend.core.field(Y, kind, radius, factor, types0, model.table)  # noqa: E731
    k1 = f(X)
    k2 = f(X + 0.5 * h * k1)
    k3 = f(X + 0.5 * h * k2)
    k4 = f(X + h * k3)
    return X + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _bdf4_step(model, hist, types0, cfg: IntegratorConfig):
    """One BDF4 step from the 4 most recent nodes (newest last), fixed-point solve."""
    kind, radius, factor = model.core_args()
    h = cfg.h
    base = sum(c * y for c, y in zip(_BDF4_HIST, reversed(hist))) / _BDF4_DEN
    Y = _rk4_step(model, hist[-1], types0, h)
    for _ in range(cfg.fp_maxiter):
        F = _backend.core.field(Y, kind, radius, factor, types0, model.table)
        Y_new = base + (_BDF4_F * h / _BDF4_DEN) * F
        delta = float(np.max(np.abs(Y_new - Y)))
        Y = Y_new
        if delta <= cfg.fp_tol * max(1.0, float(np.max(np.abs(Y)))):
            break
    else:
        raise SimulationError("BDF4 fixed-point iteration did not converge")
    return Y


def step(model: ModelSpec, state: SystemState, cfg: IntegratorConfig, history=None) -> SystemState:
    """Advance one step and project back onto the manifold.

    RK4P is single-step. BDF4P needs ``history``: the 3 nodes preceding
    ``state`` (oldest first); without it an RK4P step is taken.
    """
    types0 = _types0(model, state.types)
    if cfg.scheme == "BDF4P" and history is not None and len(history) >= 3:
        hist = [np.asarray(x, dtype=float) for x in history[-3:]] + [state.points]
        Y = _bdf4_step(model, hist, types0, cfg)
    else:
        Y = _rk4_step(model, state.points, types0, cfg.h)
    try:
        Y = _project(model, Y)
    except FloatingPointError as exc:
        raise SimulationError(str(exc), time=state.time + cfg.h) from exc
    return SystemState(Y, state.types, state.time + cfg.h)


def simulate(model: ModelSpec, x0: SystemState, T: float, cfg: IntegratorConfig) -> Trajectory:
    nsteps = n_steps(T, cfg.h)
    types0 = _types0(model, x0.types)
    kind, radius, factor = model.core_args()
    X0 = _project(model, x0.points)
    if cfg.scheme == "RK4P":
        try:
            Xs, Vs = _backend.core.integrate_rk4(X0, kind, radius, factor, types0,
                                                 model.table, cfg.h, nsteps)
        except FloatingPointError as exc:
            raise SimulationError(f"{exc} (h={cfg.h})") from exc
    else:
        Xs = np.empty((nsteps + 1,) + X0.shape)
        Xs[0] = X0
        state = SystemState(X0, x0.types, 0.0)
        for n in range(nsteps):
            hist = list(Xs[n - 3:n]) if n >= cfg.startup_steps else None
            state = step(model, state, cfg, hist)
            if not np.all(np.isfinite(state.points)):
                raise SimulationError("non-finite state", time=state.time)
            Xs[n + 1] = state.points
        Vs = np.stack([rhs_array(model, X, x0.types) for X in Xs])
    times = np.arange(nsteps + 1) * cfg.h
    return Trajectory(times, Xs, Vs, np.asarray(x0.types), cfg.h)


def observation_times(L: int, T: float) -> np.ndarray:
    return np.linspace(0.0, T, L)


def observe(traj: Trajectory, L: int, T: float, model: ModelSpec, m: int = 0) -> ObservationSet:
    """States and velocities at L equispaced times in [0, T].

    Off-grid times use cubic Hermite interpolation of the bracketing nodes,
    then projection; the velocity is re-evaluated at the interpolated state.
    """
    if L < 2:
        raise ValueError("need L >= 2")
    h = traj.h
    t_end = traj.times[-1]
    if T > t_end * (1 + 1e-12):
        raise ValueError(f"T={T} exceeds the trajectory end {t_end}")
    times = observation_times(L, T)
    X = np.empty((L,) + traj.X.shape[1:])
    V = np.empty_like(X)
    last = traj.X.shape[0] - 1
    for l, t in enumerate(times):
        q = t / h
        j = round(q)
        if abs(q - j) <= 1e-9 * max(1.0, q):
            j = min(j, last)
            X[l] = traj.X[j]
            V[l] = traj.V[j]
            continue
        j0 = min(int(math.floor(q)), last - 1)
        s = q - j0
        h00 = 2 * s**3 - 3 * s**2 + 1
        h10 = s**3 - 2 * s**2 + s
        h01 = -2 * s**3 + 3 * s**2
        h11 = s**3 - s**2
        P = (h00 * traj.X[j0] + h10 * h * traj.V[j0]
             + h01 * traj.X[j0 + 1] + h11 * h * traj.V[j0 + 1])
        X[l] = _project(model, P)
        V[l] = rhs_array(model, X[l], traj.types)
    return ObservationSet(times, X, V, traj.types, m)


@dataclass
class TrajectoryDataset:
    manifold: ManifoldDescriptor
    X: np.ndarray       # (M, L, N, ambient)
    V: np.ndarray
    types: np.ndarray   # (N,) 1-based
    T: float
    seed: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def M(self) -> int:
        return self.X.shape[0]

    @property
    def L(self) -> int:
        return self.X.shape[1]

    @property
    def N(self) -> int:
        return self.X.shape[2]

    @property
    def K(self) -> int:
        return int(self.types.max())

    @property
    def times(self) -> np.ndarray:
        return observation_times(self.L, self.T)

    def subset(self, idx) -> "TrajectoryDataset":
        idx = np.asarray(idx)
        return TrajectoryDataset(self.manifold, self.X[idx], self.V[idx], self.types,
                                 self.T, self.seed, dict(self.meta))

    def observation(self, m: int) -> ObservationSet:
        return ObservationSet(self.times, self.X[m], self.V[m], self.types, m)

    def initial_conditions(self) -> np.ndarray:
        return self.X[:, 0]


def validate_run(N: int, L: int, M: int, T: float, h: float) -> int:
    if N < 2:
        raise ValueError("need N >= 2")
    if L < 2:
        raise ValueError("need L >= 2")
    if M < 1:
        raise ValueError("need M >= 1")
    return n_steps(T, h)


def trajectory_rng(seed: int, m: int):
    return np.random.default_rng([int(seed), int(m)])


def default_threads() -> int:
    return os.cpu_count() or 1


def map_ordered(fn, items, threads: int | None = None):
    """Apply fn over items on a thread pool, results in input order."""
    items = list(items)
    threads = threads or default_threads()
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def generate_dataset(model: ModelSpec, ic_spec: ICSpec, M: int, L: int, T: float,
                     cfg: IntegratorConfig, seed: int, threads: int | None = None,
                     first: int = 0) -> TrajectoryDataset:
    """Simulate M trajectories from i.i.d. initial conditions and observe them.

    Trajectory m uses the generator seeded by (seed, first + m), so results do
    not depend on the thread count.
    """
    validate_run(ic_spec.N, L, M, T, cfg.h)
    types = model.types(ic_spec.N)

    def one(m):
        X0 = sample_initial(model.manifold, ic_spec, trajectory_rng(seed, first + m))
        try:
            traj = simulate(model, SystemState(X0, types), T, cfg)
        except SimulationError as exc:
            raise SimulationError(f"trajectory {first + m}: {exc}", exc.time, first + m) from exc
        return observe(traj, L, T, model, first + m)

    obs = map_ordered(one, range(M), threads)
    return TrajectoryDataset(
        model.manifold,
        np.stack([o.X for o in obs]),
        np.stack([o.V for o in obs]),
        types,
        T,
        seed,
        {"first": first, "ic": ic_spec.name, "h": cfg.h, "scheme": cfg.scheme},
    )
