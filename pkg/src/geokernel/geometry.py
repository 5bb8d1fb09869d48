"""Points, tangents and distances on R^d, the sphere S^2(r) and the Poincare disk.

Points are plain numpy arrays in ambient coordinates: R^3 for the sphere,
the unit-disk chart for the Poincare disk. A tangent vector at ``x`` is an
array of the same shape, interpreted at ``x``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

EUCLIDEAN = "euclidean"
SPHERE = "sphere"
POINCARE = "poincare"

PAPER_FORMULA = "paper"
FACTOR2 = "factor2"

KIND_CODES = {EUCLIDEAN: 0, SPHERE: 1, POINCARE: 2}

CUT_LOCUS_BAND = 1e-6
COINCIDENT_TOL = 1e-14
COLLINEAR_TOL = 1e-12
DISK_GUARD = 1e-12
# below this |y|^2 the inversion overflows; y is treated as the origin
ORIGIN_TOL = 1e-100


@dataclass(frozen=True)
class ManifoldDescriptor:
    kind: str
    dim: int = 2
    radius: float = 1.0
    convention: str = PAPER_FORMULA
    R_M: float = math.inf

    def __post_init__(self):
        if self.kind not in KIND_CODES:
            raise ValueError(f"unknown manifold kind {self.kind!r}")
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if self.kind in (SPHERE, POINCARE) and self.dim != 2:
            raise ValueError(f"{self.kind} is only implemented for dim = 2")
        if self.kind == SPHERE and not self.radius > 0:
            raise ValueError("sphere radius must be positive")
        if self.convention not in (PAPER_FORMULA, FACTOR2):
            raise ValueError(f"unknown distance convention {self.convention!r}")
        if not self.R_M > 0:
            raise ValueError("R_M must be positive")

    @property
    def ambient_dim(self) -> int:
        return 3 if self.kind == SPHERE else self.dim

    @property
    def code(self) -> int:
        return KIND_CODES[self.kind]

    @property
    def distance_factor(self) -> float:
        """Multiplier on the Poincare acosh fraction (1 or 2)."""
        return 2.0 if self.convention == FACTOR2 else 1.0

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "dim": self.dim,
            "radius": self.radius,
            "convention": self.convention,
            "R_M": None if math.isinf(self.R_M) else self.R_M,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ManifoldDescriptor":
        R_M = d.get("R_M")
        return cls(
            kind=d["kind"],
            dim=int(d.get("dim", 2)),
            radius=float(d.get("radius", 1.0)),
            convention=d.get("convention", PAPER_FORMULA),
            R_M=math.inf if R_M is None else float(R_M),
        )


def euclidean(dim: int = 2, R_M: float = math.inf) -> ManifoldDescriptor:
    return ManifoldDescriptor(EUCLIDEAN, dim=dim, R_M=R_M)


def sphere(radius: float = 5 / math.pi, R_M: float = 5.0) -> ManifoldDescriptor:
    return ManifoldDescriptor(SPHERE, dim=2, radius=radius, R_M=R_M)


def poincare(convention: str = PAPER_FORMULA, R_M: float = math.inf) -> ManifoldDescriptor:
    return ManifoldDescriptor(POINCARE, dim=2, convention=convention, R_M=R_M)


def _acosh1p(z: float) -> float:
    # acosh(1 + z) without the cancellation of acosh near 1
    return math.log1p(z + math.sqrt(z * (z + 2.0)))


def _sphere_angle(x: np.ndarray, y: np.ndarray) -> float:
    return math.atan2(float(np.linalg.norm(np.cross(x, y))), float(np.dot(x, y)))


def distance(m: ManifoldDescriptor, x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if m.kind == SPHERE:
        return m.radius * _sphere_angle(x, y)
    if m.kind == POINCARE:
        num = m.distance_factor * float(np.sum((x - y) ** 2))
        den = (1.0 - float(x @ x)) * (1.0 - float(y @ y))
        return _acosh1p(num / den)
    return float(np.linalg.norm(y - x))


def distances(m: ManifoldDescriptor, X, Y) -> np.ndarray:
    """Row-wise d(X[..., i, :], Y[..., i, :])."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if m.kind == SPHERE:
        cr = np.linalg.norm(np.cross(X, Y), axis=-1)
        return m.radius * np.arctan2(cr, np.sum(X * Y, axis=-1))
    if m.kind == POINCARE:
        num = m.distance_factor * np.sum((X - Y) ** 2, axis=-1)
        den = (1.0 - np.sum(X * X, axis=-1)) * (1.0 - np.sum(Y * Y, axis=-1))
        z = num / den
        return np.log1p(z + np.sqrt(z * (z + 2.0)))
    return np.linalg.norm(Y - X, axis=-1)


def metric_factor(m: ManifoldDescriptor, x) -> float:
    """Conformal factor lambda(x) with <u, z>_g = lambda(x) <u, z>."""
    if m.kind == POINCARE:
        x = np.asarray(x, dtype=float)
        return 4.0 / (1.0 - float(x @ x)) ** 2
    return 1.0


def inner(m: ManifoldDescriptor, x, u, z) -> float:
    return metric_factor(m, x) * float(np.dot(u, z))


def norm(m: ManifoldDescriptor, x, u) -> float:
    return math.sqrt(inner(m, x, u, u))


def _poincare_direction(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Euclidean vector at x along the geodesic toward y (not normalized).

    Straight chord when x, y and the origin are collinear; otherwise the
    chord with its component along (o' - x) removed, o' being the center of
    the circle through x, y and the inversion y' = y / |y|^2.
    """
    a = y - x
    yy = float(y @ y)
    if yy <= ORIGIN_TOL:
        return a
    b = y / yy - x
    det = a[0] * b[1] - a[1] * b[0]
    if abs(det) <= COLLINEAR_TOL * np.linalg.norm(a) * np.linalg.norm(b):
        return a
    # circumcenter offset o' - x, up to the scalar 1/(2 det) which drops out
    aa = float(a @ a)
    bb = float(b @ b)
    n = np.array([b[1] * aa - a[1] * bb, a[0] * bb - b[0] * aa])
    return a - (float(a @ n) / float(n @ n)) * n


def unit_tangent(m: ManifoldDescriptor, x, y) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    scale = max(1.0, float(np.linalg.norm(x)))
    zero = np.zeros_like(x)
    if np.linalg.norm(y - x) <= COINCIDENT_TOL * scale:
        return zero
    if m.kind == SPHERE:
        if _sphere_angle(x, y) > math.pi - CUT_LOCUS_BAND:
            return zero
        u = y - (float(x @ y) / float(x @ x)) * x
    elif m.kind == POINCARE:
        u = _poincare_direction(x, y)
    else:
        u = y - x
    nu = norm(m, x, u)
    if nu == 0.0:
        return zero
    return u / nu


def log_weight(m: ManifoldDescriptor, x, y) -> np.ndarray:
    """w(x, y) = d(x, y) v(x, y)."""
    return distance(m, x, y) * unit_tangent(m, x, y)


def retract(m: ManifoldDescriptor, x, step) -> np.ndarray:
    z = np.asarray(x, dtype=float) + np.asarray(step, dtype=float)
    if m.kind == SPHERE:
        nz = float(np.linalg.norm(z))
        if nz < 1e-12:
            raise ValueError("radial projection undefined at the origin")
        return m.radius * z / nz
    if m.kind == POINCARE:
        nz = float(np.linalg.norm(z))
        if nz > 1.0 - DISK_GUARD:
            z = z * ((1.0 - DISK_GUARD) / nz)
    return z


def project_points(m: ManifoldDescriptor, X: np.ndarray) -> np.ndarray:
    """Row-wise ``retract(m, x, 0)`` for an (N, ambient) array."""
    X = np.array(X, dtype=float)
    nrm = np.linalg.norm(X, axis=-1, keepdims=True)
    if m.kind == SPHERE:
        if np.any(nrm < 1e-12):
            raise ValueError("radial projection undefined at the origin")
        return m.radius * X / nrm
    if m.kind == POINCARE:
        lim = 1.0 - DISK_GUARD
        return np.where(nrm > lim, X * (lim / np.maximum(nrm, lim)), X)
    return X


def on_manifold(m: ManifoldDescriptor, X, tol: float = 1e-10) -> bool:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    nrm = np.linalg.norm(X, axis=-1)
    if m.kind == SPHERE:
        return bool(np.all(np.abs(nrm - m.radius) <= tol))
    if m.kind == POINCARE:
        return bool(np.all(nrm < 1.0))
    return bool(np.all(np.isfinite(X)))


# --- initial conditions ----------------------------------------------------

def hyperbolic_ball_radius(D: float) -> float:
    """Euclidean radius r0 of the disk-centered ball used for diameter-D initial data."""
    a = 1.0 / (math.cosh(D) - 1.0)
    return (2.0 + a - math.sqrt(4.0 * a + a * a)) / 2.0


@dataclass(frozen=True)
class ICSpec:
    """Initial-condition distribution for N agents.

    ``name`` is one of UniformSphere, HyperbolicBall, UniformEuclideanBall,
    PS1-S2, PS1-PD. ``params`` holds e.g. ``{"D": 5.0}`` or ``{"radius": 1.0}``.
    For the PS1 layouts the last agent is the predator.
    """

    name: str
    N: int
    params: dict = field(default_factory=dict)


IC_NAMES = ("UniformSphere", "HyperbolicBall", "UniformEuclideanBall", "PS1-S2", "PS1-PD")


def _uniform_disk(rng, n, r_in, r_out):
    rad = np.sqrt(rng.uniform(r_in**2, r_out**2, size=n))
    ang = rng.uniform(0.0, 2.0 * math.pi, size=n)
    return np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])


def _uniform_ball(rng, n, dim, radius):
    g = rng.standard_normal((n, dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g * (radius * rng.uniform(0.0, 1.0, size=(n, 1)) ** (1.0 / dim))


def inverse_stereographic(P: np.ndarray, radius: float) -> np.ndarray:
    """Lift plane points onto S^2(radius); the plane origin goes to the south pole."""
    rho2 = np.sum(P**2, axis=1, keepdims=True)
    r2 = radius * radius
    xy = 2.0 * r2 * P / (rho2 + r2)
    z = radius * (rho2 - r2) / (rho2 + r2)
    return np.hstack([xy, z])


def random_rotation(rng) -> np.ndarray:
    """Haar-distributed element of SO(3)."""
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def sample_initial(m: ManifoldDescriptor, spec: ICSpec, rng) -> np.ndarray:
    """Draw an (N, ambient) array of agent positions from ``spec``."""
    N = spec.N
    p = spec.params
    if spec.name == "UniformSphere":
        if m.kind != SPHERE:
            raise ValueError("UniformSphere requires a sphere")
        g = rng.standard_normal((N, 3))
        X = m.radius * g / np.linalg.norm(g, axis=1, keepdims=True)
    elif spec.name == "HyperbolicBall":
        if m.kind != POINCARE:
            raise ValueError("HyperbolicBall requires the Poincare disk")
        X = _uniform_disk(rng, N, 0.0, hyperbolic_ball_radius(float(p.get("D", 5.0))))
    elif spec.name == "UniformEuclideanBall":
        if m.kind == SPHERE:
            raise ValueError("UniformEuclideanBall needs a flat chart")
        X = _uniform_ball(rng, N, m.dim, float(p.get("radius", 1.0)))
        if m.kind == POINCARE and np.any(np.linalg.norm(X, axis=1) >= 1.0):
            raise ValueError("ball radius leaves the Poincare disk")
    elif spec.name == "PS1-S2":
        if m.kind != SPHERE:
            raise ValueError("PS1-S2 requires a sphere")
        prey = _uniform_disk(rng, N - 1, float(p.get("prey_inner", 0.3)), float(p.get("prey_outer", 0.8)))
        pred = _uniform_disk(rng, 1, 0.0, float(p.get("predator_radius", 0.1)))
        X = inverse_stereographic(np.vstack([prey, pred]), m.radius)
        X = X @ random_rotation(rng).T
        X = m.radius * X / np.linalg.norm(X, axis=1, keepdims=True)
    elif spec.name == "PS1-PD":
        if m.kind != POINCARE:
            raise ValueError("PS1-PD requires the Poincare disk")
        r_pred = hyperbolic_ball_radius(float(p.get("predator_D", 0.5)))
        r_in = hyperbolic_ball_radius(float(p.get("prey_inner_D", 1.0)))
        r_out = hyperbolic_ball_radius(float(p.get("prey_outer_D", 2.0)))
        prey = _uniform_disk(rng, N - 1, r_in, r_out)
        pred = _uniform_disk(rng, 1, 0.0, r_pred)
        X = np.vstack([prey, pred])
    else:
        raise ValueError(f"unknown initial-condition spec {spec.name!r}")
    return np.ascontiguousarray(X, dtype=float)
