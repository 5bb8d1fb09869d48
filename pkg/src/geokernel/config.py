"""INI experiment configuration.

Sections and keys (all optional unless noted):

    [manifold]    kind (required: sphere | poincare | euclidean), radius, dim,
                  convention (paper | factor2), R_M (number or inf)
    [dynamics]    name (required: od | lj | ps1), epsilon, sigma, N (required),
                  type_counts (comma list; ps1 defaults to N-1,1)
    [initial]     name (UniformSphere, HyperbolicBall, UniformEuclideanBall,
                  PS1-S2, PS1-PD) and its parameters (D, radius, ...)
    [integrator]  T (required), h (required), scheme (RK4P | BDF4P)
    [data]        L, M, M_rho
    [basis]       n (homogeneous) or n_11, n_12, ... ; degree or p_11, ...
    [run]         seed, threads
    [evaluate]    fresh_ics, transfer_N, bins, grid
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from importlib import resources

from . import geometry
from .dynamics import ModelSpec
from .geometry import ICSpec, ManifoldDescriptor
from .integrate import IntegratorConfig, validate_run
from .kernels import make_lj, make_od, make_ps1

DYNAMICS = ("od", "lj", "ps1")
# configparser lowercases keys; map them back to the sampler's names
IC_PARAMS = {k.lower(): k for k in (
    "D", "radius", "prey_inner", "prey_outer", "predator_radius",
    "predator_D", "prey_inner_D", "prey_outer_D")}


class ConfigError(ValueError):
    pass


def _num(s: str) -> float:
    s = s.strip().lower()
    if s in ("inf", "infinity", "none"):
        return math.inf
    return float(s)


@dataclass
class ExperimentConfig:
    manifold: ManifoldDescriptor
    dynamics: str
    N: int
    type_counts: tuple
    ic: ICSpec
    T: float
    h: float
    scheme: str = "RK4P"
    L: int = 100
    M: int = 100
    M_rho: int = 0
    epsilon: float = 10.0
    sigma: float = 1.0
    n: dict = field(default_factory=dict)       # (k, k2) -> n
    degree: dict = field(default_factory=dict)  # (k, k2) -> p
    seed: int = 0
    threads: int | None = None
    fresh_ics: int = 20
    transfer_N: int = 40
    bins: int = 200
    grid: int = 500

    @property
    def K(self) -> int:
        return len(self.type_counts)

    def kernels(self):
        R_M = self.manifold.R_M
        if self.dynamics == "od":
            return make_od()
        if self.dynamics == "lj":
            return make_lj(self.epsilon, self.sigma, R_M)
        return make_ps1(R_M)

    def model(self) -> ModelSpec:
        return ModelSpec(self.manifold, self.kernels(), self.type_counts)

    def ic_spec(self, N: int | None = None) -> ICSpec:
        return ICSpec(self.ic.name, self.N if N is None else N, dict(self.ic.params))

    def integrator(self) -> IntegratorConfig:
        return IntegratorConfig(self.h, self.scheme)


def parse(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    return from_parser(cp)


def load(path) -> ExperimentConfig:
    try:
        with open(path) as f:
            return parse(f.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def shipped(name: str) -> str:
    """Text of a config shipped with the package, e.g. ``od_s2``."""
    fn = name if name.endswith(".ini") else name + ".ini"
    return resources.files("geokernel").joinpath("configs", fn).read_text()


def shipped_names() -> list[str]:
    d = resources.files("geokernel").joinpath("configs")
    return sorted(p.name[:-4] for p in d.iterdir() if p.name.endswith(".ini"))


def _pairs(sec, prefix: str, shared: str, K: int, default):
    # per-pair key ``prefix_kk2`` wins over the shared key
    out = {}
    base = sec.get(shared) if sec is not None else None
    for k in range(1, K + 1):
        for k2 in range(1, K + 1):
            key = f"{prefix}_{k}{k2}"
            if sec is not None and key in sec:
                out[(k, k2)] = int(sec[key])
            elif base is not None:
                out[(k, k2)] = int(base)
            elif default is not None:
                out[(k, k2)] = default
    return out


def from_parser(cp: configparser.ConfigParser) -> ExperimentConfig:
    try:
        return _build(cp)
    except ConfigError:
        raise
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc


def _build(cp) -> ExperimentConfig:
    for s in ("manifold", "dynamics", "integrator"):
        if not cp.has_section(s):
            raise ConfigError(f"missing section [{s}]")
    ms = cp["manifold"]
    kind = ms.get("kind", "").strip().lower()
    R_M = _num(ms.get("R_M", "inf"))
    if kind == "sphere":
        man = geometry.sphere(float(ms.get("radius", repr(5 / math.pi))), R_M)
    elif kind == "poincare":
        man = geometry.poincare(ms.get("convention", "paper").strip().lower(), R_M)
    elif kind == "euclidean":
        man = geometry.euclidean(int(ms.get("dim", "2")), R_M)
    else:
        raise ConfigError(f"unknown manifold kind {kind!r}")

    ds = cp["dynamics"]
    name = ds.get("name", "").strip().lower()
    if name not in DYNAMICS:
        raise ConfigError(f"unknown dynamics {name!r}; expected one of {DYNAMICS}")
    N = int(ds["N"])
    if N < 2:
        raise ConfigError("need N >= 2")
    if "type_counts" in ds:
        counts = tuple(int(c) for c in ds["type_counts"].split(","))
    elif name == "ps1":
        counts = (N - 1, 1)
    else:
        counts = (N,)
    if sum(counts) != N or min(counts) < 1:
        raise ConfigError(f"type_counts {counts} do not add up to N={N}")
    if name == "ps1" and len(counts) != 2:
        raise ConfigError("ps1 needs two types")
    if name != "ps1" and len(counts) != 1:
        raise ConfigError(f"{name} is homogeneous")

    default_ic = {("sphere", "ps1"): "PS1-S2", ("poincare", "ps1"): "PS1-PD",
                  "sphere": "UniformSphere", "poincare": "HyperbolicBall",
                  "euclidean": "UniformEuclideanBall"}
    ics = cp["initial"] if cp.has_section("initial") else {}
    ic_name = ics.get("name") or default_ic.get((kind, name)) or default_ic[kind]
    if ic_name not in geometry.IC_NAMES:
        raise ConfigError(f"unknown initial condition {ic_name!r}")
    params = {}
    for k, v in ics.items():
        if k == "name":
            continue
        if k not in IC_PARAMS:
            raise ConfigError(f"unknown initial-condition parameter {k!r}")
        params[IC_PARAMS[k]] = _num(v)

    it = cp["integrator"]
    T = float(it["T"])
    h = float(it["h"])
    scheme = it.get("scheme", "RK4P").strip().upper()

    data = cp["data"] if cp.has_section("data") else {}
    L = int(data.get("L", "100"))
    M = int(data.get("M", "100"))
    M_rho = int(data.get("M_rho", "0"))

    K = len(counts)
    bs = cp["basis"] if cp.has_section("basis") else None
    n = _pairs(bs, "n", "n", K, None)
    degree = _pairs(bs, "p", "degree", K, 1)

    run = cp["run"] if cp.has_section("run") else {}
    ev = cp["evaluate"] if cp.has_section("evaluate") else {}
    threads = run.get("threads")
    cfg = ExperimentConfig(
        manifold=man, dynamics=name, N=N, type_counts=counts,
        ic=ICSpec(ic_name, N, params), T=T, h=h, scheme=scheme, L=L, M=M, M_rho=M_rho,
        epsilon=float(ds.get("epsilon", "10")), sigma=float(ds.get("sigma", "1")),
        n=n, degree=degree, seed=int(run.get("seed", "0")),
        threads=int(threads) if threads else None,
        fresh_ics=int(ev.get("fresh_ics", "20")), transfer_N=int(ev.get("transfer_N", "40")),
        bins=int(ev.get("bins", "200")), grid=int(ev.get("grid", "500")),
    )
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    try:
        cfg.integrator()
        validate_run(cfg.N, cfg.L, cfg.M, cfg.T, cfg.h)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if cfg.M_rho < 0:
        raise ConfigError("M_rho must be >= 0")
    if cfg.epsilon <= 0 or cfg.sigma <= 0:
        raise ConfigError("epsilon and sigma must be positive")
    for pair, v in cfg.n.items():
        if v < 0:
            raise ConfigError(f"basis size for {pair} must be >= 0")
    for pair, v in cfg.degree.items():
        if v < 0:
            raise ConfigError(f"degree for {pair} must be >= 0")
