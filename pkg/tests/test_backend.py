"""The compiled core and the numpy fallback agree."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from geokernel import _backend, _pycore
from geokernel import basis as B
from geokernel import geometry as G
from geokernel import kernels as K
from geokernel.geometry import ICSpec, sample_initial

pytestmark = pytest.mark.skipif("compiled" not in _backend.backends(),
                                reason="compiled core not built")

CASES = [
    (G.sphere(), ICSpec("UniformSphere", 9, {})),
    (G.poincare(), ICSpec("HyperbolicBall", 9, {"D": 5.0})),
    (G.poincare("factor2"), ICSpec("HyperbolicBall", 9, {"D": 5.0})),
    (G.euclidean(3), ICSpec("UniformEuclideanBall", 9, {"radius": 2.0})),
]


def _compiled():
    return _backend.backends()["compiled"]


def _args(m):
    return m.code, m.radius, m.distance_factor


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from(range(len(CASES))))
def test_field_and_geometry_parity(seed, case):
    m, ic = CASES[case]
    X = sample_initial(m, ic, np.random.default_rng(seed))
    X[1] = X[0]                       # a coincident pair
    cc = _compiled()
    D0, W0 = _pycore.pair_geometry(X, *_args(m))
    D1, W1 = cc.pair_geometry(X, *_args(m))
    assert D1 == pytest.approx(D0, rel=1e-12, abs=1e-12)
    assert W1 == pytest.approx(W0, rel=1e-10, abs=1e-12)
    types0 = np.array([0] * 7 + [1] * 2)
    table = K.pack(K.make_ps1(m.R_M))
    F0 = _pycore.field(X, *_args(m), types0, table)
    F1 = cc.field(X, *_args(m), types0, table)
    assert F1 == pytest.approx(F0, rel=1e-10, abs=1e-10)
    assert cc.metric_factors(X, m.code) == pytest.approx(_pycore.metric_factors(X, m.code))


def test_poincare_origin_and_tiny_points():
    m = G.poincare()
    X = np.array([[0.0, 0.0], [1e-160, 0.0], [0.3, 0.4], [-1e-9, 2e-9]])
    for core in (_pycore, _compiled()):
        D, W = core.pair_geometry(X, *_args(m))
        assert np.all(np.isfinite(W)) and np.all(np.isfinite(D))
    assert _compiled().pair_geometry(X, *_args(m))[1] == pytest.approx(
        _pycore.pair_geometry(X, *_args(m))[1], rel=1e-10, abs=1e-14)


@pytest.mark.parametrize("case", range(len(CASES)))
def test_integrate_parity(case):
    m, ic = CASES[case]
    X = sample_initial(m, ic, np.random.default_rng(case))
    types0 = np.zeros(9, dtype=np.int64)
    table = K.pack(K.KernelMatrix.single(K.make_od()))
    a = _pycore.integrate_rk4(X, *_args(m), types0, table, 0.01, 30)
    b = _compiled().integrate_rk4(X, *_args(m), types0, table, 0.01, 30)
    for u, v in zip(a, b):
        assert v == pytest.approx(u, rel=1e-10, abs=1e-11)
    P = X * 1.001
    assert _compiled().project(P, m.code, m.radius) == pytest.approx(
        _pycore.project(P, m.code, m.radius), abs=1e-14)


@pytest.mark.parametrize("case", range(len(CASES)))
def test_regression_vectors_parity(case):
    m, ic = CASES[case]
    rng = np.random.default_rng(7)
    Xs = np.stack([sample_initial(m, ic, rng) for _ in range(3)])
    types0 = np.array([0] * 8 + [1])
    lay = B.layout([B.build(0.2, 4.0, 6, 1), B.build(0.1, 5.0, 4, 2)])
    for observer in (0, 1):
        P0, n0 = _pycore.regression_vectors(Xs, *_args(m), types0, observer, lay)
        P1, n1 = _compiled().regression_vectors(Xs, *_args(m), types0, observer, lay)
        assert n0 == n1
        assert P1 == pytest.approx(P0, rel=1e-10, abs=1e-13)
