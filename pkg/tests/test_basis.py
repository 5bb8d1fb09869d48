import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.interpolate import BSpline

from geokernel import basis as B
from geokernel.integrate import TrajectoryDataset
from geokernel import geometry as G


def test_hat_value():
    b = B.build(0.0, 1.0, 2, 1)
    assert B.eval_basis(b, 0, 0.25) == pytest.approx(0.75)
    assert B.eval_basis(b, 1, 0.25) == pytest.approx(0.25)


@pytest.mark.parametrize("p,n", [(0, 5), (1, 7), (2, 9), (3, 12)])
def test_matches_scipy_bspline(p, n):
    b = B.build(0.3, 2.7, n, p)
    r = np.linspace(0.3, 2.7, 401)[:-1]
    ours = B.design_matrix(b, r)
    for eta in range(n):
        c = np.zeros(n)
        c[eta] = 1
        ref = BSpline(b.knots, c, p, extrapolate=False)(r)
        assert ours[:, eta] == pytest.approx(np.nan_to_num(ref), abs=1e-12)


@pytest.mark.parametrize("p", [0, 1, 2])
def test_partition_of_unity_and_local_support(p):
    b = B.build(0.0, 3.0, 17, p)
    r = np.linspace(0, 3, 1000)
    Phi = B.design_matrix(b, r)
    assert Phi.sum(axis=1) == pytest.approx(np.ones(r.size), abs=1e-12)
    assert np.max(np.count_nonzero(Phi, axis=1)) <= p + 1
    out = B.design_matrix(b, [-0.1, 3.1])
    assert not np.any(out)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=6, max_size=6))
def test_linear_reproduction(vals):
    b = B.build(1.0, 2.0, 6, 1)
    e = B.Estimator(b, np.array(vals))
    bp = b.breakpoints
    assert e(bp) == pytest.approx(vals, abs=1e-12)
    mid = 0.5 * (bp[:-1] + bp[1:])
    assert e(mid) == pytest.approx(0.5 * (np.array(vals[:-1]) + np.array(vals[1:])), abs=1e-12)


def test_build_validation():
    with pytest.raises(ValueError):
        B.build(1.0, 1.0, 3)
    with pytest.raises(ValueError):
        B.build(0.0, 1.0, 1, 1)


def test_n_star():
    assert B.n_star(500, 500, 20, 2) == 122
    assert B.n_star(3, 1, 1, 1) >= 1
    with pytest.raises(ValueError):
        B.n_star(1, 2, 5, 2)


def test_estimator_kernel_exact():
    b = B.build(0.5, 3.0, 9, 1)
    rng = np.random.default_rng(0)
    e = B.Estimator(b, rng.normal(size=9))
    r = np.linspace(0, 4, 999)
    assert e.to_kernel()(r) == pytest.approx(e(r), abs=1e-12)
    # both forms include the right end of the basis range
    assert e.to_kernel()(3.0) == pytest.approx(e(3.0), abs=1e-12)
    assert e(3.0) == pytest.approx(e.coeffs[-1])
    assert B.Estimator.from_dict(e.to_dict()).coeffs.tolist() == e.coeffs.tolist()


def test_smooth_constant_and_mass():
    b = B.build(1.0, 3.0, 11, 1)
    c = B.smooth(B.Estimator(b, np.full(11, 2.5)))
    r = np.linspace(1.2, 2.8, 50)
    assert c(r) == pytest.approx(np.full(r.size, 2.5), abs=1e-12)
    hat = np.zeros(11)
    hat[5] = 1.0
    e = B.Estimator(b, hat)
    s = B.smooth(e)
    from scipy.integrate import quad
    k0, k1 = e.to_kernel(), s.to_kernel()
    m0 = quad(k0, 0, 4, points=list(b.breakpoints), limit=200)[0]
    m1 = quad(k1, 0, 4, points=[x.lo for x in k1.segments[1:]], limit=400)[0]
    assert m1 == pytest.approx(m0, abs=1e-10)
    assert s(b.breakpoints[5]) < 1.0
    # C1: finite derivative everywhere
    rr = np.linspace(0, 4, 4001)
    assert np.all(np.isfinite(k1.eval_deriv(rr)))
    with pytest.raises(ValueError):
        B.smooth(s)


def test_observed_range():
    m = G.euclidean()
    X = np.array([[[0.0, 0.0], [1.0, 0.0]]] * 3)[None]
    ds = TrajectoryDataset(m, X, np.zeros_like(X), np.array([1, 1]), 1.0)
    assert B.observed_range(ds) == (1.0, 1.0)
    X2 = np.array([[[0.0, 0.0], [1.0, 0.0], [0.0, 3.0]]])[None]
    ds2 = TrajectoryDataset(m, X2, np.zeros_like(X2), np.array([1, 1, 2]), 1.0)
    assert B.observed_range(ds2, (1, 2)) == pytest.approx((np.sqrt(10) - 0 if False else 3.0, np.sqrt(10)))
    assert B.observed_range(ds2, (2, 2)) is None


def test_layout_blocks():
    lay = B.layout([B.build(0, 1, 4), None, B.build(0, 2, 3, 0)])
    assert lay.total == 7
    assert lay.size.tolist() == [4, 0, 3]
    assert lay.offset.tolist() == [0, 4, 4]
