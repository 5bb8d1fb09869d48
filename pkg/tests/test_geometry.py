import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from geokernel import geometry as G

R = 5 / math.pi
S2 = G.sphere()
PD = G.poincare()
PD2 = G.poincare(G.FACTOR2)
E2 = G.euclidean()


def test_sphere_distances():
    x = np.array([R, 0, 0])
    assert G.distance(S2, x, -x) == pytest.approx(5.0, abs=1e-12)
    assert G.distance(S2, x, np.array([0, R, 0])) == pytest.approx(2.5, abs=1e-12)


def test_poincare_distance_high_precision():
    ref = float(mpmath.acosh(mpmath.mpf(4) / 3))
    assert G.distance(PD, [0, 0], [0.5, 0]) == pytest.approx(ref, abs=1e-15)


def test_unit_tangent_examples():
    x = np.array([R, 0, 0])
    assert np.allclose(G.unit_tangent(S2, x, [0, R, 0]), [0, 1, 0], atol=1e-15)
    assert np.allclose(G.unit_tangent(PD, [0, 0], [0.5, 0]), [0.5, 0], atol=1e-15)
    for m, p in [(S2, x), (PD, np.array([0.3, 0.1])), (E2, np.array([1.0, 2.0]))]:
        assert not np.any(G.unit_tangent(m, p, p))


def test_log_weight_examples():
    x = np.array([R, 0, 0])
    assert not np.any(G.log_weight(S2, x, -x))
    w = G.log_weight(PD, [0, 0], [0.5, 0])
    assert w == pytest.approx([0.397682730611953, 0], abs=1e-12)
    assert G.norm(PD, [0, 0], w) == pytest.approx(math.acosh(4 / 3), abs=1e-12)


def test_inner_examples():
    assert G.inner(PD, [0, 0], [1, 0], [1, 0]) == 4.0
    assert G.inner(S2, [R, 0, 0], [0, 1, 0], [0, 0, 1]) == 0.0
    assert G.inner(PD, [0.5, 0], [1, 0], [1, 0]) == pytest.approx(4 / 0.75**2)


def test_retract_examples():
    s1 = G.sphere(1.0)
    assert np.allclose(G.retract(s1, [1, 0, 0], [0, 1, 0]), [2**-0.5, 2**-0.5, 0])
    assert np.array_equal(G.retract(S2, [R, 0, 0], [0, 0, 0]), [R, 0, 0])
    z = G.retract(PD, [0.9, 0], [0.2, 0])
    assert z[0] == pytest.approx(1 - 1e-12, abs=1e-16) and z[1] == 0
    with pytest.raises(ValueError):
        G.retract(s1, [1, 0, 0], [-1, 0, 0])


def test_hyperbolic_ball_radius():
    assert G.hyperbolic_ball_radius(5.0) == pytest.approx(0.8897570877373, abs=1e-12)


def test_ps1_pd_layout(rng):
    spec = G.ICSpec("PS1-PD", 11)
    lo, hi = G.hyperbolic_ball_radius(1.0), G.hyperbolic_ball_radius(2.0)
    pr = G.hyperbolic_ball_radius(0.5)
    for _ in range(20):
        X = G.sample_initial(PD, spec, rng)
        r = np.linalg.norm(X, axis=1)
        assert np.all((r[:-1] >= lo - 1e-15) & (r[:-1] <= hi + 1e-15))
        assert r[-1] <= pr + 1e-15


def test_samplers_deterministic_and_on_manifold():
    for m, spec in [(S2, G.ICSpec("UniformSphere", 7)), (PD, G.ICSpec("HyperbolicBall", 7, {"D": 5.0})),
                    (S2, G.ICSpec("PS1-S2", 7)), (E2, G.ICSpec("UniformEuclideanBall", 7))]:
        a = G.sample_initial(m, spec, np.random.default_rng([3, 1]))
        b = G.sample_initial(m, spec, np.random.default_rng([3, 1]))
        assert np.array_equal(a, b)
        assert G.on_manifold(m, a, 1e-12)
    with pytest.raises(ValueError):
        G.sample_initial(S2, G.ICSpec("Nope", 3), np.random.default_rng(0))


def test_ps1_s2_preserves_planar_layout(rng):
    X = G.sample_initial(S2, G.ICSpec("PS1-S2", 9), rng)
    # predator lifted from within 0.1 of the plane origin sits near the rotated south pole
    assert np.all(np.abs(np.linalg.norm(X, axis=1) - R) < 1e-12)


def _moebius_log_direction(x, y):
    # direction of log_x(y) on the disk via Moebius translation of x to 0
    xc = complex(*x)
    yc = complex(*y)
    z = (yc - xc) / (1 - xc.conjugate() * yc)
    # pushforward of the translation at 0 back to x multiplies by (1 - |x|^2)
    v = z * (1 - abs(xc) ** 2)
    return np.array([v.real, v.imag]) / abs(v)


@settings(max_examples=300, deadline=None)
@given(st.floats(0, 0.95), st.floats(0, 2 * math.pi), st.floats(0, 0.95), st.floats(0, 2 * math.pi))
def test_poincare_direction_matches_moebius_oracle(r1, a1, r2, a2):
    x = np.array([r1 * math.cos(a1), r1 * math.sin(a1)])
    y = np.array([r2 * math.cos(a2), r2 * math.sin(a2)])
    if np.linalg.norm(x - y) < 1e-6:
        return
    u = G.unit_tangent(PD, x, y)
    assert G.norm(PD, x, u) == pytest.approx(1.0, abs=1e-10)
    assert u / np.linalg.norm(u) == pytest.approx(_moebius_log_direction(x, y), abs=1e-7)


def _point(m, seed):
    rng = np.random.default_rng(seed)
    if m.kind == "sphere":
        g = rng.standard_normal(3)
        return m.radius * g / np.linalg.norm(g)
    if m.kind == "poincare":
        return G._uniform_disk(rng, 1, 0.0, 0.97)[0]
    return rng.uniform(-3, 3, 2)


@settings(max_examples=200, deadline=None)
@given(st.sampled_from([S2, PD, PD2, E2]), st.integers(0, 2**32 - 1), st.integers(0, 2**32 - 1),
       st.integers(0, 2**32 - 1))
def test_metric_properties(m, s1, s2, s3):
    x, y, z = _point(m, s1), _point(m, s2), _point(m, s3)
    dxy = G.distance(m, x, y)
    assert dxy == pytest.approx(G.distance(m, y, x), abs=1e-12)
    assert G.distance(m, x, x) == 0.0
    if m is not PD:
        # the acosh formula without the factor 2 is not a metric in general
        assert dxy <= G.distance(m, x, z) + G.distance(m, z, y) + 1e-10
    n = G.norm(m, x, G.unit_tangent(m, x, y))
    assert n == 0.0 or abs(n - 1) <= 1e-10


def test_paper_formula_triangle_gap_documented():
    # the factor-free formula violates the triangle inequality on some triples
    x, y, z = np.array([-0.5, 0]), np.array([0.5, 0]), np.array([0.0, 0])
    assert G.distance(PD, x, y) > G.distance(PD, x, z) + G.distance(PD, z, y)


@given(st.floats(1e-6, 0.999))
def test_factor2_matches_atanh(t):
    assert G.distance(PD2, [0, 0], [t, 0]) == pytest.approx(2 * math.atanh(t), rel=1e-10, abs=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_euclidean_log_weight_is_difference(seed):
    x, y = _point(E2, seed), _point(E2, seed + 1)
    assert np.array_equal(G.log_weight(E2, x, y), y - x) or np.allclose(
        G.log_weight(E2, x, y), y - x, rtol=1e-15, atol=1e-15)


def test_sphere_first_order_consistency():
    x = np.array([R, 0, 0])
    u = np.array([0, 0.6, 0.8])
    ratios = [G.distance(S2, x, G.retract(S2, x, eps * u)) / eps for eps in (1e-4, 1e-5)]
    assert all(abs(r - 1) < 1e-3 for r in ratios)
    # Richardson extrapolation of the two ratios
    assert abs((10 * ratios[1] - ratios[0]) / 9 - 1) < 1e-3


def test_vectorized_distances_agree():
    rng = np.random.default_rng(1)
    for m in (S2, PD, PD2, E2):
        X = np.stack([_point(m, s) for s in rng.integers(0, 10**6, 6)])
        Y = np.stack([_point(m, s) for s in rng.integers(0, 10**6, 6)])
        ref = [G.distance(m, a, b) for a, b in zip(X, Y)]
        assert G.distances(m, X, Y) == pytest.approx(ref, abs=1e-12)


def test_descriptor_validation_and_roundtrip():
    with pytest.raises(ValueError):
        G.ManifoldDescriptor("torus")
    with pytest.raises(ValueError):
        G.poincare("other")
    for m in (S2, PD, PD2, E2):
        assert G.ManifoldDescriptor.from_dict(m.to_dict()) == m
