import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ggdquant import ggd
from ggdquant import ratedist as rd
from ggdquant.errors import DegenerateSourceError, DomainError, RangeError


def reference_blahut(points, probs, slope, iters=20000, tol=1e-10):
    """Plain dense Blahut-Arimoto, used only as an oracle on tiny alphabets."""
    dist = (points[:, None] - points[None, :]) ** 2
    A = np.exp(slope * dist)
    q = probs.copy()
    for _ in range(iters):
        c = A @ q
        w = A.T @ (probs / c)
        q_new = q * w
        q_new /= q_new.sum()
        if np.max(np.abs(q_new - q)) < tol:
            q = q_new
            break
        q = q_new
    c = A @ q
    cond = A * q[None, :] / c[:, None]
    d = float(np.sum(probs[:, None] * cond * dist))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(cond > 0, cond / q[None, :], 1.0)
        r = float(np.sum(probs[:, None] * cond * np.log2(ratio)))
    return r, d


def test_discretize_gaussian_properties():
    src = rd.discretize_ggd(ggd.GgdParams(2.0), span=10, m_points=1001)
    assert src.probs.sum() == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(src.probs, src.probs[::-1], atol=1e-15)
    assert abs(src.mean) < 1e-9
    big = rd.discretize_ggd(ggd.GgdParams(2.0), span=20, m_points=2001)
    assert big.variance == pytest.approx(1.0, rel=1e-3)


@pytest.mark.parametrize("a", [0.25, 0.5, 1.0])
def test_discretize_heavy_tails_variance(a):
    src = rd.discretize_ggd(ggd.GgdParams(a))
    assert src.variance == pytest.approx(1.0, rel=0.2)
    assert src.sigma2 == 1.0


def test_discretize_empirical():
    x = ggd.sample(ggd.GgdParams(0.67), 10**6, 1)
    src = rd.discretize_empirical(x, 2001)
    assert src.variance == pytest.approx(np.var(x), rel=5e-3)
    x = np.repeat(np.arange(16.0), np.arange(1, 17))
    src = rd.discretize_empirical(x, 16)
    np.testing.assert_allclose(src.points, (np.arange(16) + 0.5) * 15 / 16)
    np.testing.assert_allclose(src.probs, np.arange(1, 17) / 136)
    with pytest.raises(DomainError):
        rd.discretize_empirical(np.arange(10.0), 20)
    with pytest.raises(DegenerateSourceError):
        rd.discretize_empirical(np.ones(100), 16)


def test_discrete_source_validation():
    with pytest.raises(DomainError):
        rd.DiscreteSource(np.array([0.0, 1.0]), np.array([0.5, 0.6]))
    with pytest.raises(DomainError):
        rd.DiscreteSource(np.array([1.0, 0.0]), np.array([0.5, 0.5]))


@settings(max_examples=15, deadline=None)
@given(
    m=st.integers(min_value=3, max_value=9),
    seed=st.integers(min_value=0, max_value=10**6),
    slope=st.floats(min_value=-30.0, max_value=-0.3),
)
def test_blahut_point_matches_dense_reference(m, seed, slope):
    rng = np.random.default_rng(seed)
    pts = np.sort(rng.uniform(-2, 2, m))
    if np.min(np.diff(pts)) < 1e-3:
        return
    probs = rng.dirichlet(np.ones(m))
    src = rd.DiscreteSource(pts, probs)
    bp = rd.blahut_point(src, slope, tol=1e-7, max_iter=20000)
    r, d = reference_blahut(pts, probs, slope)
    assert bp.converged
    assert bp.distortion == pytest.approx(d, rel=1e-3, abs=1e-6)
    assert bp.rate == pytest.approx(r, abs=1e-4)


def test_blahut_zero_rate_limit():
    src = rd.discretize_ggd(ggd.GgdParams(2.0), m_points=401)
    bp = rd.blahut_point(src, -1e-3)
    assert bp.rate < 1e-3
    # D is barely pinned down this shallow; the Lagrangian is what converges
    lagrangian = bp.rate - bp.slope * bp.distortion / math.log(2)
    assert lagrangian - (-bp.slope * src.variance / math.log(2)) <= rd.DEFAULT_TOL
    tight = rd.blahut_point(src, -0.2, tol=1e-9, max_iter=10**5)
    assert tight.distortion == pytest.approx(src.variance, rel=1e-3)


def test_blahut_gaussian_point():
    # in nats, dR/dD = -1/(2D) for the Gaussian, so D = 0.25 sits at slope -2
    src = rd.discretize_ggd(ggd.GgdParams(2.0))
    bp = rd.blahut_point(src, -2.0)
    assert bp.distortion == pytest.approx(0.25, rel=0.02)
    assert bp.rate == pytest.approx(1.0, abs=0.02)


def test_gaussian_curve_closed_form(gauss_curve):
    d = np.geomspace(1e-3, 0.9, 50)
    err = rd.rate_at(gauss_curve, d) - 0.5 * np.log2(1 / d)
    assert np.max(np.abs(err)) <= 0.02
    assert rd.rate_at(gauss_curve, 0.01) == pytest.approx(3.32, abs=0.05)


@pytest.mark.parametrize("name", ["gauss_curve", "heavy_curve"])
def test_curve_invariants(name, request):
    c = request.getfixturevalue(name)
    assert c.all_converged
    assert np.all(np.diff(c.rate) > 0)
    assert np.all(np.diff(c.distortion) < 0)
    assert c.rate[0] == 0 and c.distortion[0] == c.sigma2
    assert c.distortion.min() > 0
    # convexity of R as a function of D
    D, R = c.distortion[::-1], c.rate[::-1]
    chord = R[:-2] + (R[2:] - R[:-2]) * (D[1:-1] - D[:-2]) / (D[2:] - D[:-2])
    assert np.all(R[1:-1] <= chord + 1e-4)
    # the sweep went on until a Blahut point fell below 0.01 bits
    assert c.meta["lowest_swept_rate"] < 0.01
    assert c.distortion.min() <= 1e-3 * c.sigma2


def test_shannon_lower_bound():
    g = ggd.GgdParams(2.0)
    assert rd.shannon_lower_bound(g, 0.25) == pytest.approx(1.0, abs=1e-12)
    assert rd.shannon_lower_bound(g, 1.0) == pytest.approx(0.0, abs=1e-12)
    lap = ggd.GgdParams(1.0)
    ref = math.log2(math.e * math.sqrt(2)) + 0.5 * math.log2(1 / 0.01) - 0.5 * math.log2(2 * math.pi * math.e)
    assert rd.shannon_lower_bound(lap, 0.01) == pytest.approx(ref, abs=1e-12)


@given(a=st.floats(0.2, 8.0), d=st.floats(1e-6, 10.0))
def test_koshelev_shift(a, d):
    p = ggd.GgdParams(a)
    delta = rd.koshelev_bound(p, d) - rd.shannon_lower_bound(p, d)
    assert delta == pytest.approx(0.5 * math.log2(math.pi * math.e / 6), abs=1e-12)
    assert delta == pytest.approx(0.2546, abs=1e-4)


def test_koshelev_gaussian_value():
    assert rd.koshelev_bound(ggd.GgdParams(2.0), 0.25) == pytest.approx(1.2546, abs=1e-4)


@pytest.mark.parametrize("name", ["gauss_curve", "heavy_curve"])
def test_shannon_bound_below_curve(name, request):
    c = request.getfixturevalue(name)
    alpha = 2.0 if name == "gauss_curve" else 0.25
    p = ggd.GgdParams(alpha)
    d = np.geomspace(1e-3, 0.5, 30)
    assert np.all(rd.rate_at(c, d) >= rd.shannon_lower_bound(p, d) - 2e-3)


def test_invert_rate(gauss_curve):
    assert rd.invert_rate(gauss_curve, 0.0) == pytest.approx(1.0)
    assert rd.invert_rate(gauss_curve, 1.0) == pytest.approx(0.25, abs=0.01)
    for r in (0.3, 1.7, 3.1):
        assert rd.rate_at(gauss_curve, rd.invert_rate(gauss_curve, r)) == pytest.approx(r, abs=1e-3)
    with pytest.raises(RangeError):
        rd.invert_rate(gauss_curve, -0.1)
    with pytest.raises(RangeError):
        rd.invert_rate(gauss_curve, 50.0)


def test_g_max(gauss_curve):
    assert rd.g_max(gauss_curve, 0.0) == pytest.approx(0.0, abs=1e-12)
    assert rd.g_max(gauss_curve, 1.0) == pytest.approx(6.02, abs=0.05)
    assert rd.g_max(gauss_curve, 3.32) == pytest.approx(20.0, abs=0.1)
