import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from fdp_accounting.exceptions import DomainError
from fdp_accounting.tradeoff import (EpsDelta, Gaussian, Grid, Identity, SubsampledTradeoff,
                                     compose_gaussian, conjugate, default_alpha_grid,
                                     evaluate, inverse, lower_convex_hull, subsample,
                                     sup_distance, symmetrize)

ALPHAS = np.linspace(0.0, 1.0, 1001)


def assert_valid_tradeoff(beta, alphas=ALPHAS, tol=1e-9):
    assert np.all(beta >= -tol)
    assert np.all(beta <= 1.0 - alphas + tol)
    assert np.all(np.diff(beta) <= tol)
    assert np.all(np.diff(beta, 2) >= -tol)


def asymmetric_grid():
    # p G_2 + (1 - p) Id at p = 0.3 is a standard asymmetric trade-off curve.
    return Grid.from_function(subsample(Gaussian(2.0), 0.3))


# ----------------------------------------------------------------- evaluate


def test_gaussian_zero_is_identity():
    assert evaluate(Gaussian(0.0), 0.3) == pytest.approx(0.7, abs=1e-15)


def test_epsdelta_at_zero_is_one_minus_delta():
    for eps in (0.0, 0.5, 3.0, 50.0):
        assert evaluate(EpsDelta(eps, 0.1), 0.0) == pytest.approx(0.9, abs=1e-15)


def test_gaussian_mu_one_at_half():
    # Phi(Phi^{-1}(0.5) - 1) = Phi(-1)
    assert evaluate(Gaussian(1.0), 0.5) == pytest.approx(norm.cdf(-1.0), abs=1e-12)
    assert evaluate(Gaussian(1.0), 0.5) == pytest.approx(0.158655, abs=1e-6)


def test_gaussian_against_scipy_oracle():
    a = np.linspace(1e-6, 1 - 1e-6, 500)
    for mu in (0.1, 0.57, 2.0, 5.0):
        np.testing.assert_allclose(evaluate(Gaussian(mu), a),
                                   norm.cdf(norm.ppf(1 - a) - mu), atol=1e-12)


def test_evaluate_rejects_alpha_outside_unit_interval():
    with pytest.raises(DomainError):
        evaluate(Gaussian(1.0), 1.5)
    with pytest.raises(DomainError):
        evaluate(Identity(), -0.1)


def test_constructors_reject_bad_parameters():
    with pytest.raises(DomainError):
        Gaussian(-1.0)
    with pytest.raises(DomainError):
        EpsDelta(1.0, 1.5)
    with pytest.raises(DomainError):
        Grid([0.0, 0.5, 1.0], [1.0, 0.8, 0.0])  # above 1 - alpha
    with pytest.raises(DomainError):
        Grid([0.0, 0.5, 1.0], [0.5, 0.45, 0.0])  # concave


def test_epsdelta_kinks_match_analytic_breakpoints():
    for eps, delta in [(0.5, 0.0), (1.0, 0.1), (3.0, 1e-5)]:
        f = EpsDelta(eps, delta)
        a_star = (1 - delta) / (1 + math.exp(eps))
        # At the first kink both non-trivial lines agree.
        steep = 1 - delta - math.exp(eps) * a_star
        shallow = math.exp(-eps) * (1 - delta - a_star)
        assert steep == pytest.approx(shallow, abs=1e-15)
        assert evaluate(f, a_star) == pytest.approx(steep, abs=1e-15)
        assert evaluate(f, 1 - delta) == pytest.approx(0.0, abs=1e-15)


def test_call_syntax_matches_evaluate():
    f = Gaussian(1.3)
    assert f(0.2) == evaluate(f, 0.2)


# ----------------------------------------------------------------- inverse


def test_inverse_passthrough_for_symmetric_closed_forms():
    assert inverse(Identity()) == Identity()
    assert inverse(Gaussian(1.2)) == Gaussian(1.2)


def test_gaussian_is_its_own_inverse_numerically():
    for mu in (0.3, 1.0, 2.5):
        g = Gaussian(mu)
        np.testing.assert_allclose(evaluate(g, evaluate(g, ALPHAS)), ALPHAS, atol=1e-9)


def test_inverse_of_grid_is_involution():
    g = asymmetric_grid()
    gg = inverse(inverse(g))
    spacing = np.max(np.diff(g.alphas))
    assert sup_distance(gg, g) < 2 * spacing


def test_inverse_of_grid_matches_infimum_definition():
    g = asymmetric_grid()
    ginv = inverse(g)
    t = np.linspace(0, 1, 20001)
    ft = evaluate(g, t)
    for a in (0.0, 0.05, 0.3, 0.7):
        brute = t[np.argmax(ft <= a + 1e-12)]
        assert evaluate(ginv, a) == pytest.approx(brute, abs=2e-4)


def test_inverse_of_subsampled_is_reflection():
    f = subsample(Gaussian(1.0), 0.5)
    finv = inverse(f)
    # f(f^{-1}(a)) = a for a in the range of f, up to linear interpolation
    # error on a grid of spacing 1e-4.
    a = np.linspace(0.0, 1.0, 101)
    np.testing.assert_allclose(evaluate(f, evaluate(finv, a)), a, atol=1e-5)


# ----------------------------------------------------------------- conjugate


def test_conjugate_identity():
    assert conjugate(Identity(), -1.0) == -1.0


@pytest.mark.parametrize("mu", [0.2, 1.0, 2.0, 4.0])
def test_gaussian_conjugate_at_minus_one(mu):
    value = 1.0 + conjugate(Gaussian(mu), -math.exp(0.0))
    assert value == pytest.approx(norm.cdf(mu / 2) - norm.cdf(-mu / 2), abs=1e-12)


@pytest.mark.parametrize("mu,x", [(0.5, -0.3), (1.0, -2.0), (2.0, -10.0)])
def test_gaussian_conjugate_against_brute_force_sup(mu, x):
    a = np.linspace(0, 1, 2_000_001)
    brute = np.max(a * x - evaluate(Gaussian(mu), a))
    assert conjugate(Gaussian(mu), x) == pytest.approx(brute, abs=1e-9)


@pytest.mark.parametrize("eps,delta", [(0.5, 0.0), (1.0, 0.1), (2.0, 1e-5)])
def test_epsdelta_conjugate_at_slope(eps, delta):
    assert conjugate(EpsDelta(eps, delta), -math.exp(eps)) == pytest.approx(delta - 1.0,
                                                                            abs=1e-14)


def test_subsampled_conjugate_against_brute_force():
    f = subsample(Gaussian(1.5), 0.3)
    a = np.linspace(0, 1, 1_000_001)
    for x in (-0.5, -1.7, -5.0):
        brute = np.max(a * x - evaluate(f, a))
        assert conjugate(f, x) == pytest.approx(brute, abs=1e-8)


def test_grid_conjugate_matches_closed_form():
    g = Grid.from_function(Gaussian(1.0))
    for x in (-0.5, -1.0, -3.0):
        assert conjugate(g, x) == pytest.approx(conjugate(Gaussian(1.0), x), abs=1e-6)


# ----------------------------------------------------------------- subsample


def test_subsample_zero_is_identity():
    f = subsample(Gaussian(3.0), 0.0)
    np.testing.assert_allclose(evaluate(f, ALPHAS), 1 - ALPHAS, atol=1e-15)


def test_subsample_one_is_f():
    f = Gaussian(1.7)
    np.testing.assert_array_equal(evaluate(subsample(f, 1.0), ALPHAS), evaluate(f, ALPHAS))


def test_subsample_endpoint():
    assert evaluate(subsample(Gaussian(1.0), 0.5), 0.0) == 1.0


def test_subsample_rejects_bad_p():
    with pytest.raises(DomainError):
        subsample(Gaussian(1.0), 1.5)


def test_subsampled_type_evaluation_formula():
    f = subsample(EpsDelta(1.0, 0.01), 0.4)
    assert isinstance(f, SubsampledTradeoff)
    expected = 0.4 * evaluate(EpsDelta(1.0, 0.01), ALPHAS) + 0.6 * (1 - ALPHAS)
    np.testing.assert_allclose(evaluate(f, ALPHAS), expected, atol=1e-15)


# ----------------------------------------------------------------- symmetrize


def test_symmetrize_closed_forms():
    assert symmetrize(Gaussian(0.8)) == Gaussian(0.8)
    assert symmetrize(Identity()) == Identity()


def test_symmetrize_gaussian_grid_reproduces_gaussian():
    g = symmetrize(Grid.from_function(Gaussian(0.8)))
    assert sup_distance(g, Gaussian(0.8)) < 1e-6


def test_symmetrize_asymmetric_grid_is_below_min_and_convex():
    g = asymmetric_grid()
    s = symmetrize(g)
    a = np.linspace(0, 1, 10_000)
    direct = np.minimum(evaluate(g, a), evaluate(inverse(g), a))
    sa = evaluate(s, a)
    assert np.all(sa <= direct + 1e-12)
    assert_valid_tradeoff(sa, a)
    # Symmetric: equals its own inverse.
    assert sup_distance(inverse(s), s) < 1e-9


def test_symmetrize_is_greatest_convex_minorant():
    # Any chord of the min between two grid points lies above the hull.
    g = asymmetric_grid()
    s = symmetrize(g)
    a = np.linspace(0, 1, 2001)
    direct = np.minimum(evaluate(g, a), evaluate(inverse(g), a))
    rng = np.random.default_rng(0)
    for _ in range(200):
        i, j = sorted(rng.choice(a.size, 2, replace=False))
        w = rng.random()
        x = (1 - w) * a[i] + w * a[j]
        chord = (1 - w) * direct[i] + w * direct[j]
        assert evaluate(s, x) <= chord + 1e-12


def test_symmetrize_idempotent():
    s = symmetrize(asymmetric_grid())
    ss = symmetrize(s)
    np.testing.assert_allclose(evaluate(ss, ALPHAS), evaluate(s, ALPHAS), atol=1e-9)


def test_lower_hull_drops_interior_points():
    hx, hy = lower_convex_hull([0, 0.5, 1, 0.5], [1, 0.8, 0, 0.2])
    np.testing.assert_array_equal(hx, [0, 0.5, 1])
    np.testing.assert_array_equal(hy, [1, 0.2, 0])


# ----------------------------------------------------------------- composition


def test_compose_gaussian_examples():
    assert compose_gaussian([3, 4]).mu == pytest.approx(5.0)
    assert compose_gaussian([0.7]).mu == 0.7
    assert compose_gaussian([1, 1, 1, 1]).mu == pytest.approx(2.0)


def test_default_grid_contents():
    a = default_alpha_grid()
    assert a[0] == 0.0 and a[-1] == 1.0
    assert np.all(np.diff(a) > 0)
    assert np.sum((a > 0) & (a <= 1e-3)) >= 100


# ----------------------------------------------------------------- properties

tradeoffs = st.one_of(
    st.builds(Gaussian, st.floats(0.0, 6.0)),
    st.builds(EpsDelta, st.floats(0.0, 8.0), st.floats(0.0, 1.0)),
    st.just(Identity()),
)


@settings(max_examples=60, deadline=None)
@given(tradeoffs, st.floats(0.0, 1.0))
def test_invariants_of_all_variants(f, p):
    for g in (f, subsample(f, p)):
        assert_valid_tradeoff(evaluate(g, ALPHAS))


@settings(max_examples=60, deadline=None)
@given(tradeoffs, st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_subsampling_orders_between_f_and_identity(f, p, q):
    lo, hi = sorted((p, q))
    base = evaluate(f, ALPHAS)
    f_lo = evaluate(subsample(f, lo), ALPHAS)
    f_hi = evaluate(subsample(f, hi), ALPHAS)
    assert np.all(base <= f_hi + 1e-12)
    assert np.all(f_hi <= f_lo + 1e-12)
    assert np.all(f_lo <= 1 - ALPHAS + 1e-12)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.1, 4.0), st.floats(0.05, 0.95))
def test_symmetrize_of_subsampled_is_valid_and_symmetric(mu, p):
    s = symmetrize(subsample(Gaussian(mu), p), alphas=np.linspace(0, 1, 2001))
    beta = evaluate(s, ALPHAS)
    assert_valid_tradeoff(beta)
    assert sup_distance(inverse(s), s, ALPHAS) < 1e-9
    ss = symmetrize(s)
    assert sup_distance(ss, s, ALPHAS) < 1e-9
