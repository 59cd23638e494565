import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import comb, logsumexp

from fdp_accounting.duality import delta_from_eps, steps_from_epochs
from fdp_accounting.exceptions import DomainError
from fdp_accounting.functionals import clt_mu_subsampled_gaussian
from fdp_accounting.moments import (DEFAULT_LAMBDAS, DEFAULT_ORDERS, MomentsAccountantConfig,
                                    alpha_gm, delta_ma, eps_ma, log_delta_ma,
                                    ma_tradeoff_envelope)
from fdp_accounting.tradeoff import Gaussian
from scipy.stats import norm

P_MNIST = 256 / 60000


def mnist_cfg(sigma, epochs, p=P_MNIST):
    return MomentsAccountantConfig(sigma, p, steps_from_epochs(epochs, p))


def binomial_log_moment(k, sigma, p):
    """log E_P[(1 - p + p r)^k] for integer k >= 0 via the binomial expansion."""
    j = np.arange(k + 1)
    terms = (np.log(comb(k, j)) + j * math.log(p) + (k - j) * math.log1p(-p)
             + j * (j - 1) / (2 * sigma * sigma))
    return float(logsumexp(terms))


# ----------------------------------------------------------------- grid


def test_default_orders_expand_the_listed_pattern():
    assert DEFAULT_ORDERS[:10] == (1.25, 1.5, 1.75, 2.0, 2.25, 2.5, 3.0, 3.5, 4.0, 4.5)
    assert DEFAULT_ORDERS[10:70] == tuple(float(k) for k in range(5, 65))
    assert DEFAULT_ORDERS[-3:] == (128.0, 256.0, 512.0)
    assert DEFAULT_LAMBDAS[0] == 0.25


@pytest.mark.parametrize("grid", [(), (1.0, 1.0), (2.0, 1.0), (-1.0, 2.0)])
def test_config_rejects_bad_grids(grid):
    with pytest.raises(DomainError):
        MomentsAccountantConfig(1.0, 0.01, 10, lambda_grid=grid)


# ----------------------------------------------------------------- alpha_gm


@pytest.mark.parametrize("lam", [0.25, 1.0, 3.0, 10.0, 63.0])
@pytest.mark.parametrize("sigma", [0.7, 1.1, 4.0])
def test_alpha_gm_without_subsampling(lam, sigma):
    assert alpha_gm(lam, sigma, 1.0) == pytest.approx(lam * (lam + 1) / (2 * sigma**2),
                                                      rel=1e-8)


def test_alpha_gm_vanishes_as_p_goes_to_zero():
    assert alpha_gm(4.0, 1.0, 0.0) == 0.0
    assert alpha_gm(4.0, 1.0, 1e-9) < 1e-15


@pytest.mark.parametrize("lam", [1, 2, 5, 20])
@pytest.mark.parametrize("sigma,p", [(1.1, P_MNIST), (0.7, 0.01), (2.0, 0.3)])
def test_alpha_gm_integer_orders_match_binomial_expansion(lam, sigma, p):
    # For integer lam the upward direction dominates and has a finite sum.
    up = binomial_log_moment(lam + 1, sigma, p)
    assert alpha_gm(float(lam), sigma, p) == pytest.approx(up, rel=1e-9)


def test_alpha_gm_monte_carlo():
    lam, sigma, p = 2.0, 1.0, 0.1
    rng = np.random.Generator(np.random.Philox(7))
    x = rng.standard_normal(10_000_000)
    mix = 1 - p + p * np.exp(x / sigma - 1 / (2 * sigma**2))
    estimates = []
    for a in (lam + 1, -lam):
        v = mix**a
        m = v.mean()
        se = v.std() / math.sqrt(v.size) / m
        estimates.append((math.log(m), se))
    (up, se_up), (down, se_down) = estimates
    value = alpha_gm(lam, sigma, p)
    best, se = (up, se_up) if up >= down else (down, se_down)
    assert abs(value - best) <= 3 * se


@pytest.mark.parametrize("lam", [0.5, 2.0, 9.0])
@pytest.mark.parametrize("sigma", [0.6, 1.3])
def test_alpha_gm_non_decreasing_in_p(lam, sigma):
    ps = np.linspace(0.001, 1.0, 25)
    vals = [alpha_gm(lam, sigma, float(p)) for p in ps]
    assert np.all(np.diff(vals) >= -1e-12 * np.max(vals))


# ----------------------------------------------------------------- delta / eps


def test_delta_ma_at_zero_eps_is_one():
    assert delta_ma(0.0, mnist_cfg(1.3, 15)) == 1.0


def test_delta_ma_mnist_sigma_13():
    d = delta_ma(1.19, mnist_cfg(1.3, 15))
    assert 0.5e-5 < d < 2e-5


def test_delta_ma_monotone_in_eps():
    cfg = mnist_cfg(1.1, 60)
    eps = np.linspace(0, 8, 50)
    for mode in ("grid", "continuous"):
        d = [delta_ma(float(e), cfg, mode) for e in eps]
        assert np.all(np.diff(d) <= 0)


def test_mode_is_validated():
    with pytest.raises(DomainError):
        delta_ma(1.0, mnist_cfg(1.1, 60), mode="golden")


@settings(max_examples=20, deadline=None)
@given(st.floats(0.5, 3.0), st.floats(1e-3, 0.2), st.integers(1, 20_000), st.floats(0.1, 10))
def test_grid_infimum_dominates_continuous(sigma, p, T, eps):
    cfg = MomentsAccountantConfig(sigma, p, T)
    assert log_delta_ma(eps, cfg, "grid") >= log_delta_ma(eps, cfg, "continuous") - 1e-12


@pytest.mark.parametrize("sigma,epochs,p,delta,target,tol", [
    (0.7, 45, P_MNIST, 1e-5, 7.10, 0.10),
    (0.55, 18, 256 / 29305, 1e-5, 14.70, 0.20),
    (0.6, 20, 1 / 80, 1e-6, 15.39, 0.20),
])
def test_eps_ma_examples(sigma, epochs, p, delta, target, tol):
    assert eps_ma(delta, mnist_cfg(sigma, epochs, p)) == pytest.approx(target, abs=tol)


def test_eps_ma_inverts_delta_ma():
    cfg = mnist_cfg(1.1, 60)
    e = eps_ma(1e-5, cfg)
    assert delta_ma(e, cfg) <= 1e-5
    assert delta_ma(e - 1e-4, cfg) > 1e-5


def test_eps_ma_zero_steps():
    assert eps_ma(1e-5, MomentsAccountantConfig(1.0, 0.1, 0)) == 0.0


# ----------------------------------------------------------------- envelope


def test_envelope_at_zero():
    cfg = mnist_cfg(1.1, 60)
    grid = np.linspace(0, 6, 121)
    inf_delta = min(delta_ma(float(e), cfg) for e in grid)
    assert ma_tradeoff_envelope(cfg, 0.0, eps_grid=grid) == pytest.approx(1 - inf_delta,
                                                                          abs=1e-14)


def test_envelope_is_a_tradeoff_function():
    cfg = mnist_cfg(1.1, 60)
    a = np.linspace(0, 1, 401)
    b = ma_tradeoff_envelope(cfg, a)
    assert np.all((b >= 0) & (b <= 1 - a + 1e-12))
    assert np.all(np.diff(b) <= 1e-12)
    # Convexity on the uniform grid.
    assert np.all(b[:-2] + b[2:] - 2 * b[1:-1] >= -1e-9)


def test_envelope_below_clt_limit_at_scale():
    T, nu, sigma = 100_000, 1.0, 1.1
    p = nu / math.sqrt(T)
    cfg = MomentsAccountantConfig(sigma, p, T)
    mu = clt_mu_subsampled_gaussian(p, T, sigma)
    a = np.linspace(0, 1, 100)
    assert np.all(ma_tradeoff_envelope(cfg, a) <= Gaussian(mu)(a) + 0.01)


@pytest.mark.parametrize("T", [1_000, 10_000, 100_000])
def test_gap_over_clt_at_scale(T):
    nu, sigma, eps = 1.0, 1.1, 1.0
    p = nu / math.sqrt(T)
    mu = clt_mu_subsampled_gaussian(p, T, sigma)
    gap = delta_ma(eps, MomentsAccountantConfig(sigma, p, T)) - delta_from_eps(mu, eps)
    assert gap >= math.exp(eps) * norm.cdf(-eps / mu - mu / 2) - 1e-4
