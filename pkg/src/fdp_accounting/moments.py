"""Moments accountant for the Poisson-subsampled Gaussian mechanism.

With P = N(0, 1), Q = N(1/sigma, 1) and the mixture GM = p Q + (1 - p) P,

    alpha_GM(lam) = max{ lam D_{lam+1}(GM || P), lam D_{lam+1}(P || GM) },

and the accountant certifies (eps, delta_MA(eps))-DP with
delta_MA(eps) = inf_lam exp(T alpha_GM(lam) - lam eps).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import integrate, optimize

from ._validation import check_alpha, check_probability, check_scalar, check_sigma, check_steps
from .exceptions import DomainError, QuadratureError
from .tradeoff import EpsDelta, evaluate

__all__ = [
    "DEFAULT_ORDERS",
    "DEFAULT_LAMBDAS",
    "MomentsAccountantConfig",
    "alpha_gm",
    "log_delta_ma",
    "delta_ma",
    "eps_ma",
    "ma_tradeoff_envelope",
]

# Renyi orders lam + 1 searched by the accountant.
DEFAULT_ORDERS = tuple(
    [1.25, 1.5, 1.75, 2.0, 2.25, 2.5, 3.0, 3.5, 4.0, 4.5]
    + [float(k) for k in range(5, 65)]
    + [128.0, 256.0, 512.0]
)
DEFAULT_LAMBDAS = tuple(o - 1.0 for o in DEFAULT_ORDERS)

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class MomentsAccountantConfig:
    """Subsampled Gaussian run accounted by the moments accountant.

    Attributes:
        sigma: noise multiplier.
        p: Poisson sampling probability.
        T: number of iterations.
        lambda_grid: moment orders lam (Renyi order minus one), strictly increasing.
        tail: half-width in standard deviations of the integration window.
        epsrel: relative tolerance handed to the quadrature routine.
    """

    sigma: float
    p: float
    T: int
    lambda_grid: Sequence[float] = field(default=DEFAULT_LAMBDAS)
    tail: float = 40.0
    epsrel: float = 1e-12

    def __post_init__(self):
        object.__setattr__(self, "sigma", check_sigma(self.sigma, enforce_floor=False))
        object.__setattr__(self, "p", check_probability(self.p, open_lower=True))
        object.__setattr__(self, "T", check_steps(self.T, allow_zero=True))
        grid = tuple(float(x) for x in self.lambda_grid)
        if not grid or any(x <= 0 for x in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
            raise DomainError("lambda_grid must be non-empty, positive and strictly increasing")
        object.__setattr__(self, "lambda_grid", grid)

    @property
    def orders(self):
        return tuple(l + 1.0 for l in self.lambda_grid)


def _log_moment(a, sigma, p, tail, epsrel):
    """log E_P[(1 - p + p r(x))^a] with r the likelihood ratio dQ/dP."""
    log1mp = math.log1p(-p) if p < 1.0 else -math.inf
    logp = math.log(p)
    c = 1.0 / (2.0 * sigma * sigma)

    def log_integrand(x):
        lr = np.logaddexp(log1mp, logp + x / sigma - c)
        return a * lr - 0.5 * x * x - _LOG_SQRT_2PI

    peak = a / sigma
    lo = min(0.0, peak) - tail
    hi = max(0.0, peak) + tail
    xs = np.linspace(lo, hi, 2001)
    m = float(np.max(log_integrand(xs)))
    pts = sorted({0.0, peak})
    val, err = integrate.quad(lambda x: math.exp(float(log_integrand(x)) - m), lo, hi,
                              points=pts, limit=500, epsabs=0.0, epsrel=epsrel)
    if not (val > 0.0 and math.isfinite(val)) or err > 1e-8 * val:
        raise QuadratureError(f"moment integral for a={a} did not converge",
                              m + math.log(val) if val > 0 else float("nan"), err)
    return m + math.log(val)


@lru_cache(maxsize=65536)
def _alpha_gm_cached(lam, sigma, p, tail, epsrel):
    if p == 0.0 or math.isinf(sigma):
        return 0.0
    up = _log_moment(lam + 1.0, sigma, p, tail, epsrel)
    down = _log_moment(-lam, sigma, p, tail, epsrel)
    return max(up, down, 0.0)


def alpha_gm(lam: float, sigma: float, p: float, *, tail: float = 40.0,
             epsrel: float = 1e-12) -> float:
    """Scaled Renyi divergence alpha_GM(lam; sigma, p) of the Gaussian mixture.

    Both directions are integrated numerically in log space around the mode
    of the integrand.  At p = 1 the value is lam (lam + 1) / (2 sigma^2).

    Raises:
        QuadratureError: if an integral fails to converge; carries the estimate.
    """
    lam = check_scalar(lam, "lam", lower=0.0, lower_inclusive=False)
    sigma = check_sigma(sigma, enforce_floor=False)
    p = check_probability(p)
    return _alpha_gm_cached(lam, sigma, p, float(tail), float(epsrel))


def _alphas(cfg, lams):
    return np.array([_alpha_gm_cached(float(l), cfg.sigma, cfg.p, cfg.tail, cfg.epsrel)
                     for l in lams])


def _objective(cfg, eps):
    def g(lam):
        return cfg.T * _alpha_gm_cached(float(lam), cfg.sigma, cfg.p, cfg.tail,
                                        cfg.epsrel) - lam * eps
    return g


def log_delta_ma(eps: float, cfg: MomentsAccountantConfig, mode: str = "grid") -> float:
    """log of delta_MA(eps) before clamping to [0, 1].

    Args:
        eps: privacy parameter, eps >= 0.
        cfg: accountant configuration.
        mode: "grid" minimises over ``cfg.lambda_grid``; "continuous" refines
            the grid minimiser with a bounded scalar search between its neighbours.
    """
    eps = check_scalar(eps, "eps", lower=0.0)
    if mode not in ("grid", "continuous"):
        raise DomainError(f"mode must be 'grid' or 'continuous', got {mode!r}")
    if cfg.T == 0 or math.isinf(cfg.sigma):
        # Nothing is released, so no failure probability is needed at any eps.
        return -math.inf
    lams = np.asarray(cfg.lambda_grid)
    vals = cfg.T * _alphas(cfg, lams) - lams * eps
    i = int(np.argmin(vals))
    best = float(vals[i])
    if mode == "grid":
        return best
    lo = lams[i - 1] if i > 0 else lams[0] * 1e-4
    hi = lams[i + 1] if i + 1 < lams.size else lams[-1] * 2.0
    res = optimize.minimize_scalar(_objective(cfg, eps), bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-10 * max(1.0, hi)})
    return min(best, float(res.fun))


def delta_ma(eps: float, cfg: MomentsAccountantConfig, mode: str = "grid") -> float:
    """delta_MA(eps), clamped to [0, 1]."""
    ld = log_delta_ma(eps, cfg, mode)
    return 1.0 if ld >= 0.0 else math.exp(ld)


def eps_ma(delta: float, cfg: MomentsAccountantConfig, mode: str = "grid",
           tol: float = 1e-4) -> float:
    """Smallest eps with delta_MA(eps) <= delta, by bisection to ``tol`` in eps.

    The upper end of the returned bracket is reported, so the answer never
    understates the privacy loss.
    """
    delta = check_probability(delta, "delta", open_lower=True, open_upper=True)
    target = math.log(delta)

    def g(e):
        return log_delta_ma(e, cfg, mode) - target

    if g(0.0) <= 0.0:
        return 0.0
    lo, hi = 0.0, 1.0
    while g(hi) > 0.0:
        lo, hi = hi, 2.0 * hi
        if hi > 1e6:
            raise DomainError("eps_ma diverged; the configuration leaks without bound")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if g(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return hi


def _default_eps_grid(cfg):
    hi = eps_ma(1e-300, cfg, tol=1e-2) if cfg.T > 0 else 0.0
    return np.linspace(0.0, max(hi, 1e-3), 2001)


def ma_tradeoff_envelope(cfg: MomentsAccountantConfig, alpha, eps_grid=None):
    """Supremum over eps of the (eps, delta_MA(eps)) trade-off curves at ``alpha``.

    This is the full trade-off guarantee implied by every (eps, delta) pair
    the accountant certifies.  ``eps_grid`` defaults to 2001 points between 0
    and the eps at which delta_MA reaches 1e-300.
    """
    a = check_alpha(alpha)
    eps = _default_eps_grid(cfg) if eps_grid is None else np.asarray(eps_grid, dtype=float)
    lams = np.asarray(cfg.lambda_grid)
    ta = cfg.T * _alphas(cfg, lams)
    log_deltas = np.min(ta[None, :] - eps[:, None] * lams[None, :], axis=1)
    deltas = np.where(log_deltas >= 0.0, 1.0, np.exp(np.minimum(log_deltas, 0.0)))
    flat = np.atleast_1d(a)
    out = np.zeros(flat.shape)
    for e, d in zip(eps.tolist(), deltas.tolist()):
        if d >= 1.0:
            continue
        np.maximum(out, evaluate(EpsDelta(e, d), flat), out=out)
    if a.ndim == 0:
        return float(out[0])
    return out.reshape(a.shape)
