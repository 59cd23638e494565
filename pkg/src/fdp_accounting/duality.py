"""Conversion between mu-GDP and (eps, delta)-DP, and noise calibration.

mu-GDP implies (eps, delta(eps; mu))-DP for every eps >= 0 with

    delta(eps; mu) = Phi(-eps/mu + mu/2) - e^eps * Phi(-eps/mu - mu/2).

For large eps/mu both terms are tiny and nearly equal, so the difference is
formed in log space from log-CDF values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy import optimize
from scipy.special import log_ndtr, ndtr

from ._validation import (SIGMA_FLOOR, check_probability, check_scalar, check_sigma,
                          check_steps)
from .exceptions import CalibrationError, InfeasibleError

__all__ = [
    "EpsDeltaPoint",
    "CalibrationResult",
    "delta_from_eps",
    "log_delta_from_eps",
    "eps_from_delta",
    "calibrate_mu",
    "calibrate_sigma",
    "steps_from_epochs",
    "MU_BRACKET",
]

MU_BRACKET = (1e-6, 100.0)
_EPS_MAX = 1e4


@dataclass(frozen=True)
class EpsDeltaPoint:
    eps: float
    delta: float

    def __post_init__(self):
        object.__setattr__(self, "eps", check_scalar(self.eps, "eps", lower=0.0))
        object.__setattr__(self, "delta", check_probability(self.delta, "delta"))


@dataclass(frozen=True)
class CalibrationResult:
    """Outcome of noise calibration.

    Attributes:
        mu_tilde: GDP parameter whose delta(eps; mu) curve hits the target.
        sigma_tilde: noise multiplier whose CLT parameter equals ``mu_tilde``.
        iterations: function evaluations used by the root finder.
        residual: |log delta(eps; mu_tilde) - log target delta|.
    """

    mu_tilde: float
    sigma_tilde: float
    iterations: int
    residual: float


def steps_from_epochs(epochs: float, p: float) -> int:
    """Number of iterations T for ``epochs`` passes at sampling rate ``p``.

    Rounds epochs / p to the nearest integer, halves rounding up.
    """
    epochs = check_scalar(epochs, "epochs", lower=0.0)
    p = check_probability(p, open_lower=True)
    return int(math.floor(epochs / p + 0.5))


def log_delta_from_eps(mu: float, eps: float) -> float:
    """Natural log of delta(eps; mu); ``-inf`` when delta underflows to zero."""
    if mu == 0.0:
        return -math.inf
    if math.isinf(eps):
        return -math.inf
    a = float(log_ndtr(-eps / mu + mu / 2.0))
    b = eps + float(log_ndtr(-eps / mu - mu / 2.0))
    if b >= a:
        # Only reachable through rounding when delta is zero to machine precision.
        return -math.inf
    return a + math.log(-math.expm1(b - a))


def delta_from_eps(mu: float, eps: float) -> float:
    """delta(eps; mu) = 1 + G_mu^*(-e^eps), accurate down to about 1e-300."""
    mu = check_scalar(mu, "mu", lower=0.0)
    eps = check_scalar(eps, "eps", lower=0.0, allow_inf=True)
    if mu == 0.0:
        return 0.0
    if eps == 0.0:
        return float(ndtr(mu / 2.0) - ndtr(-mu / 2.0))
    ld = log_delta_from_eps(mu, eps)
    return 0.0 if ld == -math.inf else math.exp(ld)


def eps_from_delta(mu: float, delta: float) -> float:
    """Smallest eps with delta(eps; mu) <= delta; zero once delta >= delta(0; mu)."""
    mu = check_scalar(mu, "mu", lower=0.0)
    delta = check_probability(delta, "delta")
    if mu == 0.0 or delta >= delta_from_eps(mu, 0.0):
        return 0.0
    if delta == 0.0:
        return math.inf
    target = math.log(delta)

    def g(e):
        return log_delta_from_eps(mu, e) - target

    hi = max(1.0, mu * mu)
    while g(hi) > 0.0:
        hi *= 2.0
        if hi > _EPS_MAX:
            raise CalibrationError(f"eps for delta={delta} exceeds {_EPS_MAX}")
    return optimize.brentq(g, 0.0, hi, xtol=1e-15, rtol=1e-15, maxiter=500)


def _mu_root(eps, delta):
    target = math.log(delta)

    def g(m):
        if eps == 0.0:
            return math.log(float(ndtr(m / 2.0) - ndtr(-m / 2.0))) - target
        return log_delta_from_eps(m, eps) - target

    lo, hi = MU_BRACKET
    glo, ghi = g(lo), g(hi)
    if not (glo < 0.0 < ghi):
        raise CalibrationError(
            f"target (eps={eps}, delta={delta}) is not bracketed by mu in {MU_BRACKET}")
    root, info = optimize.brentq(g, lo, hi, xtol=1e-15, rtol=1e-15,
                                 maxiter=500, full_output=True)
    return root, info.function_calls, abs(g(root))


def calibrate_mu(target: EpsDeltaPoint) -> float:
    """The mu for which delta(target.eps; mu) equals target.delta.

    delta(eps; .) is increasing, so a bracketing root finder on log delta
    converges over the whole bracket [1e-6, 100].
    """
    if not 0.0 < target.delta < 1.0:
        raise CalibrationError("target delta must lie strictly between 0 and 1")
    return _mu_root(target.eps, target.delta)[0]


def calibrate_sigma(target: EpsDeltaPoint, p: float, T: int) -> CalibrationResult:
    """Noise multiplier whose CLT accounting meets ``target`` exactly.

    Solves delta(eps; mu) = delta for mu, then inverts
    mu = p * sqrt(T * (exp(1/sigma^2) - 1)) for sigma.

    Raises:
        InfeasibleError: if the required sigma falls below the supported floor.
    """
    p = check_probability(p, open_lower=True)
    T = check_steps(T)
    if not 0.0 < target.delta < 1.0:
        raise CalibrationError("target delta must lie strictly between 0 and 1")
    mu, calls, residual = _mu_root(target.eps, target.delta)
    sigma = 1.0 / math.sqrt(math.log1p(mu * mu / (p * p * T)))
    if sigma < SIGMA_FLOOR:
        raise InfeasibleError(
            f"calibrated sigma={sigma:.4g} is below the supported floor {SIGMA_FLOOR}")
    check_sigma(sigma)
    return CalibrationResult(mu_tilde=mu, sigma_tilde=sigma, iterations=calls,
                             residual=residual)
