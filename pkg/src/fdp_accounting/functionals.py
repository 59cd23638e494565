"""Integral functionals of trade-off functions and the central-limit accountant.

All functionals are integrals over [0, 1] of a function of ``|f'(alpha)|``.
For curves built from a Gaussian the substitution ``alpha = Phi(-z)`` turns
``|f'|`` into ``exp(l(z))`` with ``l`` smooth, so each integral becomes a
standard-normal expectation handled by adaptive quadrature.  Piecewise-linear
curves (Grid, EpsDelta, Identity) have piecewise-constant slopes and their
integrals are finite sums computed exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy import integrate
from scipy.special import logsumexp

from ._validation import SIGMA_FLOOR, check_probability, check_scalar, check_sigma, check_steps
from .exceptions import DegenerateError, DomainError, IntegrabilityError, QuadratureError
from .tradeoff import EpsDelta, Gaussian, Grid, Identity, SubsampledTradeoff

__all__ = [
    "KLFunctionals",
    "CltFunctionalSums",
    "AsymptoticRegime",
    "kl_functionals",
    "chi_square",
    "fourth_moment",
    "renyi_from_tradeoff",
    "clt_mu_subsampled_gaussian",
    "clt_mu_general",
    "clt_mu_asymmetric",
    "SIGMA_FLOOR",
]

# Values above this are treated as a numerically divergent integral.
DIVERGENCE_THRESHOLD = 1e300
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_Z_TAIL = 40.0


class KLFunctionals(NamedTuple):
    kl: float
    kl_tilde: float
    kappa2: float
    kappa2_tilde: float
    kappa3: float
    kappa3_tilde: float


@dataclass(frozen=True)
class CltFunctionalSums:
    """Sums entering the asymmetric central limit theorem.

    Attributes:
        K: sum over components of kl + kl_tilde.
        s: square root of the kappa2 sum.
        kappa3_sum: sum of kappa3 (small values mean the limit is accurate).
        s_tilde: square root of the kappa2_tilde sum, which should match ``s``.
        kappa3_tilde_sum: sum of kappa3_tilde.
    """

    K: float
    s: float
    kappa3_sum: float
    s_tilde: float = float("nan")
    kappa3_tilde_sum: float = float("nan")

    @property
    def mu(self) -> float:
        return self.K / self.s


@dataclass(frozen=True)
class AsymptoticRegime:
    """Asymptotic setting p * sqrt(T) -> nu."""

    nu: float
    T: int
    p: float

    def __post_init__(self):
        object.__setattr__(self, "nu", check_scalar(self.nu, "nu", lower=0.0, lower_inclusive=False))
        object.__setattr__(self, "T", check_steps(self.T))
        object.__setattr__(self, "p", check_probability(self.p, open_lower=True))

    @classmethod
    def from_finite(cls, p: float, T: int) -> "AsymptoticRegime":
        return cls(nu=p * math.sqrt(T), T=T, p=p)

    @classmethod
    def from_nu(cls, nu: float, T: int) -> "AsymptoticRegime":
        return cls(nu=nu, T=T, p=nu / math.sqrt(T))


# ---------------------------------------------------------------------------
# Representations of |f'|


@dataclass(frozen=True)
class _Smooth:
    """|f'(Phi(-z))| = exp(ell(z)); ``centre`` is where exp(ell) is largest in mass."""

    ell: Callable[[np.ndarray], np.ndarray]
    centre: float


@dataclass(frozen=True)
class _Pieces:
    """|f'| equal to ``slopes[i]`` on an interval of length ``widths[i]``."""

    widths: np.ndarray
    slopes: np.ndarray


def _require_standing(f):
    if isinstance(f, EpsDelta) and f.delta > 0.0:
        raise DomainError("functionals need f(0) = 1; EpsDelta with delta > 0 violates this")
    if isinstance(f, Grid) and abs(f.betas[0] - 1.0) > 1e-12:
        raise DomainError("functionals need f(0) = 1")


def _representation(f):
    _require_standing(f)
    if isinstance(f, Gaussian):
        mu = f.mu
        return _Smooth(lambda z: mu * z - 0.5 * mu * mu, mu)
    if isinstance(f, Identity):
        return _Pieces(np.array([1.0]), np.array([1.0]))
    if isinstance(f, EpsDelta):
        a_star, _ = f.kinks()
        return _Pieces(np.array([a_star, 1.0 - a_star]),
                       np.array([math.exp(f.eps), math.exp(-f.eps)]))
    if isinstance(f, Grid):
        widths = np.diff(f.alphas)
        slopes = -np.diff(f.betas) / widths
        return _Pieces(widths, np.maximum(slopes, 0.0))
    if isinstance(f, SubsampledTradeoff):
        base = _representation(f.base)
        p = f.p
        if isinstance(base, _Pieces):
            return _Pieces(base.widths, p * base.slopes + (1.0 - p))
        if p == 0.0:
            return _Pieces(np.array([1.0]), np.array([1.0]))
        ell = base.ell
        log_p, log_q = math.log(p), (math.log1p(-p) if p < 1.0 else -math.inf)

        def mixed(z):
            # log(p e^l + 1 - p): log1p form near l = 0, logaddexp where
            # expm1(l) would round to -1.
            l = np.asarray(ell(z), dtype=float)
            with np.errstate(divide="ignore", invalid="ignore"):
                near = np.log1p(p * np.expm1(np.maximum(l, -1.0)))
                far = np.logaddexp(log_p + l, log_q)
            out = np.where(l > -1.0, near, far)
            return out if out.ndim else float(out)

        return _Smooth(mixed, base.centre)
    raise TypeError(f"not a trade-off function: {type(f).__name__}")


def _expect(rep, h, *, tilted=False, shift=0.0):
    """Integral over [0, 1] of h(log|f'|), optionally weighted by |f'|.

    ``shift`` is the multiple of ``centre`` where h(l) * phi peaks (0 for
    polynomial h, k for h growing like e^{k l}); tilting adds one more.
    """
    if isinstance(rep, _Pieces):
        mask = rep.widths > 0
        w, s = rep.widths[mask], rep.slopes[mask]
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            logs = np.log(s)
            vals = h(logs)
            if tilted:
                vals = np.where(s > 0, s * vals, 0.0)
        total = float(np.sum(w * vals))
        if not np.isfinite(total):
            raise IntegrabilityError("functional integral diverges on a flat or vertical piece")
        return total
    ell, c = rep.ell, rep.centre
    peak = c * (shift + (1.0 if tilted else 0.0))

    def integrand(z):
        l = ell(z)
        v = h(l) * math.exp(-0.5 * z * z - _LOG_SQRT_2PI)
        if tilted:
            v *= math.exp(l)
        return v

    lo = -_Z_TAIL + min(0.0, peak)
    hi = _Z_TAIL + max(0.0, peak)
    pts = sorted({0.0, c, peak})
    with np.errstate(over="ignore", invalid="ignore"):
        val, err = integrate.quad(integrand, lo, hi, points=pts, limit=500,
                                  epsabs=1e-14, epsrel=1e-12)
    if not math.isfinite(val) or abs(val) > DIVERGENCE_THRESHOLD:
        raise IntegrabilityError("functional integral is numerically infinite")
    if err > max(1e-8, 1e-6 * abs(val)):
        raise QuadratureError("quadrature did not converge", val, err)
    return float(val)


def fourth_moment(f) -> float:
    """Integral of (f'(x) + 1)^4, the integrability condition of the limit theorem."""
    rep = _representation(f)
    return _expect(rep, lambda l: np.expm1(l) ** 4, shift=4.0)


def _check_integrable(rep):
    _expect(rep, lambda l: np.expm1(l) ** 4, shift=4.0)


def kl_functionals(f) -> KLFunctionals:
    """The six functionals kl, kl~, kappa2, kappa2~, kappa3, kappa3~ of ``f``.

    Raises:
        DomainError: if f(0) != 1.
        IntegrabilityError: if the fourth-moment integral or any functional diverges.
    """
    rep = _representation(f)
    _check_integrable(rep)
    return KLFunctionals(
        kl=-_expect(rep, lambda l: l),
        kl_tilde=_expect(rep, lambda l: l, tilted=True),
        kappa2=_expect(rep, lambda l: l * l),
        kappa2_tilde=_expect(rep, lambda l: l * l, tilted=True),
        kappa3=_expect(rep, lambda l: np.abs(l) ** 3),
        kappa3_tilde=_expect(rep, lambda l: np.abs(l) ** 3, tilted=True),
    )


def chi_square(f, closed_form: bool = True) -> float:
    """chi^2(f) = int (f')^2 - 1, computed as int (|f'| - 1)^2 for stability.

    Args:
        f: a trade-off function with f(0) = 1.
        closed_form: use e^{mu^2} - 1 for Gaussian input instead of quadrature.
    """
    if closed_form and isinstance(f, Gaussian):
        return math.expm1(f.mu * f.mu)
    rep = _representation(f)
    _check_integrable(rep)
    return _expect(rep, lambda l: np.expm1(l) ** 2, shift=2.0)


def renyi_from_tradeoff(f, order: float) -> float:
    """Renyi divergence D_order(Q || P) for f = T(P, Q).

    Uses (order - 1) * D_order = log int |f'|^order over [0, 1].
    """
    order = check_scalar(order, "order", lower=1.0, lower_inclusive=False)
    rep = _representation(f)
    if isinstance(rep, _Pieces):
        mask = rep.widths > 0
        with np.errstate(divide="ignore"):
            log_terms = np.log(rep.widths[mask]) + order * np.log(rep.slopes[mask])
        log_int = float(logsumexp(log_terms))
    else:
        ell, c = rep.ell, rep.centre
        peak = order * c

        def log_integrand(z):
            return order * ell(z) - 0.5 * z * z - _LOG_SQRT_2PI

        lo, hi = min(0.0, peak) - _Z_TAIL, max(0.0, peak) + _Z_TAIL
        zs = np.linspace(lo, hi, 4001)
        m = float(np.max(log_integrand(zs)))
        val, _ = integrate.quad(lambda z: math.exp(log_integrand(z) - m), lo, hi,
                                points=sorted({0.0, c, peak}), limit=500,
                                epsabs=0.0, epsrel=1e-12)
        log_int = m + math.log(val)
    if not math.isfinite(log_int):
        raise IntegrabilityError("Renyi integral is numerically infinite")
    return max(log_int, 0.0) / (order - 1.0)


# ---------------------------------------------------------------------------
# Central-limit accountant


def clt_mu_subsampled_gaussian(p: float, T: int, sigma: float) -> float:
    """mu_CLT = p * sqrt(T * (exp(1/sigma^2) - 1)) for Poisson-subsampled noisy SGD.

    ``sigma = inf`` gives 0.  Noise below the floor raises SigmaFloorError.
    """
    p = check_probability(p)
    T = check_steps(T, allow_zero=True)
    sigma = check_sigma(sigma)
    if math.isinf(sigma) or T == 0 or p == 0.0:
        return 0.0
    return p * math.sqrt(T * math.expm1(1.0 / (sigma * sigma)))


def clt_mu_general(f, regime: AsymptoticRegime) -> float:
    """Limit GDP parameter nu * sqrt(chi^2(f)) of (p f + (1-p) Id)^T."""
    if isinstance(f, Gaussian) and f.mu > 0.0:
        # Same expression as the subsampled-Gaussian formula with 1/sigma = mu.
        return regime.nu * math.sqrt(math.expm1(f.mu * f.mu))
    return regime.nu * math.sqrt(chi_square(f))


def clt_mu_asymmetric(components: Sequence, return_sums: bool = False):
    """K / s from the asymmetric central limit theorem.

    Args:
        components: trade-off functions composed together.
        return_sums: also return the CltFunctionalSums diagnostic.

    Raises:
        DegenerateError: if the kappa2 sum is zero (no privacy loss accumulates).
    """
    cache = {}
    K = k2 = k2t = k3 = k3t = 0.0
    for f in components:
        key = id(f)
        if key not in cache:
            cache[key] = kl_functionals(f)
        v = cache[key]
        K += v.kl + v.kl_tilde
        k2 += v.kappa2
        k2t += v.kappa2_tilde
        k3 += v.kappa3
        k3t += v.kappa3_tilde
    if k2 <= 0.0:
        raise DegenerateError("kappa2 sum is zero; the composition is the identity")
    sums = CltFunctionalSums(K=K, s=math.sqrt(k2), kappa3_sum=k3,
                             s_tilde=math.sqrt(k2t), kappa3_tilde_sum=k3t)
    if return_sums:
        return sums.mu, sums
    return sums.mu
