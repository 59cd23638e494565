"""Numeric T-fold composition of the subsampled Gaussian mechanism.

The single-step experiment is P = N(0, 1) against the mixture
GM = p N(1/sigma, 1) + (1 - p) N(0, 1), whose trade-off function is
p G_{1/sigma} + (1 - p) Id.  The privacy loss L = log dGM/dP is discretised
onto a uniform grid, composed by FFT convolution with repeated squaring, and
converted back into a trade-off curve.

Discretisation is pessimistic: every Q-mass sits at a loss no smaller than
where it came from on the supporting-line envelope of the true curve, so the
resulting trade-off curve lies below the exact one.  Truncation moves mass
either to an infinite-loss atom or up onto the lowest grid point, which are
both pessimistic as well.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
from scipy.signal import fftconvolve
from scipy.special import logsumexp, ndtr, ndtri

from ._validation import check_probability, check_scalar, check_sigma, check_steps
from .duality import delta_from_eps
from .exceptions import DomainError, TailMassError
from .functionals import clt_mu_subsampled_gaussian
from .moments import MomentsAccountantConfig, delta_ma
from .tradeoff import Grid, _swap_knots, lower_convex_hull

__all__ = [
    "PrivacyLossDistribution",
    "GapCheck",
    "pld_from_subsampled_gaussian",
    "self_compose",
    "compose",
    "tradeoff_from_pld",
    "pld_to_tradeoff",
    "compose_subsampled_gaussian",
    "gap_check",
    "DEFAULT_SPACING",
    "TAIL_BUDGET",
]

DEFAULT_SPACING = 1e-4
TAIL_BUDGET = 1e-10
# Mass outside the single-step grid, lumped into its end points.
SINGLE_STEP_TAIL = 1e-16
# Chernoff level used to size the window kept after each convolution.
WINDOW_TAIL = 1e-13
_CGF_LAMBDAS = np.geomspace(1e-2, 1e3, 300)


@dataclass(frozen=True, eq=False)
class PrivacyLossDistribution:
    """Distribution under the alternative of the privacy loss on a uniform grid.

    Attributes:
        lower_index: integer k such that ``masses[i]`` sits at loss (k + i) * spacing.
        spacing: grid step of the loss.
        masses: probability of each grid loss under the alternative.
        tail_mass_high: probability of infinite loss (test rejects with certainty).
        tail_mass_low: probability dropped below the grid; always zero because
            low-loss mass is folded onto the lowest grid point instead.
        truncated_mass: part of ``tail_mass_high`` created by window truncation.
        folded_mass: probability folded onto the lowest grid point.
        direction: "add" encodes T(N(0,1), GM); "remove" encodes T(GM, N(0,1)).
        compositions: number of single-step factors composed.
    """

    lower_index: int
    spacing: float
    masses: np.ndarray
    tail_mass_high: float
    direction: str
    compositions: int = 1
    tail_mass_low: float = 0.0
    truncated_mass: float = 0.0
    folded_mass: float = 0.0

    def __post_init__(self):
        m = np.asarray(self.masses, dtype=float)
        if m.ndim != 1 or m.size == 0 or not np.all(np.isfinite(m)) or np.any(m < 0):
            raise DomainError("masses must be a non-empty array of finite non-negative values")
        m.setflags(write=False)
        object.__setattr__(self, "masses", m)
        if self.direction not in ("add", "remove"):
            raise DomainError("direction must be 'add' or 'remove'")

    @property
    def grid_origin(self) -> float:
        return self.lower_index * self.spacing

    @property
    def losses(self) -> np.ndarray:
        return (self.lower_index + np.arange(self.masses.size)) * self.spacing

    @property
    def total_mass(self) -> float:
        return math.fsum(self.masses.tolist()) + self.tail_mass_high + self.tail_mass_low

    def mean(self) -> float:
        """Expected finite loss (the infinite atom is excluded)."""
        return float(np.dot(self.masses, self.losses))


class GapCheck(NamedTuple):
    delta_ma: float
    delta_clt: float
    lower_bound: float

    @property
    def gap(self) -> float:
        return self.delta_ma - self.delta_clt

    def satisfied(self, tol: float = 1e-4) -> bool:
        return self.gap >= self.lower_bound - tol


def _interval_mass(a, b, m):
    """P(a < X <= b) for X ~ N(m, 1), using the tail that avoids cancellation."""
    a = a - m
    b = b - m
    return np.where(a > 0, ndtr(-a) - ndtr(-b), ndtr(b) - ndtr(a))


def pld_from_subsampled_gaussian(sigma: float, p: float, spacing: float = DEFAULT_SPACING,
                                 direction: str = "add",
                                 tail: float = SINGLE_STEP_TAIL) -> PrivacyLossDistribution:
    """Single-step privacy loss distribution of the subsampled Gaussian mechanism.

    Args:
        sigma: noise multiplier (at least the supported floor).
        p: sampling probability in (0, 1].
        spacing: loss grid step.
        direction: "add" or "remove" adjacency.
        tail: normal tail probability beyond which the mechanism output is
            lumped into the grid end points.

    Raises:
        SigmaFloorError: for sigma below the floor.
        TailMassError: if the infinite-loss atom exceeds the tail budget.
    """
    s = check_sigma(sigma)
    p = check_probability(p, open_lower=True)
    h = check_scalar(spacing, "spacing", lower=0.0, lower_inclusive=False)
    if direction not in ("add", "remove"):
        raise DomainError("direction must be 'add' or 'remove'")
    if math.isinf(s):
        raise DomainError("sigma = inf has no privacy loss; use Identity directly")
    log1mp = math.log1p(-p) if p < 1.0 else -math.inf
    logp = math.log(p)
    c = 1.0 / (2.0 * s * s)

    def loss(x):
        # log dGM/dP at mechanism output x, increasing in x.
        return np.logaddexp(log1mp, logp + x / s - c)

    def x_of_loss(l):
        l = np.asarray(l, dtype=float)
        if p == 1.0:
            return s * l + 1.0 / (2.0 * s)
        with np.errstate(divide="ignore", invalid="ignore"):
            v = s * (np.log(-np.expm1(log1mp - l)) + l - logp) + 1.0 / (2.0 * s)
        return np.where(l <= log1mp, -np.inf, v)

    z = -float(ndtri(tail))
    x_lo, x_hi = -z, 1.0 / s + z
    if direction == "add":
        lmin = float(loss(x_lo)) if p == 1.0 else max(float(loss(x_lo)), log1mp)
        lmax = float(loss(x_hi))
    else:
        lmin = -float(loss(x_hi))
        lmax = -log1mp if p < 1.0 else -float(loss(x_lo))
    k0, k1 = math.floor(lmin / h), math.ceil(lmax / h)
    l = np.arange(k0, k1 + 1) * h
    mu = 1.0 / s
    if direction == "add":
        xb = x_of_loss(l)
        lo_b, hi_b = xb[:-1], xb[1:]
        dP = _interval_mass(lo_b, hi_b, 0.0)
        dQ = p * _interval_mass(lo_b, hi_b, mu) + (1.0 - p) * dP
        q_below = p * ndtr(xb[0] - mu) + (1.0 - p) * ndtr(xb[0])
        p_above = ndtr(-xb[-1])
        q_above = p * ndtr(mu - xb[-1]) + (1.0 - p) * p_above
    else:
        # Null is GM and alternative is N(0, 1); the loss is -log dGM/dP.
        xb = x_of_loss(-l)
        lo_b, hi_b = xb[1:], xb[:-1]
        dQ = _interval_mass(lo_b, hi_b, 0.0)
        dP = p * _interval_mass(lo_b, hi_b, mu) + (1.0 - p) * dQ
        q_below = ndtr(-xb[0])
        p_above = p * ndtr(xb[-1] - mu) + (1.0 - p) * ndtr(xb[-1])
        q_above = ndtr(xb[-1])
    # Split the null mass of each loss interval between its two end points so
    # that the alternative mass matches the interval exactly.
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        theta = (dQ * np.exp(-l[:-1]) / dP - 1.0) / math.expm1(h)
    theta = np.where(dP > 0, np.clip(theta, 0.0, 1.0), 0.0)
    a = np.zeros(l.size)
    a[:-1] += (1.0 - theta) * dP
    a[1:] += theta * dP
    a[0] += float(q_below) * math.exp(-l[0])
    a[-1] += float(p_above)
    masses = a * np.exp(l)
    top = max(float(q_above) - math.exp(l[-1]) * float(p_above), 0.0)
    if top > TAIL_BUDGET:
        raise TailMassError(f"infinite-loss mass {top:.3g} exceeds the budget {TAIL_BUDGET}")
    return PrivacyLossDistribution(lower_index=k0, spacing=h, masses=masses,
                                   tail_mass_high=top, direction=direction)


def _cgf(pld, lams):
    nz = pld.masses > 0
    l = pld.losses[nz]
    return logsumexp(lams[:, None] * l[None, :] + np.log(pld.masses[nz])[None, :], axis=1)


def _truncate(k, m, top, trunc, folded, window, h):
    lo, up = window
    kl, ku = math.floor(lo / h), math.ceil(up / h)
    i0 = max(kl - k, 0)
    i1 = min(ku - k, m.size - 1)
    low = float(np.sum(m[:i0]))
    high = float(np.sum(m[i1 + 1:]))
    kept = m[i0:i1 + 1].copy()
    kept[0] += low
    return k + i0, kept, top + high, trunc + high, folded + low


def _convolve(x, y):
    k = x[0] + y[0]
    m = np.clip(fftconvolve(x[1], y[1]), 0.0, None)
    top = x[2] + y[2] - x[2] * y[2]
    return k, m, top, x[3] + y[3], x[4] + y[4]


def self_compose(pld: PrivacyLossDistribution, T: int,
                 tail_budget: float = TAIL_BUDGET) -> PrivacyLossDistribution:
    """T-fold composition by repeated squaring with FFT convolution.

    After every convolution the grid is cut to a window whose Chernoff tail
    bound (from the single-step cumulant generating function) is below
    ``WINDOW_TAIL`` on each side.

    Raises:
        TailMassError: if the truncated probability exceeds ``tail_budget``.
    """
    T = check_steps(T)
    if T == 1:
        return pld
    h = pld.spacing
    kp = _cgf(pld, _CGF_LAMBDAS)
    km = _cgf(pld, -_CGF_LAMBDAS)
    log_tau = math.log(WINDOW_TAIL)

    def window(n):
        up = float(np.min((n * kp - log_tau) / _CGF_LAMBDAS))
        lo = float(np.max((log_tau - n * km) / _CGF_LAMBDAS))
        return lo, up

    base = (pld.lower_index, np.asarray(pld.masses), pld.tail_mass_high,
            pld.truncated_mass, pld.folded_mass)
    result = None
    n_base, n_res, n = 1, 0, T
    while n:
        if n & 1:
            if result is None:
                result, n_res = base, n_base
            else:
                n_res += n_base
                result = _truncate(*_convolve(result, base), window(n_res), h)
        n >>= 1
        if n:
            n_base *= 2
            base = _truncate(*_convolve(base, base), window(n_base), h)
    k, m, top, trunc, folded = result
    if trunc > tail_budget:
        raise TailMassError(f"truncated mass {trunc:.3g} exceeds the budget {tail_budget}")
    return replace(pld, lower_index=k, masses=m, tail_mass_high=top, truncated_mass=trunc,
                   folded_mass=folded, compositions=pld.compositions * T)


def compose(first: PrivacyLossDistribution,
            second: PrivacyLossDistribution) -> PrivacyLossDistribution:
    """Loss distribution of two independent mechanisms run one after the other.

    Both inputs must share the grid spacing and direction.  No truncation is
    applied, so the support grows to the sum of the two supports.
    """
    if first.direction != second.direction:
        raise DomainError("cannot compose loss distributions of different directions")
    if not math.isclose(first.spacing, second.spacing, rel_tol=1e-12):
        raise DomainError("loss distributions must share the grid spacing")
    a = (first.lower_index, np.asarray(first.masses), first.tail_mass_high,
         first.truncated_mass, first.folded_mass)
    b = (second.lower_index, np.asarray(second.masses), second.tail_mass_high,
         second.truncated_mass, second.folded_mass)
    k, m, top, trunc, folded = _convolve(a, b)
    return replace(first, lower_index=k, masses=m, tail_mass_high=top, truncated_mass=trunc,
                   folded_mass=folded, compositions=first.compositions + second.compositions)


def _tradeoff_knots(pld):
    """Type-I / type-II error pairs of the likelihood-ratio tests on the grid."""
    m = pld.masses
    null = m * np.exp(-pld.losses)
    top = pld.tail_mass_high
    alpha = np.concatenate([[0.0, 0.0], np.cumsum(null[::-1]), [1.0]])
    beta = np.concatenate([[1.0, 1.0 - top], (1.0 - top) - np.cumsum(m[::-1]), [0.0]])
    return np.clip(alpha, 0.0, 1.0), np.clip(beta, 0.0, 1.0)


def tradeoff_from_pld(pld: PrivacyLossDistribution) -> Grid:
    """Trade-off curve of a single direction as a Grid."""
    a, b = _tradeoff_knots(pld)
    hx, hy = lower_convex_hull(a, b)
    return Grid(hx, np.minimum(hy, 1.0 - hx), validate=False)


def pld_to_tradeoff(pld_add: PrivacyLossDistribution,
                    pld_remove: PrivacyLossDistribution) -> Grid:
    """Symmetrised trade-off min{f, f^{-1}}** covering both adjacency directions."""
    if pld_add.compositions != pld_remove.compositions:
        raise DomainError("both directions must be composed the same number of times")
    xs, ys = [], []
    for pld in (pld_add, pld_remove):
        a, b = _tradeoff_knots(pld)
        hx, hy = lower_convex_hull(a, b)
        sx, sy = _swap_knots(hx, hy)
        xs += [hx, sx]
        ys += [hy, sy]
    hx, hy = lower_convex_hull(np.concatenate(xs), np.concatenate(ys))
    return Grid(hx, np.minimum(hy, 1.0 - hx), validate=False)


def compose_subsampled_gaussian(sigma: float, p: float, T: int,
                                spacing: float = DEFAULT_SPACING,
                                symmetric: bool = True) -> Grid:
    """Trade-off of T subsampled Gaussian steps computed by the numeric oracle.

    Args:
        symmetric: return min{f, f^{-1}}** over both directions; otherwise the
            single "add" direction f = (p G_{1/sigma} + (1-p) Id)^T.
    """
    add = self_compose(pld_from_subsampled_gaussian(sigma, p, spacing, "add"), T)
    if not symmetric:
        return tradeoff_from_pld(add)
    rem = self_compose(pld_from_subsampled_gaussian(sigma, p, spacing, "remove"), T)
    return pld_to_tradeoff(add, rem)


def gap_check(sigma: float, p: float, T: int, eps: float, mode: str = "grid") -> GapCheck:
    """Compare delta_MA(eps) with the CLT delta and its asymptotic lower gap.

    The gap delta_MA - delta_CLT is expected to be at least
    e^eps * Phi(-eps/mu - mu/2) for large T with p sqrt(T) held fixed.
    """
    eps = check_scalar(eps, "eps", lower=0.0)
    mu = clt_mu_subsampled_gaussian(p, T, sigma)
    d_ma = delta_ma(eps, MomentsAccountantConfig(sigma, p, T), mode)
    d_clt = delta_from_eps(mu, eps)
    if mu == 0.0:
        bound = 0.0
    else:
        bound = math.exp(eps) * float(ndtr(-eps / mu - mu / 2.0))
    return GapCheck(d_ma, d_clt, bound)
