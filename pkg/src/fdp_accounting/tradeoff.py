"""Trade-off functions and the structural operators acting on them.

A trade-off function ``f`` maps a type-I error level ``alpha`` to the smallest
achievable type-II error when testing one output distribution against
another.  Four concrete families are provided (Gaussian, EpsDelta, Identity
and a numeric Grid) plus a lazily evaluated subsampled mixture.  Every value
is immutable, so all operators here are pure functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy.special import ndtr, ndtri

from ._validation import check_alpha, check_probability, check_scalar
from .exceptions import DomainError

__all__ = [
    "Gaussian",
    "EpsDelta",
    "Identity",
    "Grid",
    "SubsampledTradeoff",
    "TradeoffFunction",
    "evaluate",
    "inverse",
    "conjugate",
    "subsample",
    "symmetrize",
    "compose_gaussian",
    "default_alpha_grid",
    "lower_convex_hull",
    "sup_distance",
]

# Slack used when checking grid invariants; sums of many rounded masses
# produce knots that violate convexity or the Id bound by a few ulps.
GRID_SLACK = 1e-12


def default_alpha_grid(n_uniform: int = 10_000, n_log: int = 100) -> np.ndarray:
    """Uniform knots on [0, 1] refined by log-spaced knots in (0, 1e-3].

    Trade-off curves with weak privacy are steep near ``alpha = 0``, which a
    uniform grid resolves poorly.
    """
    if n_uniform < 2:
        raise DomainError("n_uniform must be at least 2")
    uniform = np.linspace(0.0, 1.0, n_uniform)
    if n_log > 0:
        logs = np.geomspace(1e-12, 1e-3, n_log)
        uniform = np.union1d(uniform, logs)
    return uniform


class _Tradeoff:
    """Mixin giving every trade-off type call syntax."""

    def __call__(self, alpha):
        return evaluate(self, alpha)


@dataclass(frozen=True)
class Gaussian(_Tradeoff):
    """G_mu, the trade-off between N(0, 1) and N(mu, 1)."""

    mu: float

    def __post_init__(self):
        object.__setattr__(self, "mu", check_scalar(self.mu, "mu", lower=0.0))


@dataclass(frozen=True)
class EpsDelta(_Tradeoff):
    """The trade-off function equivalent to (eps, delta)-DP."""

    eps: float
    delta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "eps", check_scalar(self.eps, "eps", lower=0.0))
        object.__setattr__(self, "delta", check_probability(self.delta, "delta"))

    def kinks(self):
        """Breakpoints of the piecewise-linear curve in increasing order."""
        a_star = (1.0 - self.delta) / (1.0 + math.exp(self.eps)) if self.eps < 700 else 0.0
        return a_star, 1.0 - self.delta


@dataclass(frozen=True)
class Identity(_Tradeoff):
    """Perfect privacy: Id(alpha) = 1 - alpha."""


@dataclass(frozen=True, eq=False)
class Grid(_Tradeoff):
    """Piecewise-linear trade-off function through ``(alphas[i], betas[i])``.

    Args:
        alphas: strictly increasing knots starting at 0 and ending at 1.
        betas: values at the knots; non-increasing, convex and at most 1 - alpha.
        validate: set to False to skip the convexity and bound checks.
    """

    alphas: np.ndarray
    betas: np.ndarray
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        a = np.array(self.alphas, dtype=float)
        b = np.array(self.betas, dtype=float)
        if a.ndim != 1 or a.shape != b.shape or a.size < 2:
            raise DomainError("alphas and betas must be 1-d arrays of equal length >= 2")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise DomainError("grid knots must be finite")
        if a[0] != 0.0 or a[-1] != 1.0:
            raise DomainError("grid alphas must start at 0 and end at 1")
        if np.any(np.diff(a) <= 0):
            raise DomainError("grid alphas must be strictly increasing")
        if self.validate:
            _check_grid_shape(a, b)
        b = np.clip(b, 0.0, 1.0)
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "alphas", a)
        object.__setattr__(self, "betas", b)

    @classmethod
    def from_function(cls, f, alphas=None) -> "Grid":
        """Sample any trade-off function on ``alphas`` (default grid if None)."""
        if isinstance(f, Grid) and alphas is None:
            return f
        a = default_alpha_grid() if alphas is None else np.asarray(alphas, dtype=float)
        return cls(a, evaluate(f, a))


def _check_grid_shape(a, b):
    tol = GRID_SLACK
    if np.any(b < -tol) or np.any(b > 1.0 - a + tol):
        raise DomainError("grid betas must satisfy 0 <= beta <= 1 - alpha")
    if np.any(np.diff(b) > tol):
        raise DomainError("grid betas must be non-increasing")
    if a.size >= 3:
        # Each interior knot must lie on or below the chord of its neighbours.
        w = (a[1:-1] - a[:-2]) / (a[2:] - a[:-2])
        chord = b[:-2] + w * (b[2:] - b[:-2])
        if np.any(b[1:-1] - chord > tol):
            raise DomainError("grid betas must be convex in alpha")


@dataclass(frozen=True, eq=False)
class SubsampledTradeoff(_Tradeoff):
    """f_p = p * f + (1 - p) * Id, the Poisson-subsampling amplification of ``base``."""

    base: "TradeoffFunction"
    p: float

    def __post_init__(self):
        object.__setattr__(self, "p", check_probability(self.p, "p"))

    def __eq__(self, other):
        return (isinstance(other, SubsampledTradeoff) and self.p == other.p
                and _same(self.base, other.base))

    __hash__ = None


TradeoffFunction = Union[Gaussian, EpsDelta, Identity, Grid, SubsampledTradeoff]


def _same(f, g):
    if isinstance(f, Grid) and isinstance(g, Grid):
        return np.array_equal(f.alphas, g.alphas) and np.array_equal(f.betas, g.betas)
    return f == g


def _eval_array(f, a):
    if isinstance(f, Gaussian):
        if f.mu == 0.0:
            return 1.0 - a
        # -ndtri(a) keeps precision for tiny alpha where 1 - alpha rounds to 1.
        return ndtr(-ndtri(a) - f.mu)
    if isinstance(f, Identity):
        return 1.0 - a
    if isinstance(f, EpsDelta):
        one_minus = 1.0 - f.delta
        with np.errstate(over="ignore"):
            steep = one_minus - math.exp(min(f.eps, 700.0)) * a
        shallow = math.exp(-f.eps) * (one_minus - a)
        return np.maximum(0.0, np.maximum(steep, shallow))
    if isinstance(f, Grid):
        return np.interp(a, f.alphas, f.betas)
    if isinstance(f, SubsampledTradeoff):
        if f.p == 1.0:
            return _eval_array(f.base, a)
        return f.p * _eval_array(f.base, a) + (1.0 - f.p) * (1.0 - a)
    raise TypeError(f"not a trade-off function: {type(f).__name__}")


def evaluate(f: TradeoffFunction, alpha):
    """Evaluate ``f`` at a scalar or array of type-I error levels in [0, 1]."""
    a = check_alpha(alpha)
    out = np.clip(_eval_array(f, a), 0.0, 1.0)
    if out.ndim == 0:
        return float(out)
    return out


def _swap_knots(alphas, betas):
    """Knots of f^{-1} from knots of f, taking the infimum on flat pieces."""
    order = np.lexsort((alphas, betas))
    x = betas[order]
    y = alphas[order]
    keep = np.ones(x.size, dtype=bool)
    keep[1:] = x[1:] != x[:-1]
    x, y = x[keep], y[keep]
    if x[0] != 0.0:
        # f never reaches zero before alpha = 1; f^{-1}(0) = 1.
        x = np.concatenate([[0.0], x])
        y = np.concatenate([[1.0], y])
    if x[-1] != 1.0:
        # Levels at or above f(0) are met by t = 0.
        x = np.append(x, 1.0)
        y = np.append(y, 0.0)
    return x, y


def inverse(f: TradeoffFunction, alphas=None) -> TradeoffFunction:
    """Return f^{-1}(alpha) = inf{t : f(t) <= alpha}.

    Gaussian, Identity and EpsDelta curves are symmetric and returned as is.
    Other inputs are sampled on ``alphas`` (default grid) and reflected.
    """
    if isinstance(f, (Gaussian, Identity, EpsDelta)):
        return f
    if isinstance(f, SubsampledTradeoff) and (f.p == 0.0 or isinstance(f.base, Identity)):
        return Identity()
    g = f if isinstance(f, Grid) and alphas is None else Grid.from_function(f, alphas)
    x, y = _swap_knots(g.alphas, g.betas)
    return Grid(x, y, validate=False)


def _gaussian_conjugate(mu, x):
    if x >= 0.0:
        return x
    if mu == 0.0:
        return max(x, -1.0)
    eps = math.log(-x)
    # sup over alpha of alpha*x - G_mu(alpha), attained where G_mu'(alpha) = x.
    return x * float(ndtr(-eps / mu - mu / 2.0)) - float(ndtr(eps / mu - mu / 2.0))


def conjugate(f: TradeoffFunction, x: float) -> float:
    """Convex conjugate f*(x) = sup_{alpha in [0,1]} alpha*x - f(alpha)."""
    x = check_scalar(x, "x")
    if isinstance(f, Gaussian):
        return _gaussian_conjugate(f.mu, x)
    if isinstance(f, Identity):
        return max(x, -1.0)
    if isinstance(f, EpsDelta):
        knots = np.array([0.0, *f.kinks(), 1.0])
        return float(np.max(knots * x - _eval_array(f, knots)))
    if isinstance(f, Grid):
        # The objective is piecewise linear, so the supremum sits on a knot.
        return float(np.max(f.alphas * x - f.betas))
    if isinstance(f, SubsampledTradeoff):
        p = f.p
        if p == 0.0:
            return max(x, -1.0)
        return p * conjugate(f.base, (x + 1.0 - p) / p) - (1.0 - p)
    raise TypeError(f"not a trade-off function: {type(f).__name__}")


def subsample(f: TradeoffFunction, p: float) -> SubsampledTradeoff:
    """Poisson-subsampling amplification f_p = p*f + (1-p)*Id."""
    p = check_probability(p, "p")
    return SubsampledTradeoff(f, p)


def lower_convex_hull(x, y):
    """Lower convex hull of a point cloud by Andrew's monotone chain.

    Points sharing an abscissa are reduced to the lowest one first.

    Returns:
        (hx, hy) arrays of hull vertices sorted by abscissa.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    order = np.lexsort((y, x))
    x, y = x[order], y[order]
    keep = np.ones(x.size, dtype=bool)
    keep[1:] = x[1:] != x[:-1]
    xs, ys = x[keep].tolist(), y[keep].tolist()
    hx, hy = [], []
    for xi, yi in zip(xs, ys):
        while len(hx) >= 2 and ((hx[-1] - hx[-2]) * (yi - hy[-2])
                                - (hy[-1] - hy[-2]) * (xi - hx[-2])) <= 0.0:
            hx.pop()
            hy.pop()
        hx.append(xi)
        hy.append(yi)
    return np.asarray(hx), np.asarray(hy)


def _symmetric_hull(alphas, betas):
    x, y = _swap_knots(alphas, betas)
    hx, hy = lower_convex_hull(np.concatenate([alphas, x]), np.concatenate([betas, y]))
    return Grid(hx, np.minimum(hy, 1.0 - hx), validate=False)


def symmetrize(f: TradeoffFunction, alphas=None) -> TradeoffFunction:
    """Greatest convex lower bound of min{f, f^{-1}}.

    Symmetric closed forms pass through unchanged.  Anything else is sampled
    on ``alphas`` (default grid) and the lower hull of the knots of f together
    with the reflected knots of f^{-1} is returned as a Grid.
    """
    if isinstance(f, (Gaussian, Identity, EpsDelta)):
        return f
    if isinstance(f, SubsampledTradeoff) and (f.p == 0.0 or isinstance(f.base, Identity)):
        return Identity()
    g = f if isinstance(f, Grid) and alphas is None else Grid.from_function(f, alphas)
    return _symmetric_hull(g.alphas, g.betas)


def compose_gaussian(mus: Sequence[float]) -> Gaussian:
    """Composition of Gaussian trade-offs: G_{sqrt(sum mu_i^2)}."""
    mus = [check_scalar(m, "mu", lower=0.0) for m in mus]
    if not mus:
        raise DomainError("compose_gaussian needs at least one component")
    return Gaussian(math.sqrt(math.fsum(m * m for m in mus)))


def sup_distance(f: TradeoffFunction, g: TradeoffFunction, alphas=None) -> float:
    """Max-norm distance between two trade-off functions on a grid.

    Grid inputs contribute their own knots so no kink is missed.
    """
    a = default_alpha_grid() if alphas is None else np.asarray(alphas, dtype=float)
    for h in (f, g):
        if isinstance(h, Grid) and alphas is None:
            a = np.union1d(a, h.alphas)
    return float(np.max(np.abs(evaluate(f, a) - evaluate(g, a))))
