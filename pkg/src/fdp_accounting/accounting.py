"""End-to-end privacy reports for a noisy training run."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from scipy import optimize

from ._validation import check_probability, check_scalar, check_sigma, check_steps
from .composition import DEFAULT_SPACING, compose_subsampled_gaussian
from .duality import delta_from_eps, eps_from_delta, steps_from_epochs
from .exceptions import DomainError
from .functionals import clt_mu_asymmetric, clt_mu_subsampled_gaussian
from .moments import MomentsAccountantConfig, delta_ma, eps_ma
from .tradeoff import Gaussian, compose_gaussian, conjugate, subsample

__all__ = [
    "AccountantQuery",
    "PrivacyReport",
    "clt_report",
    "ma_report",
    "oracle_report",
    "delta_from_tradeoff",
    "eps_from_tradeoff",
]


@dataclass(frozen=True)
class AccountantQuery:
    """A private training run to account for.

    Exactly one of ``p`` or (``n``, ``batch``) and one of ``T`` or ``epochs``
    must be given, and at least one of ``delta`` or ``eps``.
    """

    sigma: float
    p: Optional[float] = None
    T: Optional[int] = None
    delta: Optional[float] = None
    eps: Optional[float] = None
    n: Optional[int] = None
    batch: Optional[int] = None
    epochs: Optional[float] = None

    def __post_init__(self):
        if self.p is None:
            if self.n is None or self.batch is None:
                raise DomainError("give either p or both n and batch")
            n = check_steps(self.n, "n")
            b = check_steps(self.batch, "batch")
            if b > n:
                raise DomainError("batch must not exceed n")
            object.__setattr__(self, "p", b / n)
        elif self.n is not None or self.batch is not None:
            raise DomainError("give either p or n and batch, not both")
        object.__setattr__(self, "p", check_probability(self.p, open_lower=True))
        if self.T is None:
            if self.epochs is None:
                raise DomainError("give either T or epochs")
            object.__setattr__(self, "T", steps_from_epochs(self.epochs, self.p))
        elif self.epochs is not None:
            raise DomainError("give either T or epochs, not both")
        object.__setattr__(self, "T", check_steps(self.T, allow_zero=True))
        object.__setattr__(self, "sigma", check_scalar(self.sigma, "sigma", lower=0.0,
                                                        allow_inf=True))
        if self.delta is None and self.eps is None:
            raise DomainError("give delta or eps")
        if self.delta is not None:
            object.__setattr__(self, "delta", check_probability(
                self.delta, "delta", open_lower=True, open_upper=True))
        if self.eps is not None:
            object.__setattr__(self, "eps", check_scalar(self.eps, "eps", lower=0.0))

    def inputs(self) -> dict:
        return {"n": self.n, "batch": self.batch, "p": self.p, "sigma": self.sigma,
                "epochs": self.epochs, "T": self.T, "delta": self.delta, "eps": self.eps}


@dataclass(frozen=True)
class PrivacyReport:
    """Accounting outcome.

    Attributes:
        method: "clt", "ma" or "oracle".
        mu: GDP parameter (CLT only; ``inf`` flags a non-private run).
        eps: privacy loss at ``delta``.
        delta: failure probability at ``eps``.
        diagnostics: method-specific extras.
    """

    method: str
    mu: Optional[float]
    eps: float
    delta: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def private(self) -> bool:
        return not (self.mu is not None and math.isinf(self.mu))

    def as_dict(self) -> dict:
        return {"method": self.method, "mu": self.mu, "eps": self.eps, "delta": self.delta,
                "diagnostics": dict(self.diagnostics)}


def _non_private(method, query):
    return PrivacyReport(method, math.inf, math.inf if query.delta is not None else query.eps,
                         1.0 if query.delta is None else query.delta,
                         {"non_private": True})


def clt_report(query: AccountantQuery, kappa3: bool = False) -> PrivacyReport:
    """Central-limit accounting: mu_CLT, then eps at delta (or delta at eps).

    Args:
        query: the run.
        kappa3: also compute the third-moment sums of the limit theorem as a
            diagnostic of how well the limit approximates this finite T.
    """
    if query.sigma == 0.0:
        return _non_private("clt", query)
    check_sigma(query.sigma)
    if query.p == 1.0:
        # Without subsampling every step is exactly G_{1/sigma}; no limit needed.
        mu = compose_gaussian([1.0 / query.sigma] * max(query.T, 1)).mu if query.T else 0.0
    else:
        mu = clt_mu_subsampled_gaussian(query.p, query.T, query.sigma)
    if query.delta is not None:
        eps, delta = eps_from_delta(mu, query.delta), query.delta
    else:
        eps, delta = query.eps, delta_from_eps(mu, query.eps)
    diag = {"T": query.T, "nu": query.p * math.sqrt(query.T),
            "exact_gaussian": query.p == 1.0}
    if kappa3 and query.T > 0 and not math.isinf(query.sigma) and query.p < 1.0:
        f = subsample(Gaussian(1.0 / query.sigma), query.p)
        _, sums = clt_mu_asymmetric([f], return_sums=True)
        diag["kappa3_sum"] = query.T * sums.kappa3_sum
        diag["kappa3_tilde_sum"] = query.T * sums.kappa3_tilde_sum
    return PrivacyReport("clt", mu, eps, delta, diag)


def ma_report(query: AccountantQuery, mode: str = "grid") -> PrivacyReport:
    """Moments-accountant (eps, delta) for the run."""
    if query.sigma == 0.0:
        return _non_private("ma", query)
    cfg = MomentsAccountantConfig(query.sigma, query.p, query.T)
    if query.delta is not None:
        eps, delta = eps_ma(query.delta, cfg, mode), query.delta
    else:
        eps, delta = query.eps, delta_ma(query.eps, cfg, mode)
    return PrivacyReport("ma", None, eps, delta, {"mode": mode, "orders": len(cfg.lambda_grid)})


def delta_from_tradeoff(f, eps: float) -> float:
    """Smallest delta such that an f-DP mechanism is (eps, delta)-DP: 1 + f*(-e^eps)."""
    return min(max(1.0 + conjugate(f, -math.exp(eps)), 0.0), 1.0)


def eps_from_tradeoff(f, delta: float, eps_max: float = 200.0) -> float:
    """Smallest eps with delta_from_tradeoff(f, eps) <= delta."""
    def g(e):
        return delta_from_tradeoff(f, e) - delta

    if g(0.0) <= 0.0:
        return 0.0
    if g(eps_max) > 0.0:
        return math.inf
    return optimize.brentq(g, 0.0, eps_max, xtol=1e-10)


def oracle_report(query: AccountantQuery, spacing: float = DEFAULT_SPACING) -> PrivacyReport:
    """Exact-numeric accounting from the composed privacy loss distribution."""
    if query.sigma == 0.0:
        return _non_private("oracle", query)
    check_sigma(query.sigma)
    if query.T == 0 or math.isinf(query.sigma):
        return PrivacyReport("oracle", None, 0.0, query.delta or 0.0, {"spacing": spacing})
    f = compose_subsampled_gaussian(query.sigma, query.p, query.T, spacing)
    if query.delta is not None:
        eps, delta = eps_from_tradeoff(f, query.delta), query.delta
    else:
        eps, delta = query.eps, delta_from_tradeoff(f, query.eps)
    return PrivacyReport("oracle", None, eps, delta,
                         {"spacing": spacing, "knots": int(f.alphas.size)})
