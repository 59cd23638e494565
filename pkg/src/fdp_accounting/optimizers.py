"""Reference NoisySGD and NoisyAdam with Poisson subsampling and clipping.

Each iteration draws a Poisson subsample, clips every per-example gradient to
norm R, sums the clipped gradients, adds N(0, (sigma R)^2 I) and divides by
the realised batch size.  NoisyAdam feeds the same noisy gradient through
first and second moment recursions without bias correction.

Randomness comes from a Philox counter-based generator.  Within a step the
subsample uniforms are drawn first and the noise vector second, in index
order, so trajectories depend only on the seed.  Reductions use einsum and
fixed-order sums rather than BLAS calls so results do not depend on the
number of threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Union

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ._validation import check_probability, check_scalar, check_steps
from .accounting import AccountantQuery, PrivacyReport, clt_report
from .exceptions import DomainError

__all__ = [
    "TrainConfig",
    "OptimizerState",
    "make_rng",
    "poisson_subsample",
    "clip",
    "clipped_sum",
    "noisy_gradient",
    "noisy_sgd_step",
    "noisy_adam_step",
    "adam_update",
    "TrainResult",
    "LogisticLoss",
    "SquaredLoss",
    "run",
    "DPLogisticRegression",
]


@dataclass(frozen=True)
class TrainConfig:
    """Hyper-parameters of a noisy training run.

    ``eta`` may be a constant or a callable mapping the step index to a rate.
    """

    eta: Union[float, Callable[[int], float]] = 0.1
    R: float = 1.0
    sigma: float = 1.0
    p: float = 0.01
    T: int = 100
    beta1: float = 0.9
    beta2: float = 0.999
    xi: float = 1e-8
    seed: int = 0
    optimizer: str = "sgd"

    def __post_init__(self):
        check_scalar(self.R, "R", lower=0.0, lower_inclusive=False, allow_inf=True)
        check_scalar(self.sigma, "sigma", lower=0.0)
        check_probability(self.p, open_lower=True)
        check_steps(self.T, allow_zero=True)
        check_scalar(self.beta1, "beta1", lower=0.0, upper=1.0, upper_inclusive=False)
        check_scalar(self.beta2, "beta2", lower=0.0, upper=1.0, upper_inclusive=False)
        check_scalar(self.xi, "xi", lower=0.0, lower_inclusive=False)
        if self.optimizer not in ("sgd", "adam"):
            raise DomainError("optimizer must be 'sgd' or 'adam'")

    def learning_rate(self, t: int) -> float:
        return float(self.eta(t)) if callable(self.eta) else float(self.eta)


@dataclass(frozen=True, eq=False)
class OptimizerState:
    theta: np.ndarray
    m: np.ndarray
    u: np.ndarray
    step: int = 0

    @classmethod
    def initial(cls, theta0) -> "OptimizerState":
        theta = np.array(theta0, dtype=float)
        return cls(theta, np.zeros_like(theta), np.zeros_like(theta), 0)


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator used by every stochastic routine here."""
    return np.random.Generator(np.random.Philox(seed))


def poisson_subsample(n: int, p: float, rng: np.random.Generator) -> np.ndarray:
    """Indices included independently with probability ``p`` (possibly empty)."""
    n = check_steps(n, "n", allow_zero=True)
    p = check_probability(p, open_lower=True)
    return np.flatnonzero(rng.random(n) < p)


def _row_norms(G):
    """Overflow-safe Euclidean norms of the rows of G and the row scales used."""
    scale = np.max(np.abs(G), axis=1)
    safe = np.where(scale > 0, scale, 1.0)
    S = G / safe[:, None]
    return scale, safe, np.sqrt(np.einsum("ij,ij->i", S, S))


def clip(v, R: float) -> np.ndarray:
    """v / max(1, ||v|| / R), applied to a vector or to each row of a matrix."""
    R = check_scalar(R, "R", lower=0.0, lower_inclusive=False, allow_inf=True)
    arr = np.asarray(v, dtype=float)
    G = np.atleast_2d(arr)
    if math.isinf(R):
        return arr.copy()
    scale, safe, unit_norm = _row_norms(G)
    # ||v|| = scale * unit_norm; compare without forming the possibly infinite product.
    over = (scale > 0) & (unit_norm > R / safe)
    out = G.copy()
    if np.any(over):
        out[over] = (G[over] / safe[over, None]) * (R / unit_norm[over])[:, None]
    return out.reshape(arr.shape)


def clipped_sum(grads, R: float) -> np.ndarray:
    """Sum of clipped per-example gradients; sensitivity R under add/remove."""
    G = np.atleast_2d(np.asarray(grads, dtype=float))
    return np.sum(clip(G, R), axis=0)


def noisy_gradient(grads, cfg: TrainConfig, rng: np.random.Generator, dim: int):
    """(sum of clipped gradients + sigma R N(0, I)) / |batch|, or None if empty.

    The noise is drawn even for an empty batch so the random stream of later
    steps does not depend on batch sizes.
    """
    noise = rng.standard_normal(dim)
    G = np.asarray(grads, dtype=float).reshape(-1, dim)
    if G.shape[0] == 0:
        return None
    total = clipped_sum(G, cfg.R)
    if cfg.sigma > 0:
        total = total + (cfg.sigma * cfg.R) * noise
    return total / G.shape[0]


def noisy_sgd_step(state: OptimizerState, grads, cfg: TrainConfig,
                   rng: np.random.Generator) -> OptimizerState:
    """One NoisySGD update from the per-example gradients of the sampled batch."""
    v = noisy_gradient(grads, cfg, rng, state.theta.size)
    if v is None:
        return replace(state, step=state.step + 1)
    theta = state.theta - cfg.learning_rate(state.step) * v
    return replace(state, theta=theta, step=state.step + 1)


def adam_update(state: OptimizerState, v, cfg: TrainConfig) -> OptimizerState:
    """Moment recursions and weight update for a given noisy gradient ``v``."""
    m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * v
    u = cfg.beta2 * state.u + (1.0 - cfg.beta2) * (v * v)
    w = m / (np.sqrt(u) + cfg.xi)
    theta = state.theta - cfg.learning_rate(state.step) * w
    return OptimizerState(theta, m, u, state.step + 1)


def noisy_adam_step(state: OptimizerState, grads, cfg: TrainConfig,
                    rng: np.random.Generator) -> OptimizerState:
    """One NoisyAdam update; the state is post-processing of the noisy gradient."""
    v = noisy_gradient(grads, cfg, rng, state.theta.size)
    if v is None:
        return replace(state, step=state.step + 1)
    return adam_update(state, v, cfg)


class LogisticLoss:
    """Per-example logistic loss with labels in {0, 1} and an optional bias column."""

    def value(self, theta, X, y):
        z = np.einsum("ij,j->i", X, theta)
        return float(np.mean(np.logaddexp(0.0, z) - y * z))

    def per_example_gradients(self, theta, X, y):
        z = np.einsum("ij,j->i", X, theta)
        r = 0.5 * (1.0 + np.tanh(0.5 * z)) - y
        return X * r[:, None]


class SquaredLoss:
    """Per-example loss 0.5 * (x . theta - y)^2."""

    def value(self, theta, X, y):
        r = np.einsum("ij,j->i", X, theta) - y
        return float(0.5 * np.mean(r * r))

    def per_example_gradients(self, theta, X, y):
        r = np.einsum("ij,j->i", X, theta) - y
        return X * r[:, None]


@dataclass
class TrainResult:
    theta: np.ndarray
    report: PrivacyReport
    losses: list = field(default_factory=list)
    batch_sizes: list = field(default_factory=list)

    def __iter__(self):
        # Allows ``theta, report = run(...)``.
        return iter((self.theta, self.report))


def run(dataset, loss, cfg: TrainConfig, delta: float = 1e-5, theta0=None,
        record_loss: bool = False) -> TrainResult:
    """Train for ``cfg.T`` steps and attach the CLT privacy report.

    Args:
        dataset: pair (X, y) with X of shape (n, d).
        loss: object exposing ``per_example_gradients(theta, X, y)`` (and
            ``value`` when ``record_loss`` is set).
        cfg: training configuration.
        delta: failure probability at which eps is reported.
        theta0: initial weights, zeros by default.
        record_loss: evaluate the full-data loss after each step.
    """
    X, y = dataset
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0 or y.shape != (X.shape[0],):
        raise DomainError("dataset must be a non-empty (X, y) pair with matching rows")
    n, d = X.shape
    state = OptimizerState.initial(np.zeros(d) if theta0 is None else theta0)
    rng = make_rng(cfg.seed)
    step = noisy_adam_step if cfg.optimizer == "adam" else noisy_sgd_step
    result = TrainResult(state.theta, None)
    for _ in range(cfg.T):
        idx = poisson_subsample(n, cfg.p, rng)
        grads = loss.per_example_gradients(state.theta, X[idx], y[idx])
        state = step(state, grads, cfg, rng)
        result.batch_sizes.append(int(idx.size))
        if record_loss:
            result.losses.append(loss.value(state.theta, X, y))
    result.theta = state.theta
    result.report = clt_report(AccountantQuery(sigma=cfg.sigma, p=cfg.p, T=cfg.T, delta=delta))
    return result


class DPLogisticRegression(ClassifierMixin, BaseEstimator):
    """Binary logistic regression trained with NoisySGD or NoisyAdam.

    After ``fit`` the attribute ``privacy_report_`` holds the CLT accounting
    of the run and ``coef_`` / ``intercept_`` the learned weights.
    """

    def __init__(self, eta=0.5, R=1.0, sigma=1.0, p=0.05, T=400, optimizer="sgd",
                 beta1=0.9, beta2=0.999, xi=1e-8, delta=1e-5, fit_intercept=True,
                 random_state=0):
        self.eta = eta
        self.R = R
        self.sigma = sigma
        self.p = p
        self.T = T
        self.optimizer = optimizer
        self.beta1 = beta1
        self.beta2 = beta2
        self.xi = xi
        self.delta = delta
        self.fit_intercept = fit_intercept
        self.random_state = random_state

    def _design(self, X):
        if self.fit_intercept:
            return np.hstack([X, np.ones((X.shape[0], 1))])
        return X

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float)
        self.classes_, y_idx = np.unique(y, return_inverse=True)
        if self.classes_.size != 2:
            raise ValueError("DPLogisticRegression supports exactly two classes")
        cfg = TrainConfig(eta=self.eta, R=self.R, sigma=self.sigma, p=self.p, T=self.T,
                          beta1=self.beta1, beta2=self.beta2, xi=self.xi,
                          seed=int(self.random_state or 0), optimizer=self.optimizer)
        res = run((self._design(X), y_idx.astype(float)), LogisticLoss(), cfg, delta=self.delta)
        w = res.theta
        self.coef_ = w[:-1].reshape(1, -1) if self.fit_intercept else w.reshape(1, -1)
        self.intercept_ = np.array([w[-1] if self.fit_intercept else 0.0])
        self.privacy_report_ = res.report
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=float)
        return np.einsum("ij,j->i", X, self.coef_[0]) + self.intercept_[0]

    def predict_proba(self, X):
        z = self.decision_function(X)
        p1 = 0.5 * (1.0 + np.tanh(0.5 * z))
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X):
        return self.classes_[(self.decision_function(X) > 0).astype(int)]
