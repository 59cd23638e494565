"""Argument checking shared by the public functions and estimators."""

import math
import numbers

import numpy as np

from .exceptions import DomainError, SigmaFloorError

# Below this noise scale exp(1/sigma^2) exceeds 1e10 and the CLT closed forms
# and numeric composition are no longer trustworthy.
SIGMA_FLOOR = 0.2


def check_scalar(value, name, *, lower=None, upper=None, lower_inclusive=True,
                 upper_inclusive=True, allow_inf=False):
    """Return ``value`` as a float after range checks, raising DomainError."""
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise DomainError(f"{name} must be a real number, got {value!r}")
    value = float(value)
    if math.isnan(value) or (math.isinf(value) and not allow_inf):
        raise DomainError(f"{name} must be finite, got {value}")
    if lower is not None:
        if value < lower or (value == lower and not lower_inclusive):
            op = ">=" if lower_inclusive else ">"
            raise DomainError(f"{name} must be {op} {lower}, got {value}")
    if upper is not None:
        if value > upper or (value == upper and not upper_inclusive):
            op = "<=" if upper_inclusive else "<"
            raise DomainError(f"{name} must be {op} {upper}, got {value}")
    return value


def check_probability(p, name="p", *, open_lower=False, open_upper=False):
    return check_scalar(p, name, lower=0.0, upper=1.0,
                        lower_inclusive=not open_lower,
                        upper_inclusive=not open_upper)


def check_steps(T, name="T", *, allow_zero=False):
    if isinstance(T, bool) or not isinstance(T, numbers.Integral):
        if isinstance(T, numbers.Real) and float(T).is_integer():
            T = int(T)
        else:
            raise DomainError(f"{name} must be an integer, got {T!r}")
    T = int(T)
    if T < 0 or (T == 0 and not allow_zero):
        raise DomainError(f"{name} must be a positive integer, got {T}")
    return T


def check_sigma(sigma, name="sigma", *, enforce_floor=True):
    """Validate a noise multiplier; ``inf`` is accepted and means no loss."""
    sigma = check_scalar(sigma, name, lower=0.0, lower_inclusive=False,
                         allow_inf=True)
    if enforce_floor and sigma < SIGMA_FLOOR:
        raise SigmaFloorError(
            f"{name}={sigma} is below the supported floor {SIGMA_FLOOR}; "
            "exp(1/sigma^2) overflows the closed-form accountant")
    return sigma


def check_alpha(alpha):
    """Coerce type-I error levels to an array and enforce [0, 1]."""
    arr = np.asarray(alpha, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise DomainError("alpha must lie in [0, 1]")
    return arr
