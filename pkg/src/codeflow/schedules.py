"""Gaussian probability path: logistic mean and bridge variance schedules.

The path interpolates between a codeword ``x0`` (at ``t = 0``) and a data
vector ``x1`` (at ``t = 1``):

* mean:      ``mu_t = x0 + (x1 - x0) * alpha(t, k)`` with a logistic
  ``alpha`` of steepness ``k`` (``alpha(0) = 0``, ``alpha(1) = 1``)
* std:       ``sigma_t = sigma * sqrt(t * (1 - t))`` (zero at both ends,
  peak ``sigma / 2`` at ``t = 0.5``)
* velocity:  ``u = (sigma_t'/sigma_t) * (x_t - mu_t) + mu_t'``

``sigma_t'/sigma_t`` diverges at ``t`` in ``{0, 1}``, so working times are
clamped to ``[t_eps, t_max]`` and violations raise instead of clipping
silently.  Randomness is supplied by callers; everything here is a pure
function of its arguments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InvalidArgumentError, OutOfDomainError


@dataclass(frozen=True)
class ScheduleParams:
    """Hyperparameters of the probability path.

    ``k``: logistic steepness (> 0).  ``sigma``: maximum-noise scale (>= 0).
    ``t_eps`` and ``t_max``: working time interval, strictly inside (0, 1)
    with ``t_eps < 0.5 < t_max``.
    """

    k: float = 6.0
    sigma: float = 0.1
    t_eps: float = 0.03
    t_max: float = 0.97

    def __post_init__(self):
        if not self.k > 0:
            raise InvalidArgumentError(f"steepness k must be > 0, got {self.k}")
        if not self.sigma >= 0:
            raise InvalidArgumentError(f"sigma must be >= 0, got {self.sigma}")
        if not (0.0 < self.t_eps < 0.5):
            raise InvalidArgumentError(f"t_eps must lie in (0, 0.5), got {self.t_eps}")
        if not (0.5 < self.t_max < 1.0):
            raise InvalidArgumentError(f"t_max must lie in (0.5, 1), got {self.t_max}")

    def check_time(self, t: float) -> float:
        """Validate that ``t`` lies in the clamp interval ``[t_eps, t_max]``."""
        if not (self.t_eps <= t <= self.t_max):
            raise OutOfDomainError(
                f"t={t} outside the working interval [{self.t_eps}, {self.t_max}]"
            )
        return float(t)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "sigma": self.sigma,
            "t_eps": self.t_eps,
            "t_max": self.t_max,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScheduleParams":
        return cls(**d)


@dataclass(frozen=True)
class PathPoint:
    """Mean vector and scalar std of the path at one time."""

    t: float
    mean: np.ndarray
    std: float


def _sigmoid(x: float) -> float:
    # branch keeps exp() argument non-positive for any |x|
    if x >= 0.0:
        return 1.0 / (1.0 + np.exp(-x))
    ex = np.exp(x)
    return ex / (1.0 + ex)


def alpha(t: float, k: float) -> float:
    """Logistic interpolation coefficient of the mean schedule.

    Algebraically ``[(1 + e^{k/2}) / (1 + e^{-k(t-0.5)}) - 1] / (e^{k/2} - 1)``,
    evaluated in the overflow-safe sigmoid form
    ``(sig(k(t-0.5)) - sig(-k/2)) / (sig(k/2) - sig(-k/2))``.
    Strictly increasing in ``t`` with ``alpha(0) = 0`` and ``alpha(1) = 1``.
    """
    if not k > 0:
        raise InvalidArgumentError(f"steepness k must be > 0, got {k}")
    if not (0.0 <= t <= 1.0):
        raise OutOfDomainError(f"alpha is defined on t in [0, 1], got {t}")
    lo = _sigmoid(-0.5 * k)
    hi = _sigmoid(0.5 * k)
    return (_sigmoid(k * (t - 0.5)) - lo) / (hi - lo)


def alpha_derivative(t: float, k: float) -> float:
    """d(alpha)/dt; equals ``k * sig'(k(t-0.5)) / (sig(k/2) - sig(-k/2))``."""
    if not k > 0:
        raise InvalidArgumentError(f"steepness k must be > 0, got {k}")
    if not (0.0 <= t <= 1.0):
        raise OutOfDomainError(f"alpha is defined on t in [0, 1], got {t}")
    lo = _sigmoid(-0.5 * k)
    hi = _sigmoid(0.5 * k)
    s = _sigmoid(k * (t - 0.5))
    return k * s * (1.0 - s) / (hi - lo)


def _check_dims(x0: np.ndarray, x1: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    if x0.shape != x1.shape:
        raise InvalidArgumentError(
            f"endpoint shape mismatch: {x0.shape} vs {x1.shape}"
        )
    return x0, x1


def mean(x0: np.ndarray, x1: np.ndarray, t: float, k: float) -> np.ndarray:
    """Path mean ``x0 + (x1 - x0) * alpha(t, k)``."""
    x0, x1 = _check_dims(x0, x1)
    return x0 + (x1 - x0) * alpha(t, k)


def mean_derivative(x0: np.ndarray, x1: np.ndarray, t: float, k: float) -> np.ndarray:
    """Time derivative of the path mean, ``(x1 - x0) * alpha'(t, k)``."""
    x0, x1 = _check_dims(x0, x1)
    return (x1 - x0) * alpha_derivative(t, k)


def std(t: float, sigma: float) -> float:
    """Bridge std ``sigma * sqrt(t * (1 - t))``; symmetric about ``t = 0.5``."""
    if not sigma >= 0:
        raise InvalidArgumentError(f"sigma must be >= 0, got {sigma}")
    if not (0.0 < t < 1.0):
        raise OutOfDomainError(f"std is defined on t in (0, 1), got {t}")
    return float(sigma) * float(np.sqrt(t * (1.0 - t)))


def std_log_derivative(t: float) -> float:
    """``sigma_t'/sigma_t = (1 - 2t) / (2t(1 - t))``, independent of sigma.

    Singular at the endpoints, hence only defined on the open interval.
    """
    if not (0.0 < t < 1.0):
        raise OutOfDomainError(
            f"std_log_derivative is singular outside (0, 1), got {t}"
        )
    return (1.0 - 2.0 * t) / (2.0 * t * (1.0 - t))


def path_point(
    x0: np.ndarray, x1: np.ndarray, t: float, params: ScheduleParams
) -> PathPoint:
    """Mean and std of the path at clamp-checked time ``t``."""
    t = params.check_time(t)
    return PathPoint(t=t, mean=mean(x0, x1, t, params.k), std=std(t, params.sigma))


def perturb(
    x0: np.ndarray,
    x1: np.ndarray,
    t: float,
    params: ScheduleParams,
    noise: np.ndarray,
) -> np.ndarray:
    """Draw from the path: ``mu_t + sigma_t * noise`` for standard-normal noise."""
    t = params.check_time(t)
    x0, x1 = _check_dims(x0, x1)
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != x0.shape:
        raise InvalidArgumentError(
            f"noise shape {noise.shape} does not match endpoints {x0.shape}"
        )
    return mean(x0, x1, t, params.k) + std(t, params.sigma) * noise


def perturb_batch(
    x0: np.ndarray,
    x1: np.ndarray,
    t: np.ndarray,
    params: ScheduleParams,
    noise: np.ndarray,
) -> np.ndarray:
    """Row-wise :func:`perturb` with one time per batch row (hot path)."""
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < params.t_eps) or np.any(t > params.t_max):
        raise OutOfDomainError("batch contains times outside the working interval")
    a = np.array([alpha(ti, params.k) for ti in t])
    s = params.sigma * np.sqrt(t * (1.0 - t))
    return kernels.perturb(
        np.ascontiguousarray(x0, dtype=np.float64),
        np.ascontiguousarray(x1, dtype=np.float64),
        a,
        s,
        np.ascontiguousarray(noise, dtype=np.float64),
    )


def vector_field(
    x_t: np.ndarray,
    x_ref0: np.ndarray,
    x1: np.ndarray,
    t: float,
    params: ScheduleParams,
) -> np.ndarray:
    """Velocity of the path at state ``x_t``.

    ``x_ref0`` plays the codeword-side role: the true target during
    training-side analysis, or the estimator output at inference.
    """
    t = params.check_time(t)
    x_t = np.asarray(x_t, dtype=np.float64)
    x_ref0, x1 = _check_dims(x_ref0, x1)
    if x_t.shape != x_ref0.shape:
        raise InvalidArgumentError(
            f"state shape {x_t.shape} does not match endpoints {x_ref0.shape}"
        )
    slog = std_log_derivative(t)
    return slog * (x_t - mean(x_ref0, x1, t, params.k)) + mean_derivative(
        x_ref0, x1, t, params.k
    )
