"""Euler ODE sampler: transports a feature vector down to its codeword.

Integration runs from ``t_max`` to ``t_eps`` (the velocity is singular at
0 and 1) in ``N`` uniform steps.  Each step makes one estimator evaluation,
uses it for both terms of the velocity, and subtracts ``u * dt`` since the
traversal moves against increasing time.  No randomness enters anywhere:
fixed inputs give bit-identical outputs.

``model`` arguments accept either :class:`~codeflow.estimator.EstimatorParams`
or any callable ``(x_t, condition_stack, t) -> x0_estimate``; callables
support closed-form references in analysis and tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import estimator as est
from . import kernels
from .data import FeatureRecord
from .errors import (
    DegenerateInputError,
    InvalidArgumentError,
    NumericError,
    OutOfDomainError,
)
from .schedules import (
    ScheduleParams,
    alpha,
    alpha_derivative,
    std_log_derivative,
)
from .taxonomy import TaxonomyCodebook, classify


@dataclass(frozen=True)
class SamplerConfig:
    """Euler solver settings."""

    num_steps: int = 10
    schedule: ScheduleParams = field(default_factory=ScheduleParams)
    record_trajectory: bool = False

    def __post_init__(self):
        if self.num_steps < 1:
            raise InvalidArgumentError("num_steps must be >= 1")

    def to_dict(self) -> dict:
        return {
            "num_steps": self.num_steps,
            "schedule": self.schedule.to_dict(),
            "record_trajectory": self.record_trajectory,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SamplerConfig":
        d = dict(d)
        if "schedule" in d:
            d["schedule"] = ScheduleParams.from_dict(d["schedule"])
        return cls(**d)


@dataclass(frozen=True)
class Trajectory:
    """States visited by the solver, from ``(t_max, x_1)`` down to the end.

    ``times`` is a strictly decreasing arithmetic grid of length ``N + 1``;
    ``states`` holds one row per time.
    """

    times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        if self.times.ndim != 1 or self.states.shape[0] != self.times.shape[0]:
            raise InvalidArgumentError("one state row per time required")
        if np.any(np.diff(self.times) >= 0):
            raise InvalidArgumentError("trajectory times must strictly decrease")

    def __len__(self) -> int:
        return self.times.shape[0]

    def entries(self):
        """Ordered (t, state) pairs."""
        return list(zip(self.times.tolist(), self.states))

    def nearest(self, t: float) -> tuple[int, float, np.ndarray]:
        """Row whose time is closest to ``t``."""
        i = int(np.argmin(np.abs(self.times - t)))
        return i, float(self.times[i]), self.states[i]

    def to_text(self) -> str:
        """One row per step: time then the state values, 9 significant digits."""
        lines = []
        for t, state in zip(self.times, self.states):
            vals = "\t".join(f"{v:.9g}" for v in state)
            lines.append(f"{t:.9g}\t{vals}")
        return "\n".join(lines) + "\n"


def _estimator_fn(model):
    if isinstance(model, est.EstimatorParams):
        return lambda x, xc, t: est.forward(model, x, xc, t)
    if callable(model):
        return model
    raise InvalidArgumentError(
        "model must be EstimatorParams or a callable (x_t, conditions, t) -> x0"
    )


def euler_step(
    state: np.ndarray,
    t: float,
    x1: np.ndarray,
    condition_stack: np.ndarray,
    model,
    schedule: ScheduleParams,
    dt: float,
) -> np.ndarray:
    """Advance a single record's state from ``t`` to ``t - dt``.

    Makes one estimator evaluation and uses it for both velocity terms.
    """
    if dt < 0:
        raise InvalidArgumentError("dt must be non-negative")
    if t - dt < schedule.t_eps - 1e-9:
        raise OutOfDomainError(
            f"step from t={t} by dt={dt} leaves the working interval"
        )
    schedule.check_time(t)
    fn = _estimator_fn(model)
    state = np.asarray(state, dtype=np.float64)
    if state.ndim != 1:
        raise InvalidArgumentError("euler_step() takes a single state vector")
    x1 = np.asarray(x1, dtype=np.float64)
    x0h = np.asarray(fn(state, condition_stack, t), dtype=np.float64)
    nxt = kernels.euler_update(
        np.ascontiguousarray(state[None, :]),
        np.ascontiguousarray(x0h[None, :]),
        np.ascontiguousarray(x1[None, :]),
        std_log_derivative(t),
        alpha(t, schedule.k),
        alpha_derivative(t, schedule.k),
        dt,
    )[0]
    if not np.isfinite(nxt).all():
        raise NumericError(f"non-finite state after Euler update at t={t}")
    return nxt


def _time_grid(schedule: ScheduleParams, num_steps: int) -> tuple[np.ndarray, float]:
    ts = np.linspace(schedule.t_max, schedule.t_eps, num_steps + 1)
    dt = (schedule.t_max - schedule.t_eps) / num_steps
    return ts, dt


def sample(
    x1: np.ndarray,
    condition_stack: np.ndarray,
    model,
    config: SamplerConfig,
) -> tuple[np.ndarray, Trajectory | None]:
    """Integrate one record from ``(t_max, x_1)`` to ``t_eps``.

    Returns the final state and, when requested, the full trajectory.
    """
    fn = _estimator_fn(model)
    sched = config.schedule
    x1 = np.asarray(x1, dtype=np.float64)
    if x1.ndim != 1:
        raise InvalidArgumentError("sample() takes a single record; see sample_batch")
    ts, dt = _time_grid(sched, config.num_steps)
    state = x1.copy()
    states = [state.copy()] if config.record_trajectory else None
    for n in range(config.num_steps):
        t = float(ts[n])
        x0h = np.asarray(fn(state, condition_stack, t), dtype=np.float64)
        state = kernels.euler_update(
            state[None, :],
            np.ascontiguousarray(x0h[None, :]),
            x1[None, :],
            std_log_derivative(t),
            alpha(t, sched.k),
            alpha_derivative(t, sched.k),
            dt,
        )[0]
        if not np.isfinite(state).all():
            raise NumericError(f"non-finite state after Euler step {n} (t={t})")
        if states is not None:
            states.append(state.copy())
    trajectory = None
    if states is not None:
        trajectory = Trajectory(times=ts, states=np.stack(states))
    return state, trajectory


def sample_batch(
    x1: np.ndarray,
    condition_stacks: np.ndarray,
    model,
    schedule: ScheduleParams,
    num_steps: int,
    record_trajectory: bool = False,
):
    """Vectorized :func:`sample` over rows.

    Returns the final states ``(n, L)``, or with ``record_trajectory`` the
    tuple ``(finals, times, history)`` where ``history`` has shape
    ``(num_steps + 1, n, L)``.
    """
    fn = _estimator_fn(model)
    x1 = np.ascontiguousarray(x1, dtype=np.float64)
    if x1.ndim != 2:
        raise InvalidArgumentError("sample_batch() expects (n, L) inputs")
    n_rows = x1.shape[0]
    ts, dt = _time_grid(schedule, num_steps)
    states = x1.copy()
    history = [states.copy()] if record_trajectory else None
    for n in range(num_steps):
        t = float(ts[n])
        tvec = np.full(n_rows, t)
        x0h = np.asarray(fn(states, condition_stacks, tvec), dtype=np.float64)
        states = kernels.euler_update(
            states,
            np.ascontiguousarray(x0h),
            x1,
            std_log_derivative(t),
            alpha(t, schedule.k),
            alpha_derivative(t, schedule.k),
            dt,
        )
        if not np.isfinite(states).all():
            raise NumericError(f"non-finite states after Euler step {n} (t={t})")
        if history is not None:
            history.append(states.copy())
    if history is not None:
        return states, ts, np.stack(history)
    return states


@dataclass(frozen=True)
class InferenceResult:
    predicted_index: int
    scores: np.ndarray
    trajectory: Trajectory | None


def infer_class(
    record: FeatureRecord,
    model,
    codebook: TaxonomyCodebook,
    config: SamplerConfig,
) -> InferenceResult:
    """Sample a record down to its codeword estimate and classify it.

    On a degenerate (zero-norm) final state the classification error is
    re-raised with the recorded trajectory attached as ``.trajectory`` for
    diagnosis.
    """
    final, trajectory = sample(
        record.terminal_vector, record.condition_stack, model, config
    )
    try:
        predicted, scores = classify(final, codebook)
    except DegenerateInputError as e:
        e.trajectory = trajectory
        raise
    return InferenceResult(
        predicted_index=predicted, scores=scores, trajectory=trajectory
    )
