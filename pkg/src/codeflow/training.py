"""Training loop: time sampling, perturbation, loss, Adam, checkpoints.

Runs are bit-exactly reproducible: parameters and optimizer moments stay
on the float32 grid, batch composition is a pure function of (seed, step),
and the noise generator state is serialized into train-state checkpoints,
so a resumed run continues the loss sequence of an uninterrupted one.
Wall-clock fields in the metrics log are diagnostics and exempt from the
replay guarantee.
"""

from __future__ import annotations

import hashlib
import json
import pathlib
import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels, sampler
from .checkpoint import (
    KIND_TRAIN_STATE,
    read_checkpoint,
    save_model,
    write_checkpoint,
)
from .data import FeatureDataset, FeatureRecord
from .errors import InvalidArgumentError, NumericError
from .estimator import EstimatorConfig, EstimatorParams, loss_and_gradients
from .schedules import ScheduleParams, perturb_batch
from .taxonomy import TaxonomyCodebook, classify_batch


@dataclass(frozen=True)
class TrainConfig:
    """Optimization hyperparameters (adam-style, optional norm clipping)."""

    batch_size: int = 64
    total_steps: int = 2000
    learning_rate: float = 1e-3
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    grad_clip: float = 1.0  # 0 disables clipping
    schedule: ScheduleParams = field(default_factory=ScheduleParams)
    eval_every: int = 500
    checkpoint_every: int = 0  # 0 = final checkpoint only
    val_num_steps: int = 1  # sampler steps for validation accuracy

    def __post_init__(self):
        if self.batch_size < 1:
            raise InvalidArgumentError("batch_size must be >= 1")
        if self.total_steps < 1:
            raise InvalidArgumentError("total_steps must be >= 1")
        # zero is tolerated as a diagnostic no-op optimizer
        if self.learning_rate < 0:
            raise InvalidArgumentError("learning_rate must be non-negative")

    def to_dict(self) -> dict:
        d = {
            "batch_size": self.batch_size,
            "total_steps": self.total_steps,
            "learning_rate": self.learning_rate,
            "seed": self.seed,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "adam_eps": self.adam_eps,
            "grad_clip": self.grad_clip,
            "eval_every": self.eval_every,
            "checkpoint_every": self.checkpoint_every,
            "val_num_steps": self.val_num_steps,
        }
        d["schedule"] = self.schedule.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "schedule" in d:
            d["schedule"] = ScheduleParams.from_dict(d["schedule"])
        return cls(**d)


@dataclass
class TrainState:
    """Mutable optimizer state owned by a single training loop."""

    params: EstimatorParams
    adam_m: np.ndarray
    adam_v: np.ndarray
    step: int
    rng: np.random.Generator
    last_grad_norm: float = 0.0
    last_clip_coef: float = 1.0

    @classmethod
    def fresh(cls, est_config: EstimatorConfig, config: TrainConfig) -> "TrainState":
        params = EstimatorParams.initialize(est_config, seed_for(config.seed, "init"))
        n = params.num_params
        rng = np.random.default_rng(seed_for(config.seed, "steps"))
        return cls(params=params, adam_m=np.zeros(n), adam_v=np.zeros(n), step=0, rng=rng)

    def save(self, path) -> None:
        extra = {
            "step": self.step,
            "rng_state": self.rng.bit_generator.state,
        }
        write_checkpoint(
            path,
            self.params.config,
            {"params": self.params.flat, "adam_m": self.adam_m, "adam_v": self.adam_v},
            kind=KIND_TRAIN_STATE,
            extra=extra,
        )

    @classmethod
    def load(cls, path) -> "TrainState":
        config, sections, header = read_checkpoint(path)
        extra = header["extra"]
        rng = np.random.default_rng(0)
        rng.bit_generator.state = extra["rng_state"]
        return cls(
            params=EstimatorParams(config, sections["params"]),
            adam_m=sections["adam_m"],
            adam_v=sections["adam_v"],
            step=int(extra["step"]),
            rng=rng,
        )


def seed_for(seed: int, stream: str) -> list[int]:
    """Derive an independent child seed for a named stream."""
    tag = int.from_bytes(hashlib.sha256(stream.encode()).digest()[:4], "little")
    return [seed, tag]


def sample_timestep(rng: np.random.Generator, params: ScheduleParams, size=None):
    """Uniform draw(s) from the working interval [t_eps, t_max]."""
    return rng.uniform(params.t_eps, params.t_max, size=size)


def batch_indices(seed: int, step: int, num_records: int, batch_size: int) -> np.ndarray:
    """Minibatch rows for ``step``: epoch-wise shuffles, stateless in step.

    Each epoch reshuffles the whole training set with a generator derived
    from (seed, epoch); the tail that does not fill a batch is dropped.
    """
    steps_per_epoch = num_records // batch_size
    if steps_per_epoch < 1:
        raise InvalidArgumentError(
            f"batch_size {batch_size} exceeds training set size {num_records}"
        )
    epoch, slot = divmod(step, steps_per_epoch)
    rng = np.random.default_rng([*seed_for(seed, "shuffle"), epoch])
    perm = rng.permutation(num_records)
    return perm[slot * batch_size : (slot + 1) * batch_size]


def _as_batch_arrays(batch):
    if isinstance(batch, tuple):
        condition, terminal, labels = batch
    else:  # sequence of FeatureRecord
        records = list(batch)
        if not records:
            raise InvalidArgumentError("empty batch")
        if any(not isinstance(r, FeatureRecord) or r.label_index is None for r in records):
            raise InvalidArgumentError("training batches need labeled FeatureRecords")
        condition = np.stack([r.condition_stack for r in records])
        terminal = np.stack([r.terminal_vector for r in records])
        labels = np.array([r.label_index for r in records], dtype=np.int64)
    if len(labels) == 0:
        raise InvalidArgumentError("empty batch")
    return (
        np.asarray(condition, dtype=np.float64),
        np.asarray(terminal, dtype=np.float64),
        np.asarray(labels, dtype=np.int64),
    )


def train_step(
    state: TrainState,
    batch,
    codebook: TaxonomyCodebook,
    config: TrainConfig,
) -> tuple[TrainState, float]:
    """One optimization step; mutates ``state`` in place and returns it.

    Per step: codeword lookup for the batch labels, per-sample time draw,
    standard-normal perturbation noise, squared-error loss, one adam
    update (gradients clipped at ``grad_clip`` global norm when enabled).
    """
    condition, terminal, labels = _as_batch_arrays(batch)
    if labels.min() < 0 or labels.max() >= codebook.num_classes:
        raise InvalidArgumentError("batch labels out of range for the codebook")
    sched = config.schedule
    n = labels.shape[0]

    x0 = codebook.codewords[labels]
    t = sample_timestep(state.rng, sched, size=n)
    z = state.rng.standard_normal((n, codebook.dim))
    x_t = perturb_batch(x0, terminal, t, sched, z)

    loss, grads = loss_and_gradients(state.params, x_t, condition, t, x0)
    if not np.isfinite(loss):
        digest = hashlib.sha256(
            labels.tobytes() + np.ascontiguousarray(terminal).tobytes()
        ).hexdigest()[:16]
        raise NumericError(
            f"non-finite loss at step {state.step} (batch digest {digest})"
        )

    gnorm = float(np.linalg.norm(grads.flat))
    clip_coef = 1.0
    if config.grad_clip > 0 and gnorm > config.grad_clip:
        clip_coef = config.grad_clip / (gnorm + 1e-12)
    step_num = state.step + 1
    kernels.adam_step(
        state.params.flat,
        grads.flat,
        state.adam_m,
        state.adam_v,
        config.learning_rate,
        config.beta1,
        config.beta2,
        config.adam_eps,
        1.0 - config.beta1**step_num,
        1.0 - config.beta2**step_num,
        clip_coef,
    )
    state.step = step_num
    state.last_grad_norm = gnorm
    state.last_clip_coef = clip_coef
    return state, loss


def validation_accuracy(
    state_params: EstimatorParams,
    dataset: FeatureDataset,
    codebook: TaxonomyCodebook,
    schedule: ScheduleParams,
    num_steps: int,
) -> float:
    """Deterministic sampling-based accuracy on a labeled dataset."""
    if dataset.num_records == 0:
        raise InvalidArgumentError("empty validation split")
    finals = sampler.sample_batch(
        dataset.terminal.astype(np.float64),
        dataset.condition.astype(np.float64),
        state_params,
        schedule,
        num_steps,
    )
    preds, _ = classify_batch(finals, codebook)
    return float(np.mean(preds == dataset.label_indices))


def train_loop(
    train_split: FeatureDataset,
    val_split: FeatureDataset | None,
    codebook: TaxonomyCodebook,
    config: TrainConfig,
    est_config: EstimatorConfig,
    out_dir=None,
    initial_state: TrainState | None = None,
) -> tuple[TrainState, list[dict]]:
    """Run ``total_steps`` optimizer steps over reshuffled minibatches.

    Records {step, loss, wall_ms, grad_norm [, val_accuracy]} per step;
    writes train-state checkpoints under ``out_dir`` when configured, plus
    a final model checkpoint.  Pass ``initial_state`` (a loaded train-state
    checkpoint) to resume; the continuation matches the uninterrupted run.
    """
    state = initial_state or TrainState.fresh(est_config, config)
    metrics: list[dict] = []
    out_path = pathlib.Path(out_dir) if out_dir is not None else None
    log_file = None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
        log_file = open(out_path / "metrics.jsonl", "a")
    try:
        while state.step < config.total_steps:
            t_start = time.perf_counter()
            idx = batch_indices(
                config.seed, state.step, train_split.num_records, config.batch_size
            )
            batch = (
                train_split.condition[idx],
                train_split.terminal[idx],
                train_split.label_indices[idx],
            )
            state, loss = train_step(state, batch, codebook, config)
            record = {
                "step": state.step,
                "loss": loss,
                "wall_ms": 1000.0 * (time.perf_counter() - t_start),
                "grad_norm": state.last_grad_norm,
            }
            if state.last_clip_coef < 1.0:
                record["clip_coef"] = state.last_clip_coef
            if (
                val_split is not None
                and val_split.num_records > 0
                and config.eval_every > 0
                and state.step % config.eval_every == 0
            ):
                record["val_accuracy"] = validation_accuracy(
                    state.params, val_split, codebook, config.schedule,
                    config.val_num_steps,
                )
            metrics.append(record)
            if log_file is not None:
                log_file.write(json.dumps(record) + "\n")
                log_file.flush()
            if (
                out_path is not None
                and config.checkpoint_every > 0
                and state.step % config.checkpoint_every == 0
                and state.step < config.total_steps
            ):
                state.save(out_path / f"state_{state.step:07d}.ckpt")
        if out_path is not None:
            state.save(out_path / "state_final.ckpt")
            save_model(out_path / "model.ckpt", state.params)
    finally:
        if log_file is not None:
            log_file.close()
    return state, metrics
