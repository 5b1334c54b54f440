"""Experiment driver: metrics, step sweeps, trajectory dumps, configuration.

Everything is driven by one JSON configuration file; individual fields can
be overridden with dotted-path assignments (see the CLI).  The effective
configuration is echoed into each output directory so results stay
attributable to their exact inputs.  Apart from wall-clock diagnostics,
outputs are pure functions of the configuration and the dataset files.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import FeatureDataset, FeatureRecord
from .errors import ConfigError, InvalidArgumentError, OutOfDomainError
from .estimator import EstimatorConfig
from .sampler import SamplerConfig, sample, sample_batch
from .schedules import ScheduleParams
from .taxonomy import TaxonomyCodebook, classify_batch
from .training import TrainConfig

PANEL_TIMES_DEFAULT = (0.75, 0.5, 0.25, 0.03)


@dataclass
class EvalReport:
    """Accuracy, per-class precision/recall, and the confusion matrix.

    ``confusion[i, j]`` counts true class ``i`` predicted as ``j``.
    """

    accuracy: float
    precision: np.ndarray
    recall: np.ndarray
    confusion: np.ndarray
    sample_count: int
    wall_seconds: float
    labels: tuple[str, ...] = ()

    def validate(self) -> None:
        total = int(self.confusion.sum())
        if total != self.sample_count:
            raise InvalidArgumentError("confusion total != sample count")
        trace = float(np.trace(self.confusion))
        if abs(self.accuracy - trace / max(total, 1)) > 1e-12:
            raise InvalidArgumentError("accuracy != trace/total")

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision.tolist(),
            "recall": self.recall.tolist(),
            "confusion": self.confusion.tolist(),
            "sample_count": self.sample_count,
            "wall_seconds": self.wall_seconds,
            "labels": list(self.labels),
        }

    def to_text(self) -> str:
        b = self.confusion.shape[0]
        names = self.labels or tuple(f"class_{i}" for i in range(b))
        width = max(8, max(len(n) for n in names) + 1)
        lines = [
            f"samples:  {self.sample_count}",
            f"accuracy: {self.accuracy:.4f}",
            "",
            f"{'class':<{width}} {'precision':>9} {'recall':>9}",
        ]
        for i, name in enumerate(names):
            lines.append(
                f"{name:<{width}} {self.precision[i]:>9.4f} {self.recall[i]:>9.4f}"
            )
        lines.append("")
        lines.append("confusion (rows = true, cols = predicted):")
        header = " " * width + " ".join(f"{n[:7]:>8}" for n in names)
        lines.append(header)
        for i, name in enumerate(names):
            row = " ".join(f"{int(v):>8}" for v in self.confusion[i])
            lines.append(f"{name:<{width}}{row}")
        return "\n".join(lines) + "\n"


def report_from_predictions(
    true_labels: np.ndarray,
    predicted: np.ndarray,
    num_classes: int,
    wall_seconds: float = 0.0,
    labels: tuple[str, ...] = (),
) -> EvalReport:
    true_labels = np.asarray(true_labels, dtype=np.int64)
    predicted = np.asarray(predicted, dtype=np.int64)
    if true_labels.shape != predicted.shape:
        raise InvalidArgumentError("prediction/label length mismatch")
    confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(confusion, (true_labels, predicted), 1)
    total = true_labels.shape[0]
    diag = np.diag(confusion).astype(np.float64)
    col = confusion.sum(axis=0).astype(np.float64)
    row = confusion.sum(axis=1).astype(np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(col > 0, diag / col, 0.0)
        recall = np.where(row > 0, diag / row, 0.0)
    report = EvalReport(
        accuracy=float(diag.sum() / max(total, 1)),
        precision=precision,
        recall=recall,
        confusion=confusion,
        sample_count=total,
        wall_seconds=wall_seconds,
        labels=labels,
    )
    report.validate()
    return report


def evaluate(
    split: FeatureDataset,
    model,
    codebook: TaxonomyCodebook,
    config: SamplerConfig,
) -> EvalReport:
    """Run inference on every record of a labeled split and aggregate."""
    if split.num_records == 0:
        raise InvalidArgumentError("cannot evaluate an empty split")
    if np.any(split.label_indices < 0):
        raise InvalidArgumentError("evaluation split contains unlabeled records")
    start = time.perf_counter()
    finals = sample_batch(
        split.terminal.astype(np.float64),
        split.condition.astype(np.float64),
        model,
        config.schedule,
        config.num_steps,
    )
    predicted, _ = classify_batch(finals, codebook)
    wall = time.perf_counter() - start
    return report_from_predictions(
        split.label_indices, predicted, codebook.num_classes, wall, split.labels
    )


def sweep_steps(
    split: FeatureDataset,
    model,
    codebook: TaxonomyCodebook,
    step_counts: list[int],
    schedule: ScheduleParams,
) -> list[tuple[int, float]]:
    """Accuracy for each step count, sharing everything else."""
    if not step_counts or any(n < 1 for n in step_counts):
        raise InvalidArgumentError("step counts must be >= 1")
    rows = []
    for n in step_counts:
        cfg = SamplerConfig(num_steps=int(n), schedule=schedule)
        report = evaluate(split, model, codebook, cfg)
        rows.append((int(n), report.accuracy))
    return rows


def sweep_table(rows: list[tuple[int, float]]) -> str:
    lines = ["steps\taccuracy"]
    for n, acc in rows:
        lines.append(f"{n}\t{acc:.6f}")
    return "\n".join(lines) + "\n"


def dump_trajectory(
    record: FeatureRecord,
    model,
    codebook: TaxonomyCodebook,
    config: SamplerConfig,
    panel_times: tuple[float, ...],
    out_dir,
) -> tuple[Path, Path]:
    """Write the full trajectory and extracted panel rows for one record.

    Panels pick the trajectory row nearest each requested time; the true
    codeword is appended for comparison.  Requires a labeled record and
    ``record_trajectory`` enabled.
    """
    if not config.record_trajectory:
        raise InvalidArgumentError("dump_trajectory needs record_trajectory=true")
    if record.label_index is None:
        raise InvalidArgumentError("trajectory dumps need a labeled record")
    sched = config.schedule
    for t in panel_times:
        if not (sched.t_eps <= t <= sched.t_max):
            raise OutOfDomainError(
                f"panel time {t} outside [{sched.t_eps}, {sched.t_max}]"
            )
    final, trajectory = sample(
        record.terminal_vector, record.condition_stack, model, config
    )
    codeword = codebook.codewords[record.label_index]
    cw_norm = np.linalg.norm(codeword)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    traj_path = out_dir / "trajectory.tsv"
    traj_path.write_text(trajectory.to_text())

    lines = []
    for req in panel_times:
        _, actual, state = trajectory.nearest(req)
        cos = float(
            np.dot(state, codeword) / (np.linalg.norm(state) * cw_norm)
        )
        vals = "\t".join(f"{v:.9g}" for v in state)
        lines.append(f"panel\t{req:.9g}\t{actual:.9g}\t{cos:.9g}\t{vals}")
    vals = "\t".join(f"{v:.9g}" for v in codeword)
    lines.append(f"codeword\t\t\t1\t{vals}")
    panels_path = out_dir / "panels.tsv"
    panels_path.write_text("\n".join(lines) + "\n")
    return traj_path, panels_path


# ---------------------------------------------------------------------------
# experiment configuration

DEFAULT_CONFIG: dict = {
    "seed": 0,
    "paths": {"dataset": "", "output_dir": "runs/out", "checkpoint": ""},
    "synthetic": {
        "num_classes": 4,
        "dim": 64,
        "num_layers": 3,
        "samples_per_class": 500,
        "mean_scale": 0.3,
        "within_std": 0.06,
        "condition_noise": 0.06,
        "seed": 0,
    },
    "schedule": {"k": 6.0, "sigma": 0.1, "t_eps": 0.03, "t_max": 0.97},
    "estimator": {
        "trunk_variant": "mlp-baseline",
        "trunk_depth": 2,
        "trunk_width": 128,
        "num_heads": 4,
        "num_tokens": 16,
        "time_embed_dim": 32,
    },
    "training": {
        "batch_size": 64,
        "total_steps": 2000,
        "learning_rate": 1e-3,
        "seed": 0,
        "eval_every": 500,
        "checkpoint_every": 0,
        "val_num_steps": 1,
        "grad_clip": 1.0,
    },
    "sampler": {"num_steps": 10, "record_trajectory": False},
    "split": {"fractions": [0.8, 0.1, 0.1], "seed": 0},
    "panel_times": list(PANEL_TIMES_DEFAULT),
    "sweep_steps": [1, 2, 4, 10, 20],
    "eval": {"split": "test", "record_index": 0},
    "taxonomy": {"labels": [], "dim": 1024},
}


def _deep_merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if key in out and isinstance(out[key], dict) and isinstance(value, dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def apply_overrides(config: dict, assignments: list[str]) -> dict:
    """Apply ``a.b.c=value`` overrides; values parse as JSON, else strings."""
    out = json.loads(json.dumps(config))  # deep copy
    for assignment in assignments:
        if "=" not in assignment:
            raise ConfigError(f"override {assignment!r} is not of the form path=value")
        path, raw = assignment.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = out
        parts = path.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override path {path!r} crosses a non-section field")
        node[parts[-1]] = value
    return out


@dataclass
class ExperimentConfig:
    """Typed view over the merged configuration dictionary."""

    raw: dict = field(default_factory=lambda: json.loads(json.dumps(DEFAULT_CONFIG)))

    @classmethod
    def load(cls, path=None, overrides: list[str] | None = None) -> "ExperimentConfig":
        merged = json.loads(json.dumps(DEFAULT_CONFIG))
        if path is not None:
            try:
                with open(path) as f:
                    user = json.load(f)
            except FileNotFoundError:
                raise ConfigError(f"config file not found: {path}")
            except json.JSONDecodeError as e:
                raise ConfigError(f"config file is not valid JSON: {e}")
            if not isinstance(user, dict):
                raise ConfigError("config file must hold a JSON object")
            merged = _deep_merge(merged, user)
        if overrides:
            merged = apply_overrides(merged, overrides)
        return cls(raw=merged)

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    def path(self, name: str) -> str:
        value = self.raw["paths"].get(name, "")
        if not value:
            raise ConfigError(f"paths.{name} is not set")
        return value

    def schedule(self) -> ScheduleParams:
        try:
            return ScheduleParams.from_dict(self.raw["schedule"])
        except (TypeError, InvalidArgumentError) as e:
            raise ConfigError(f"bad schedule section: {e}")

    def sampler(self, **overrides) -> SamplerConfig:
        d = dict(self.raw["sampler"])
        d.update(overrides)
        d["schedule"] = self.raw["schedule"]
        try:
            return SamplerConfig.from_dict(d)
        except (TypeError, InvalidArgumentError) as e:
            raise ConfigError(f"bad sampler section: {e}")

    def training(self) -> TrainConfig:
        d = dict(self.raw["training"])
        d["schedule"] = self.raw["schedule"]
        try:
            return TrainConfig.from_dict(d)
        except (TypeError, InvalidArgumentError) as e:
            raise ConfigError(f"bad training section: {e}")

    def estimator(self, dim: int, num_condition_layers: int) -> EstimatorConfig:
        d = dict(self.raw["estimator"])
        d.setdefault("dim", dim)
        d.setdefault("num_condition_layers", num_condition_layers)
        try:
            return EstimatorConfig.from_dict(d)
        except (TypeError, InvalidArgumentError) as e:
            raise ConfigError(f"bad estimator section: {e}")

    def split_spec(self) -> tuple[tuple[float, float, float], int]:
        d = self.raw["split"]
        fractions = tuple(float(f) for f in d["fractions"])
        return fractions, int(d.get("seed", 0))

    def panel_times(self) -> tuple[float, ...]:
        return tuple(float(t) for t in self.raw["panel_times"])

    def echo(self, out_dir) -> Path:
        """Write the effective configuration next to the outputs."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / "config.echo.json"
        path.write_text(json.dumps(self.raw, indent=2, sort_keys=True) + "\n")
        return path
