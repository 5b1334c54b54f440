"""Command-line entry point.

Subcommands: gen-data, train, eval, sweep-steps, dump-trajectory,
encode-taxonomy, inspect-dataset.  All read one JSON config file
(``--config``); individual fields are overridable with repeated
``--set section.field=value`` flags.  Exit codes: 0 success, 2
configuration errors, 3 data/format errors, 4 numeric failures.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .checkpoint import load_model
from .data import SyntheticSpec, generate_synthetic, read_dataset, split, write_dataset
from .errors import (
    ConfigError,
    DegenerateInputError,
    FormatError,
    InvalidArgumentError,
    NumericError,
)
from .evaluation import (
    ExperimentConfig,
    dump_trajectory,
    evaluate,
    sweep_steps,
    sweep_table,
)
from .taxonomy import ClassTaxonomy, build_codebook
from .training import train_loop

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _load_config(args) -> ExperimentConfig:
    return ExperimentConfig.load(args.config, args.set or [])


def _load_dataset(cfg: ExperimentConfig, args):
    path = getattr(args, "dataset", None) or cfg.path("dataset")
    try:
        return read_dataset(path)
    except FileNotFoundError:
        raise FormatError(f"dataset file not found: {path}")


def _select_split(cfg: ExperimentConfig, dataset, which: str):
    if which == "all":
        return dataset
    fractions, seed = cfg.split_spec()
    train_ds, val_ds, test_ds = split(dataset, fractions, seed)
    try:
        return {"train": train_ds, "validation": val_ds, "test": test_ds}[which]
    except KeyError:
        raise ConfigError(f"unknown split {which!r}")


def _load_checkpoint(cfg: ExperimentConfig, args):
    path = getattr(args, "checkpoint", None) or cfg.raw["paths"].get("checkpoint")
    if not path:
        path = str(Path(cfg.path("output_dir")) / "model.ckpt")
    try:
        return load_model(path)
    except FileNotFoundError:
        raise FormatError(f"checkpoint not found: {path}")


def cmd_gen_data(args) -> int:
    cfg = _load_config(args)
    section = cfg.raw.get("synthetic")
    if not isinstance(section, dict):
        raise ConfigError("synthetic section must be an object")
    section = dict(section)
    labels = section.pop("labels", None)
    try:
        spec = SyntheticSpec(labels=tuple(labels) if labels else None, **section)
    except TypeError as e:
        raise ConfigError(f"bad synthetic section: {e}")
    dataset = generate_synthetic(spec)
    out = getattr(args, "dataset", None) or cfg.path("dataset")
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    write_dataset(dataset, out)
    print(f"wrote {dataset.num_records} records to {out}")
    print(dataset.summary())
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    dataset = _load_dataset(cfg, args)
    fractions, seed = cfg.split_spec()
    train_ds, val_ds, test_ds = split(dataset, fractions, seed)
    codebook = build_codebook(dataset.taxonomy(), dataset.dim)
    est_config = cfg.estimator(dataset.dim, dataset.num_condition_layers)
    train_config = cfg.training()
    out_dir = cfg.path("output_dir")
    cfg.echo(out_dir)
    initial = None
    if getattr(args, "resume", None):
        from .training import TrainState

        initial = TrainState.load(args.resume)
    state, metrics = train_loop(
        train_ds, val_ds, codebook, train_config, est_config,
        out_dir=out_dir, initial_state=initial,
    )
    print(f"trained {state.step} steps; final loss {metrics[-1]['loss']:.6f}")
    print(f"model checkpoint: {Path(out_dir) / 'model.ckpt'}")
    return 0


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    dataset = _load_dataset(cfg, args)
    which = getattr(args, "split", None) or cfg.raw["eval"]["split"]
    part = _select_split(cfg, dataset, which)
    params = _load_checkpoint(cfg, args)
    codebook = build_codebook(dataset.taxonomy(), dataset.dim)
    report = evaluate(part, params, codebook, cfg.sampler())
    out_dir = Path(cfg.path("output_dir"))
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg.echo(out_dir)
    (out_dir / "report.json").write_text(
        json.dumps(report.to_dict(), indent=2) + "\n"
    )
    (out_dir / "report.txt").write_text(report.to_text())
    print(report.to_text(), end="")
    return 0


def cmd_sweep_steps(args) -> int:
    cfg = _load_config(args)
    dataset = _load_dataset(cfg, args)
    which = getattr(args, "split", None) or cfg.raw["eval"]["split"]
    part = _select_split(cfg, dataset, which)
    params = _load_checkpoint(cfg, args)
    codebook = build_codebook(dataset.taxonomy(), dataset.dim)
    if args.steps:
        counts = [int(s) for s in args.steps.split(",")]
    else:
        counts = [int(n) for n in cfg.raw["sweep_steps"]]
    rows = sweep_steps(part, params, codebook, counts, cfg.schedule())
    table = sweep_table(rows)
    out_dir = Path(cfg.path("output_dir"))
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg.echo(out_dir)
    (out_dir / "sweep.tsv").write_text(table)
    print(table, end="")
    return 0


def cmd_dump_trajectory(args) -> int:
    cfg = _load_config(args)
    dataset = _load_dataset(cfg, args)
    which = getattr(args, "split", None) or cfg.raw["eval"]["split"]
    part = _select_split(cfg, dataset, which)
    index = args.record_index
    if index is None:
        index = int(cfg.raw["eval"].get("record_index", 0))
    if not (0 <= index < part.num_records):
        raise InvalidArgumentError(
            f"record index {index} out of range for split of {part.num_records}"
        )
    params = _load_checkpoint(cfg, args)
    codebook = build_codebook(dataset.taxonomy(), dataset.dim)
    out_dir = Path(cfg.path("output_dir"))
    cfg.echo(out_dir)
    traj_path, panels_path = dump_trajectory(
        part.record(index),
        params,
        codebook,
        cfg.sampler(record_trajectory=True),
        cfg.panel_times(),
        out_dir,
    )
    print(f"trajectory: {traj_path}")
    print(f"panels: {panels_path}")
    return 0


def cmd_encode_taxonomy(args) -> int:
    cfg = _load_config(args)
    if args.labels:
        labels = tuple(args.labels.split(","))
    else:
        labels = tuple(cfg.raw["taxonomy"]["labels"])
    if not labels:
        raise ConfigError("no labels given (use --labels or taxonomy.labels)")
    dim = args.dim or int(cfg.raw["taxonomy"]["dim"])
    codebook = build_codebook(ClassTaxonomy(labels=labels), dim)
    manifest = json.dumps(codebook.manifest(), indent=2) + "\n"
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(manifest)
        print(f"wrote codebook manifest to {args.out}")
    else:
        print(manifest, end="")
    return 0


def cmd_inspect_dataset(args) -> int:
    cfg = _load_config(args)
    dataset = _load_dataset(cfg, args)
    print(dataset.summary())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="codeflow",
        description=(
            "transport embeddings onto orthogonal sinusoidal class codewords "
            "and classify by cosine similarity"
        ),
        epilog="exit codes: 0 ok, 2 config error, 3 data error, 4 numeric failure",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, dataset_flag=True):
        p.add_argument("--config", help="JSON experiment config file")
        p.add_argument(
            "--set",
            action="append",
            metavar="PATH=VALUE",
            help="override a config field, e.g. --set training.total_steps=100",
        )
        if dataset_flag:
            p.add_argument("--dataset", help="dataset file (overrides paths.dataset)")

    p = sub.add_parser("gen-data", help="generate a synthetic feature dataset")
    common(p)
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train", help="train the target estimator")
    common(p)
    p.add_argument("--resume", help="train-state checkpoint to resume from")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="accuracy/confusion report on a split")
    common(p)
    p.add_argument("--split", choices=["train", "validation", "test", "all"])
    p.add_argument("--checkpoint", help="model checkpoint path")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("sweep-steps", help="accuracy across solver step counts")
    common(p)
    p.add_argument("--split", choices=["train", "validation", "test", "all"])
    p.add_argument("--checkpoint", help="model checkpoint path")
    p.add_argument("--steps", help="comma-separated step counts, e.g. 1,2,4,10,20")
    p.set_defaults(fn=cmd_sweep_steps)

    p = sub.add_parser("dump-trajectory", help="write solver trajectory and panels")
    common(p)
    p.add_argument("--split", choices=["train", "validation", "test", "all"])
    p.add_argument("--checkpoint", help="model checkpoint path")
    p.add_argument("--record-index", type=int, default=None)
    p.set_defaults(fn=cmd_dump_trajectory)

    p = sub.add_parser("encode-taxonomy", help="export a codebook manifest")
    common(p, dataset_flag=False)
    p.add_argument("--labels", help="comma-separated class labels")
    p.add_argument("--dim", type=int, help="codeword dimension")
    p.add_argument("--out", help="manifest output path (default: stdout)")
    p.set_defaults(fn=cmd_encode_taxonomy)

    p = sub.add_parser("inspect-dataset", help="print header and class counts")
    common(p)
    p.set_defaults(fn=cmd_inspect_dataset)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except FormatError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, DegenerateInputError) as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except InvalidArgumentError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
