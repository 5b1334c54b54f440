"""Export orchestration: manifest in, GSF1 feature file out.

For each (audio path, label) pair the frozen encoder runs once, each
selected hidden-state sequence is averaged over time, and one record is
written.  Undecodable audio is skipped with a logged reason; layer
selection that does not fit the encoder aborts the whole export.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio import load_wav
from .encoders import load_encoder
from .errors import AudioError, EncoderError, ExportError, ManifestError
from .gsf import write_records

log = logging.getLogger("gsf_exporter")


@dataclass(frozen=True)
class ExportManifest:
    """Utterance list plus encoder and layer choices.

    ``condition_layers``/``terminal_layer`` use 1-based hidden-layer
    indices; ``None`` means the defaults (all layers before the final
    one, and the final layer).
    """

    items: tuple[tuple[str, str], ...]  # (audio path, class label)
    labels: tuple[str, ...]
    encoder: str | None = None
    condition_layers: tuple[int, ...] | None = None
    terminal_layer: int | None = None

    @classmethod
    def from_file(cls, path) -> "ExportManifest":
        try:
            with open(path) as f:
                raw = json.load(f)
        except FileNotFoundError:
            raise ManifestError(f"manifest not found: {path}")
        except json.JSONDecodeError as e:
            raise ManifestError(f"manifest is not valid JSON: {e}")
        return cls.from_dict(raw, base_dir=Path(path).parent)

    @classmethod
    def from_dict(cls, raw: dict, base_dir: Path | None = None) -> "ExportManifest":
        if not isinstance(raw, dict) or not isinstance(raw.get("items"), list):
            raise ManifestError("manifest must be an object with an 'items' list")
        items = []
        for entry in raw["items"]:
            if not isinstance(entry, dict) or "path" not in entry or "label" not in entry:
                raise ManifestError(f"bad manifest item: {entry!r}")
            p = Path(entry["path"])
            if base_dir is not None and not p.is_absolute():
                p = base_dir / p
            items.append((str(p), str(entry["label"])))
        if not items:
            raise ManifestError("manifest has no items")

        declared = raw.get("labels")
        if declared is not None:
            labels = tuple(str(l) for l in declared)
            if len(set(labels)) != len(labels):
                raise ManifestError("declared labels must be unique")
            unknown = {lab for _, lab in items if lab not in labels}
            if unknown:
                raise ManifestError(
                    f"labels {sorted(unknown)} not in the declared taxonomy"
                )
        else:
            seen: list[str] = []
            for _, lab in items:
                if lab not in seen:
                    seen.append(lab)
            labels = tuple(seen)

        layers = raw.get("condition_layers")
        return cls(
            items=tuple(items),
            labels=labels,
            encoder=raw.get("encoder"),
            condition_layers=tuple(int(i) for i in layers) if layers else None,
            terminal_layer=(
                int(raw["terminal_layer"]) if raw.get("terminal_layer") else None
            ),
        )


@dataclass
class ExportResult:
    output_path: str
    written: int
    skipped: list[tuple[str, str]] = field(default_factory=list)
    encoder: str = ""
    condition_layers: tuple[int, ...] = ()
    terminal_layer: int = 0


def resolve_layers(num_layers, condition_layers, terminal_layer):
    terminal = terminal_layer if terminal_layer is not None else num_layers
    if not (1 <= terminal <= num_layers):
        raise EncoderError(
            f"terminal layer {terminal} outside 1..{num_layers}"
        )
    if condition_layers is None:
        condition = tuple(range(1, num_layers)) or (num_layers,)
    else:
        condition = tuple(condition_layers)
    bad = [i for i in condition if not (1 <= i <= num_layers)]
    if bad:
        raise EncoderError(f"condition layers {bad} outside 1..{num_layers}")
    if not condition:
        raise EncoderError("need at least one condition layer")
    return condition, terminal


def average_over_time(states: list[np.ndarray]) -> list[np.ndarray]:
    return [np.asarray(s, dtype=np.float64).mean(axis=0) for s in states]


def standardize(vec: np.ndarray) -> np.ndarray:
    return (vec - vec.mean()) / (vec.std() + 1e-8)


def export(
    manifest: ExportManifest,
    output_path,
    encoder_id: str | None = None,
    condition_layers: tuple[int, ...] | None = None,
    terminal_layer: int | None = None,
    device: str = "cpu",
    standardize_layers: bool = False,
    normalize_input: bool = True,
) -> ExportResult:
    """Run the frozen encoder over the manifest and write one GSF1 file.

    Flag arguments override the corresponding manifest fields.
    """
    identifier = encoder_id or manifest.encoder
    if not identifier:
        raise ManifestError("no encoder given (manifest 'encoder' or --encoder)")
    encoder = load_encoder(identifier, device=device, normalize_input=normalize_input)
    info = encoder.info
    condition, terminal = resolve_layers(
        info.num_layers,
        condition_layers if condition_layers is not None else manifest.condition_layers,
        terminal_layer if terminal_layer is not None else manifest.terminal_layer,
    )

    label_index = {label: i for i, label in enumerate(manifest.labels)}
    records = []
    skipped: list[tuple[str, str]] = []
    for path, label in manifest.items:
        try:
            wave = load_wav(path, info.sample_rate)
        except AudioError as e:
            log.warning("skipping %s: %s", path, e)
            skipped.append((path, str(e)))
            continue
        states = encoder.hidden_states(wave)
        if len(states) != info.num_layers:
            raise EncoderError(
                f"encoder returned {len(states)} layers, declared {info.num_layers}"
            )
        averaged = average_over_time(states)
        stack = np.stack([averaged[i - 1] for i in condition])
        x1 = averaged[terminal - 1]
        if standardize_layers:
            stack = np.stack([standardize(row) for row in stack])
            x1 = standardize(x1)
        if not np.isfinite(stack).all() or not np.isfinite(x1).all():
            raise ExportError(f"encoder produced non-finite features for {path}")
        records.append(
            (label_index[label], stack.astype(np.float32), x1.astype(np.float32))
        )

    if not records:
        raise ExportError("no records exported (all inputs were skipped)")
    write_records(output_path, list(manifest.labels), records)
    return ExportResult(
        output_path=str(output_path),
        written=len(records),
        skipped=skipped,
        encoder=info.identifier,
        condition_layers=condition,
        terminal_layer=terminal,
    )
