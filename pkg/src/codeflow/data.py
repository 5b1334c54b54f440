"""Feature datasets: bit-exact on-disk format, synthetic generator, splits.

A dataset is a header (embedding dim ``L``, condition-layer count ``C``,
class labels) plus records of one ``C x L`` condition stack and one
length-``L`` terminal vector each, optionally labeled.  Values are stored
as float32 both in memory and on disk so the file round-trip is the
identity.

On-disk layout ("GSF1"), all integers little-endian uint32:

    magic "GSF1" | version | record_count | C | L | B
    B x (label_byte_len | utf-8 label bytes)
    per record: label_index (0xFFFFFFFF if unlabeled)
                C*L condition float32 LE | L terminal float32 LE
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, InvalidArgumentError
from .taxonomy import ClassTaxonomy

MAGIC = b"GSF1"
VERSION = 1
UNLABELED = 0xFFFFFFFF


@dataclass(frozen=True)
class FeatureRecord:
    """One utterance-level feature entry.

    ``label_index`` is ``None`` for unlabeled inference inputs.
    """

    condition_stack: np.ndarray  # (C, L) float32
    terminal_vector: np.ndarray  # (L,) float32
    label_index: int | None = None


@dataclass
class FeatureDataset:
    """Column-array container for feature records.

    ``label_indices`` uses -1 for unlabeled records.  Arrays are treated as
    immutable after construction; concurrent readers are safe.
    """

    labels: tuple[str, ...]
    condition: np.ndarray  # (n, C, L) float32
    terminal: np.ndarray  # (n, L) float32
    label_indices: np.ndarray  # (n,) int64, -1 = unlabeled

    def __post_init__(self):
        self.labels = tuple(self.labels)
        self.condition = np.ascontiguousarray(self.condition, dtype=np.float32)
        self.terminal = np.ascontiguousarray(self.terminal, dtype=np.float32)
        self.label_indices = np.ascontiguousarray(self.label_indices, dtype=np.int64)
        n, c, l = self.condition.shape
        if self.terminal.shape != (n, l):
            raise InvalidArgumentError(
                f"terminal shape {self.terminal.shape} inconsistent with "
                f"condition shape {self.condition.shape}"
            )
        if self.label_indices.shape != (n,):
            raise InvalidArgumentError("one label index per record required")
        b = len(self.labels)
        labeled = self.label_indices[self.label_indices >= 0]
        if labeled.size and labeled.max() >= b:
            raise InvalidArgumentError(
                f"label index {int(labeled.max())} out of range for {b} classes"
            )
        if not np.isfinite(self.condition).all() or not np.isfinite(self.terminal).all():
            raise InvalidArgumentError("dataset contains non-finite values")

    @property
    def num_records(self) -> int:
        return self.terminal.shape[0]

    @property
    def num_condition_layers(self) -> int:
        return self.condition.shape[1]

    @property
    def dim(self) -> int:
        return self.terminal.shape[1]

    @property
    def num_classes(self) -> int:
        return len(self.labels)

    def taxonomy(self) -> ClassTaxonomy:
        return ClassTaxonomy(labels=self.labels)

    def record(self, i: int) -> FeatureRecord:
        idx = int(self.label_indices[i])
        return FeatureRecord(
            condition_stack=self.condition[i],
            terminal_vector=self.terminal[i],
            label_index=None if idx < 0 else idx,
        )

    def __len__(self) -> int:
        return self.num_records

    def subset(self, indices: np.ndarray) -> "FeatureDataset":
        indices = np.asarray(indices, dtype=np.int64)
        return FeatureDataset(
            labels=self.labels,
            condition=self.condition[indices],
            terminal=self.terminal[indices],
            label_indices=self.label_indices[indices],
        )

    def class_counts(self) -> np.ndarray:
        """Per-class record counts (unlabeled records are not counted)."""
        counts = np.zeros(self.num_classes, dtype=np.int64)
        for idx in self.label_indices:
            if idx >= 0:
                counts[idx] += 1
        return counts

    def summary(self) -> str:
        lines = [
            f"records: {self.num_records}",
            f"dim: {self.dim}",
            f"condition layers: {self.num_condition_layers}",
            f"classes: {self.num_classes}",
        ]
        counts = self.class_counts()
        for label, count in zip(self.labels, counts):
            lines.append(f"  {label}: {int(count)}")
        unlabeled = int(np.sum(self.label_indices < 0))
        if unlabeled:
            lines.append(f"  (unlabeled): {unlabeled}")
        return "\n".join(lines)


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a class-conditional synthetic feature dataset.

    Terminal vectors for class ``c`` are ``mean_c + N(0, within_std^2)``
    i.i.d. per coordinate; condition layers are independent noisy copies of
    the terminal vector, so the stack is correlated with it the way earlier
    encoder layers are with the final one.  Class means are either given
    explicitly or drawn as ``N(0, mean_scale^2)`` per coordinate.
    """

    num_classes: int
    dim: int
    num_layers: int
    samples_per_class: int
    mean_scale: float = 1.0
    within_std: float = 0.1
    condition_noise: float | None = None
    class_means: np.ndarray | None = None
    labels: tuple[str, ...] | None = None
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 2:
            raise InvalidArgumentError("need at least 2 classes")
        if not self.num_classes < self.dim / 2:
            raise InvalidArgumentError(
                f"num_classes={self.num_classes} must be < dim/2 (dim={self.dim})"
            )
        if self.num_layers < 1 or self.samples_per_class < 1:
            raise InvalidArgumentError("num_layers and samples_per_class must be >= 1")
        if not self.mean_scale > 0:
            raise InvalidArgumentError("mean_scale (separation scale) must be > 0")
        if self.within_std < 0 or (
            self.condition_noise is not None and self.condition_noise < 0
        ):
            raise InvalidArgumentError("noise scales must be non-negative")
        if self.class_means is not None:
            means = np.asarray(self.class_means, dtype=np.float64)
            if means.shape != (self.num_classes, self.dim):
                raise InvalidArgumentError(
                    f"class_means shape {means.shape} must be "
                    f"({self.num_classes}, {self.dim})"
                )
            object.__setattr__(self, "class_means", means)
        if self.labels is not None and len(self.labels) != self.num_classes:
            raise InvalidArgumentError("one label per class required")


def generate_synthetic(spec: SyntheticSpec) -> FeatureDataset:
    """Deterministically generate a dataset from ``spec`` (seeded)."""
    rng = np.random.default_rng(spec.seed)
    b, l, c = spec.num_classes, spec.dim, spec.num_layers
    n_per = spec.samples_per_class
    cond_noise = (
        spec.within_std if spec.condition_noise is None else spec.condition_noise
    )
    means = spec.class_means
    if means is None:
        means = rng.normal(0.0, spec.mean_scale, size=(b, l))

    terminal = np.empty((b * n_per, l), dtype=np.float64)
    condition = np.empty((b * n_per, c, l), dtype=np.float64)
    label_indices = np.empty(b * n_per, dtype=np.int64)
    for ci in range(b):
        sl = slice(ci * n_per, (ci + 1) * n_per)
        x1 = means[ci] + rng.normal(0.0, spec.within_std, size=(n_per, l))
        terminal[sl] = x1
        condition[sl] = x1[:, None, :] + rng.normal(
            0.0, cond_noise, size=(n_per, c, l)
        )
        label_indices[sl] = ci

    labels = spec.labels or tuple(f"class_{i}" for i in range(b))
    return FeatureDataset(
        labels=labels,
        condition=condition.astype(np.float32),
        terminal=terminal.astype(np.float32),
        label_indices=label_indices,
    )


def write_dataset(dataset: FeatureDataset, path) -> None:
    """Serialize ``dataset`` to ``path`` in the GSF1 layout."""
    n = dataset.num_records
    c = dataset.num_condition_layers
    l = dataset.dim
    b = dataset.num_classes
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<5I", VERSION, n, c, l, b))
        for label in dataset.labels:
            raw = label.encode("utf-8")
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
        for i in range(n):
            idx = int(dataset.label_indices[i])
            f.write(struct.pack("<I", UNLABELED if idx < 0 else idx))
            f.write(np.ascontiguousarray(dataset.condition[i], dtype="<f4").tobytes())
            f.write(np.ascontiguousarray(dataset.terminal[i], dtype="<f4").tobytes())


class _Cursor:
    """Byte reader that reports the offset of any short read."""

    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, count: int, what: str) -> bytes:
        if self.pos + count > len(self.buf):
            raise FormatError(
                f"truncated file: expected {count} bytes for {what}", offset=self.pos
            )
        out = self.buf[self.pos : self.pos + count]
        self.pos += count
        return out

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]


def read_dataset(path) -> FeatureDataset:
    """Parse a GSF1 file, failing with byte offsets on malformed input."""
    with open(path, "rb") as f:
        buf = f.read()
    cur = _Cursor(buf)
    magic = cur.take(4, "magic")
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", offset=0)
    version = cur.u32("version")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    n = cur.u32("record count")
    c = cur.u32("condition layer count")
    l = cur.u32("embedding dim")
    b = cur.u32("class count")
    if c < 1 or l < 1:
        raise FormatError(f"inconsistent dims C={c}, L={l}", offset=8)
    labels = []
    for i in range(b):
        length = cur.u32(f"label {i} length")
        raw = cur.take(length, f"label {i}")
        try:
            labels.append(raw.decode("utf-8"))
        except UnicodeDecodeError as e:
            raise FormatError(f"label {i} is not valid UTF-8: {e}", offset=cur.pos - length)

    condition = np.empty((n, c, l), dtype=np.float32)
    terminal = np.empty((n, l), dtype=np.float32)
    label_indices = np.empty(n, dtype=np.int64)
    for i in range(n):
        idx = cur.u32(f"record {i} label index")
        if idx == UNLABELED:
            label_indices[i] = -1
        elif idx >= b:
            raise FormatError(
                f"record {i} label index {idx} out of range for {b} classes",
                offset=cur.pos - 4,
            )
        else:
            label_indices[i] = idx
        raw = cur.take(4 * c * l, f"record {i} condition stack")
        condition[i] = np.frombuffer(raw, dtype="<f4").reshape(c, l)
        raw = cur.take(4 * l, f"record {i} terminal vector")
        terminal[i] = np.frombuffer(raw, dtype="<f4")
    if cur.pos != len(buf):
        raise FormatError(
            f"{len(buf) - cur.pos} trailing bytes after last record", offset=cur.pos
        )
    return FeatureDataset(
        labels=tuple(labels),
        condition=condition,
        terminal=terminal,
        label_indices=label_indices,
    )


def split(
    dataset: FeatureDataset,
    fractions: tuple[float, float, float],
    seed: int,
) -> tuple[FeatureDataset, FeatureDataset, FeatureDataset]:
    """Label-stratified (train, validation, test) split.

    Fractions must be non-negative and sum to 1; zero fractions yield empty
    splits.  Per-class allocation uses largest-remainder rounding, keeping
    each split within one sample of exact stratification.  Deterministic
    under ``seed``.
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f < 0 for f in fractions):
        raise InvalidArgumentError("need three non-negative fractions")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise InvalidArgumentError(f"fractions must sum to 1, got {sum(fractions)}")
    rng = np.random.default_rng(seed)
    buckets: list[list[int]] = [[], [], []]
    classes = list(range(dataset.num_classes))
    if np.any(dataset.label_indices < 0):
        classes.append(-1)  # unlabeled records stratify as their own group
    for ci in classes:
        idx = np.flatnonzero(dataset.label_indices == ci)
        idx = idx[rng.permutation(len(idx))]
        counts = _largest_remainder(len(idx), fractions)
        start = 0
        for si, cnt in enumerate(counts):
            buckets[si].extend(idx[start : start + cnt].tolist())
            start += cnt
    outs = []
    for si in range(3):
        order = np.array(sorted(buckets[si]), dtype=np.int64)
        outs.append(dataset.subset(order))
    return tuple(outs)


def _largest_remainder(total: int, fractions: tuple[float, ...]) -> list[int]:
    raw = [total * f for f in fractions]
    counts = [int(np.floor(r)) for r in raw]
    short = total - sum(counts)
    remainders = sorted(
        range(len(fractions)), key=lambda i: (-(raw[i] - counts[i]), i)
    )
    for i in range(short):
        counts[remainders[i]] += 1
    return counts
