"""GSF1 feature-file writer.

The byte layout (shared contract with downstream consumers):

    magic "GSF1" | uint32 LE: version=1, record_count, C, L, B
    B x (uint32 label byte length | UTF-8 label)
    per record: uint32 label index | C*L float32 LE | L float32 LE

This module implements the format directly so the exporter stays
independent of any particular reader.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import ExportError

MAGIC = b"GSF1"
VERSION = 1


def write_records(
    path,
    labels: list[str],
    records: list[tuple[int, np.ndarray, np.ndarray]],
) -> None:
    """Write ``(label_index, condition (C, L), terminal (L,))`` records."""
    if not records:
        raise ExportError("refusing to write a feature file with zero records")
    c, l = records[0][1].shape
    b = len(labels)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<5I", VERSION, len(records), c, l, b))
        for label in labels:
            raw = label.encode("utf-8")
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
        for idx, condition, terminal in records:
            condition = np.asarray(condition, dtype=np.float32)
            terminal = np.asarray(terminal, dtype=np.float32)
            if condition.shape != (c, l) or terminal.shape != (l,):
                raise ExportError(
                    f"inconsistent record dims {condition.shape}/{terminal.shape}, "
                    f"expected ({c}, {l})/({l},)"
                )
            if not (0 <= idx < b):
                raise ExportError(f"label index {idx} out of range for {b} labels")
            if not np.isfinite(condition).all() or not np.isfinite(terminal).all():
                raise ExportError("non-finite feature values")
            f.write(struct.pack("<I", idx))
            f.write(np.ascontiguousarray(condition, dtype="<f4").tobytes())
            f.write(np.ascontiguousarray(terminal, dtype="<f4").tobytes())
