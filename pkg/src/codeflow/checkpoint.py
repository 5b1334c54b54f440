"""Versioned binary checkpoint container.

Layout: magic ``CKP1``, uint32 version, uint32 header length, UTF-8 JSON
header (estimator config, declared parameter ordering, section names,
optional training extras), then one flat float32 little-endian buffer per
section.  Training state stays on the float32 grid in memory, so the
single-precision container round-trips bit-exactly: ``save(load(f))``
reproduces ``f`` and a resumed run continues identically.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import FormatError
from .estimator import EstimatorConfig, EstimatorParams, param_layout

MAGIC = b"CKP1"
VERSION = 1

KIND_MODEL = "model"
KIND_TRAIN_STATE = "train_state"


def write_checkpoint(
    path,
    config: EstimatorConfig,
    sections: dict[str, np.ndarray],
    kind: str = KIND_MODEL,
    extra: dict | None = None,
) -> None:
    layout = param_layout(config)
    count = sum(int(np.prod(shape)) for _, shape in layout)
    header = {
        "kind": kind,
        "estimator_config": config.to_dict(),
        "param_order": [[name, list(shape)] for name, shape in layout],
        "param_count": count,
        "sections": list(sections),
        "extra": extra or {},
    }
    raw_header = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<2I", VERSION, len(raw_header)))
        f.write(raw_header)
        for name, buf in sections.items():
            buf = np.asarray(buf)
            if buf.shape != (count,):
                raise FormatError(
                    f"section {name!r} has shape {buf.shape}, expected ({count},)"
                )
            f.write(np.ascontiguousarray(buf, dtype="<f4").tobytes())


def read_checkpoint(path) -> tuple[EstimatorConfig, dict[str, np.ndarray], dict]:
    """Returns (config, sections as float64 arrays, header dict)."""
    with open(path, "rb") as f:
        buf = f.read()
    if buf[:4] != MAGIC:
        raise FormatError(f"bad magic {buf[:4]!r}, expected {MAGIC!r}", offset=0)
    if len(buf) < 12:
        raise FormatError("truncated header", offset=len(buf))
    version, header_len = struct.unpack("<2I", buf[4:12])
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", offset=4)
    if 12 + header_len > len(buf):
        raise FormatError("truncated JSON header", offset=12)
    try:
        header = json.loads(buf[12 : 12 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"malformed JSON header: {e}", offset=12)
    config = EstimatorConfig.from_dict(header["estimator_config"])
    layout = param_layout(config)
    declared = [[name, list(shape)] for name, shape in layout]
    if header["param_order"] != declared:
        raise FormatError("parameter ordering does not match the estimator config")
    count = header["param_count"]
    pos = 12 + header_len
    sections = {}
    for name in header["sections"]:
        end = pos + 4 * count
        if end > len(buf):
            raise FormatError(
                f"truncated section {name!r}: need {4 * count} bytes", offset=pos
            )
        sections[name] = np.frombuffer(buf[pos:end], dtype="<f4").astype(np.float64)
        pos = end
    if pos != len(buf):
        raise FormatError(f"{len(buf) - pos} trailing bytes", offset=pos)
    return config, sections, header


def save_model(path, params: EstimatorParams) -> None:
    """Persist estimator parameters alone (inference checkpoint)."""
    write_checkpoint(path, params.config, {"params": params.flat}, kind=KIND_MODEL)


def load_model(path) -> EstimatorParams:
    config, sections, header = read_checkpoint(path)
    if "params" not in sections:
        raise FormatError("checkpoint has no 'params' section")
    return EstimatorParams(config, sections["params"])
