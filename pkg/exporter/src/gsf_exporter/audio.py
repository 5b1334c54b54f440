"""WAV loading: decode, mix to mono, resample to the encoder's rate."""

from __future__ import annotations

from math import gcd

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

from .errors import AudioError

_INT_SCALES = {
    np.dtype(np.int16): 32768.0,
    np.dtype(np.int32): 2147483648.0,
    np.dtype(np.uint8): 128.0,
}


def load_wav(path, target_rate: int) -> np.ndarray:
    """Mono float32 waveform in [-1, 1] at ``target_rate``."""
    try:
        rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise AudioError(f"file not found: {path}")
    except Exception as e:
        raise AudioError(f"cannot decode {path}: {e}")
    if data.size == 0:
        raise AudioError(f"empty audio stream: {path}")

    data = np.asarray(data)
    if data.dtype in _INT_SCALES:
        scale = _INT_SCALES[data.dtype]
        if data.dtype == np.dtype(np.uint8):
            wave = (data.astype(np.float64) - 128.0) / scale
        else:
            wave = data.astype(np.float64) / scale
    else:
        wave = data.astype(np.float64)
    if wave.ndim == 2:
        wave = wave.mean(axis=1)
    elif wave.ndim != 1:
        raise AudioError(f"unsupported channel layout {data.shape} in {path}")
    if not np.isfinite(wave).all():
        raise AudioError(f"non-finite samples in {path}")

    if rate != target_rate:
        g = gcd(int(rate), int(target_rate))
        wave = resample_poly(wave, target_rate // g, rate // g)
    return wave.astype(np.float32)
