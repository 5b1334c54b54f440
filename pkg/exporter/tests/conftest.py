import json

import numpy as np
import pytest
from scipy.io import wavfile


def write_tone(path, freq=440.0, seconds=0.5, rate=16_000, dtype="int16", stereo=False):
    t = np.arange(int(seconds * rate)) / rate
    wave = 0.5 * np.sin(2 * np.pi * freq * t)
    if stereo:
        wave = np.stack([wave, 0.25 * wave], axis=1)
    if dtype == "int16":
        data = (wave * 32767).astype(np.int16)
    elif dtype == "float32":
        data = wave.astype(np.float32)
    else:
        raise ValueError(dtype)
    wavfile.write(path, rate, data)
    return path


@pytest.fixture
def audio_dir(tmp_path):
    d = tmp_path / "audio"
    d.mkdir()
    write_tone(d / "tone_a.wav", freq=220.0, seconds=0.4)
    write_tone(d / "tone_b.wav", freq=880.0, seconds=0.7, dtype="float32")
    rng = np.random.default_rng(3)
    noise = (rng.normal(0, 0.1, 8000) * 32767).clip(-32768, 32767).astype(np.int16)
    wavfile.write(d / "noise.wav", 16_000, noise)
    wavfile.write(d / "silence.wav", 16_000, np.zeros(6400, dtype=np.int16))
    return d


@pytest.fixture
def manifest_file(tmp_path, audio_dir):
    manifest = {
        "encoder": "toy:24x4",
        "items": [
            {"path": str(audio_dir / "tone_a.wav"), "label": "low"},
            {"path": str(audio_dir / "tone_b.wav"), "label": "high"},
            {"path": str(audio_dir / "noise.wav"), "label": "noise"},
            {"path": str(audio_dir / "silence.wav"), "label": "low"},
        ],
    }
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(manifest))
    return path
