"""Speech encoders behind one interface: per-layer hidden states over time.

Two families, selected by identifier string:

* ``toy:<width>x<layers>[@seed]``: a deterministic frame-wise random
  projection stack.  No heavy dependencies; meant for tests, offline
  runs, and pipeline plumbing.
* ``hf:<model-id-or-local-path>``: a frozen pretrained transformer
  speech model loaded through ``transformers`` (requires the ``hf``
  extra).  Hidden layers are indexed 1..num_layers.

Encoders are strictly frozen: nothing here ever trains or mutates
weights.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .errors import EncoderError

DEFAULT_SAMPLE_RATE = 16_000


@dataclass(frozen=True)
class EncoderInfo:
    identifier: str
    width: int
    num_layers: int  # hidden layers addressable as 1..num_layers
    sample_rate: int


class ToyEncoder:
    """Frame-wise tanh projection stack with seeded fixed weights.

    25 ms windows with a 20 ms hop; layer ``l`` is a tanh affine map of
    layer ``l-1``.  Output is finite for any finite input, including
    silence.
    """

    FRAME = 400  # samples at 16 kHz
    HOP = 320

    def __init__(self, width: int, num_layers: int, seed: int = 0):
        if width < 1 or num_layers < 1:
            raise EncoderError("toy encoder needs width >= 1 and layers >= 1")
        self.info = EncoderInfo(
            identifier=f"toy:{width}x{num_layers}@{seed}",
            width=width,
            num_layers=num_layers,
            sample_rate=DEFAULT_SAMPLE_RATE,
        )
        rng = np.random.default_rng(seed)
        self._front = rng.normal(0, 1.0 / np.sqrt(self.FRAME), (width, self.FRAME))
        self._weights = [
            rng.normal(0, 1.0 / np.sqrt(width), (width, width))
            for _ in range(num_layers - 1)
        ]
        self._biases = [rng.normal(0, 0.1, width) for _ in range(num_layers)]

    def hidden_states(self, waveform: np.ndarray) -> list[np.ndarray]:
        wave = np.asarray(waveform, dtype=np.float64)
        if wave.size < self.FRAME:
            wave = np.pad(wave, (0, self.FRAME - wave.size))
        n_frames = 1 + (wave.size - self.FRAME) // self.HOP
        frames = np.stack(
            [wave[i * self.HOP : i * self.HOP + self.FRAME] for i in range(n_frames)]
        )
        h = np.tanh(frames @ self._front.T + self._biases[0])
        states = [h.astype(np.float32)]
        for w, b in zip(self._weights, self._biases[1:]):
            h = np.tanh(h @ w.T + b)
            states.append(h.astype(np.float32))
        return states


class HFEncoder:
    """Frozen pretrained speech transformer via the transformers library."""

    def __init__(self, model_id: str, device: str = "cpu", normalize_input: bool = True):
        try:
            import torch
            from transformers import AutoConfig, AutoModel
        except ImportError as e:
            raise EncoderError(
                f"hf:{model_id} needs the 'hf' extra (torch + transformers): {e}"
            )
        self._torch = torch
        try:
            config = AutoConfig.from_pretrained(model_id)
            self._model = AutoModel.from_pretrained(model_id)
        except Exception as e:
            raise EncoderError(f"cannot load encoder {model_id!r}: {e}")
        self._model.eval().to(device)
        for p in self._model.parameters():
            p.requires_grad_(False)
        self._device = device
        self._normalize = normalize_input
        self.info = EncoderInfo(
            identifier=f"hf:{model_id}",
            width=int(config.hidden_size),
            num_layers=int(config.num_hidden_layers),
            sample_rate=DEFAULT_SAMPLE_RATE,
        )

    def hidden_states(self, waveform: np.ndarray) -> list[np.ndarray]:
        torch = self._torch
        wave = np.asarray(waveform, dtype=np.float32)
        if self._normalize:
            wave = (wave - wave.mean()) / (wave.std() + 1e-7)
        with torch.no_grad():
            inputs = torch.from_numpy(wave)[None, :].to(self._device)
            out = self._model(inputs, output_hidden_states=True)
        # hidden_states[0] is the convolutional front-end; 1.. are layers
        return [
            h[0].cpu().numpy().astype(np.float32) for h in out.hidden_states[1:]
        ]


_TOY_RE = re.compile(r"^toy:(\d+)x(\d+)(?:@(\d+))?$")


def load_encoder(identifier: str, device: str = "cpu", normalize_input: bool = True):
    """Instantiate an encoder from its identifier string."""
    m = _TOY_RE.match(identifier)
    if m:
        width, layers, seed = int(m.group(1)), int(m.group(2)), int(m.group(3) or 0)
        return ToyEncoder(width, layers, seed)
    if identifier.startswith("hf:"):
        return HFEncoder(
            identifier[3:], device=device, normalize_input=normalize_input
        )
    raise EncoderError(
        f"unknown encoder identifier {identifier!r}; "
        "use toy:<width>x<layers>[@seed] or hf:<model-id-or-path>"
    )
