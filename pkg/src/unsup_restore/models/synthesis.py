"""Synthesis (vocoder) implementations behind one ``log-mel -> waveform`` interface.

``ToyVocoder`` is the differentiable one used in training: a small conv net
predicts a per-bin log-gain correction on top of a fixed mel-to-linear lift,
the magnitudes are paired with a frozen pseudo-random phase field, and a fixed
inverse-STFT overlap-add renders the waveform. ``ReferenceVocoder`` wraps the
Griffin-Lim inverter and is inference-only. ``ExternalVocoder`` adapts any
TorchScript mel vocoder.
"""
from __future__ import annotations

import math

import numpy as np
import torch
from torch import nn

from .. import dsp
from ..features import clamp_log_mel

PHASE_SEED = 20220404


class VocoderError(RuntimeError):
    pass


class ToyVocoder(nn.Module):
    kind = "toy-neural"
    differentiable = True

    def __init__(self, hidden: int = 128, kernel: int = 5):
        super().__init__()
        fb = dsp.mel_filterbank()
        self.n_bins = fb.shape[1]
        self.register_buffer("lift", torch.tensor(np.linalg.pinv(fb), dtype=torch.float32))
        self.register_buffer("window", torch.hann_window(dsp.N_FFT, periodic=True))
        self.net = nn.Sequential(
            nn.Conv1d(dsp.N_MELS, hidden, kernel, padding=kernel // 2),
            nn.LeakyReLU(0.2),
            nn.Conv1d(hidden, hidden, kernel, padding=kernel // 2),
            nn.LeakyReLU(0.2),
            nn.Conv1d(hidden, self.n_bins, 1),
        )
        nn.init.zeros_(self.net[-1].weight)
        nn.init.zeros_(self.net[-1].bias)
        # overlap-add of frames with independent phases divides power by sum(w^2) = 1.5
        self.log_gain = nn.Parameter(torch.tensor(0.5 * math.log(1.5)))
        self._phase_cache: torch.Tensor | None = None

    def _phase(self, frames: int) -> torch.Tensor:
        if self._phase_cache is None or self._phase_cache.shape[-1] < frames:
            gen = torch.Generator().manual_seed(PHASE_SEED)
            n = max(frames, 1024)
            self._phase_cache = 2 * math.pi * torch.rand(self.n_bins, n, generator=gen)
        return self._phase_cache[:, :frames]

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        """``z``: (B, 80, frames) log-mel -> (B, frames * 256) waveform."""
        frames = z.shape[-1]
        z = clamp_log_mel(z)
        lin = torch.clamp(torch.matmul(self.lift.to(z.dtype), torch.exp(z)), min=dsp.FLOOR)
        log_mag = torch.log(lin) + self.net(z) + self.log_gain
        phase = self._phase(frames).to(z.dtype)
        mag = torch.exp(log_mag)
        spec = torch.complex(mag * torch.cos(phase), mag * torch.sin(phase))
        return torch.istft(spec, dsp.N_FFT, dsp.HOP, window=self.window.to(z.dtype), center=True,
                           length=frames * dsp.HOP)


class ReferenceVocoder(nn.Module):
    """Griffin-Lim inversion; rejects inputs that require gradients."""

    kind = "reference"
    differentiable = False

    def __init__(self, iterations: int = 60):
        super().__init__()
        self.iterations = iterations

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        if torch.is_grad_enabled() and z.requires_grad:
            raise VocoderError("the reference vocoder is not differentiable; use toy-neural for training")
        mel = np.exp(clamp_log_mel(z.detach()).cpu().double().numpy())
        out = [dsp.mel_invert_reference(m.T, self.iterations) for m in mel]
        return torch.tensor(np.stack(out), dtype=z.dtype)


class ExternalVocoder(nn.Module):
    """Adapter for a TorchScript module mapping (B, 80, frames) log-mel to (B, samples)."""

    kind = "external"

    def __init__(self, path):
        super().__init__()
        try:
            self.module = torch.jit.load(str(path), map_location="cpu")
        except (RuntimeError, ValueError, FileNotFoundError) as exc:
            raise VocoderError(f"cannot load external vocoder {path}: {exc}") from exc
        self.module.eval()
        for p in self.module.parameters():
            p.requires_grad_(False)

    @property
    def differentiable(self) -> bool:
        return True

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        y = self.module(z)
        return y.reshape(y.shape[0], -1)[:, :z.shape[-1] * dsp.HOP]


def freeze(module: nn.Module) -> nn.Module:
    for p in module.parameters():
        p.requires_grad_(False)
    return module.eval()
