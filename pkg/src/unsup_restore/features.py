"""Differentiable torch counterparts of the STFT and mel analysis in :mod:`dsp`."""
from __future__ import annotations

import functools
import math

import numpy as np
import torch

from . import dsp

# keeps d|X| finite where the spectrum is exactly zero
MAG_EPS = 1e-12


@functools.lru_cache(maxsize=None)
def _window(n: int, dtype: torch.dtype) -> torch.Tensor:
    return torch.hann_window(n, periodic=True, dtype=dtype)


def stft_magnitude(x: torch.Tensor, window_length: int, hop: int | None = None) -> torch.Tensor:
    """``(..., samples) -> (..., bins, frames)`` magnitude, reflection-padded like :func:`dsp.stft`."""
    hop = window_length // 4 if hop is None else hop
    shape = x.shape
    spec = torch.stft(x.reshape(-1, shape[-1]), window_length, hop, window=_window(window_length, x.dtype),
                      center=True, pad_mode="reflect", return_complex=True)
    mag = torch.sqrt(spec.real ** 2 + spec.imag ** 2 + MAG_EPS)
    return mag.reshape(*shape[:-1], *mag.shape[-2:])


@functools.lru_cache(maxsize=None)
def _filterbank(dtype: torch.dtype) -> torch.Tensor:
    return torch.tensor(dsp.mel_filterbank(), dtype=dtype)


def mel(x: torch.Tensor, floor: float = dsp.FLOOR) -> torch.Tensor:
    """``(..., samples) -> (..., 80, frames)`` floor-clamped mel magnitudes."""
    mag = stft_magnitude(x, dsp.N_FFT, dsp.HOP)
    return torch.clamp(torch.matmul(_filterbank(x.dtype), mag), min=floor)


def log_mel(x: torch.Tensor, floor: float = dsp.FLOOR) -> torch.Tensor:
    return torch.log(mel(x, floor))


def _log_mel_ceiling() -> float:
    # |X(f)| of a signal bounded by 1 never exceeds the window sum, so no mel
    # band can exceed the window sum times its filter's total weight
    window_sum = dsp.N_FFT / 2
    return float(math.log(window_sum * np.max(dsp.mel_filterbank().sum(axis=1))))


LOG_MEL_MAX = _log_mel_ceiling()


def clamp_log_mel(z: torch.Tensor) -> torch.Tensor:
    """Limit predicted log-mel to values a full-scale waveform can actually produce."""
    return torch.clamp(z, min=math.log(dsp.FLOOR), max=LOG_MEL_MAX)
