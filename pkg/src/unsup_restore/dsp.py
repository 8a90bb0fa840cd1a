"""Signal-processing primitives: WAV I/O, STFT, mel analysis, cepstra,
resampling and a Griffin-Lim mel inverter.

Waveforms are 1-D float64 numpy arrays at ``SAMPLE_RATE`` unless a rate is
passed explicitly. Mel spectrograms are ``(frames, n_mels)`` arrays of
floor-clamped linear magnitudes; take ``np.log`` to get log-mel features.
"""
from __future__ import annotations

import functools
import math
from fractions import Fraction
from pathlib import Path

import numpy as np
import scipy.fft
import scipy.io.wavfile

from . import kernels

SAMPLE_RATE = 22050
N_FFT = 1024
HOP = 256
N_MELS = 80
FLOOR = 1e-5
N_CEPSTRUM = 24

RESAMPLE_BETA = 12.9846
RESAMPLE_ZEROS = 64
RESAMPLE_ROLLOFF = 0.945


class AudioError(ValueError):
    """Raised for unreadable, empty or malformed audio."""


# ---------------------------------------------------------------------------
# WAV I/O
# ---------------------------------------------------------------------------

def _to_float(data: np.ndarray) -> np.ndarray:
    if data.dtype == np.int16:
        return data.astype(np.float64) / 32768.0
    if data.dtype == np.int32:
        return data.astype(np.float64) / 2147483648.0
    if data.dtype == np.uint8:
        return (data.astype(np.float64) - 128.0) / 128.0
    if data.dtype in (np.float32, np.float64):
        return data.astype(np.float64)
    raise AudioError(f"unsupported sample format {data.dtype}")


def load_wav(path, target_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Read a mono (or downmixed) WAV file as float64 samples at ``target_rate``."""
    try:
        rate, data = scipy.io.wavfile.read(str(path))
    except FileNotFoundError:
        raise
    except Exception as exc:  # scipy raises bare ValueErrors for bad headers
        raise AudioError(f"cannot read {path}: {exc}") from exc
    x = _to_float(np.asarray(data))
    if x.ndim == 2:
        x = x.mean(axis=1)
    if x.size == 0:
        raise AudioError(f"{path} contains no samples")
    if rate != target_rate:
        x = resample(x, rate, target_rate)
    return x


def save_wav(x: np.ndarray, path, sample_rate: int = SAMPLE_RATE) -> None:
    """Write ``x`` as 16-bit PCM. Samples outside [-1, 1] are clipped."""
    x = np.asarray(x, dtype=np.float64)
    pcm = np.clip(np.round(x * 32768.0), -32768, 32767).astype(np.int16)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    scipy.io.wavfile.write(str(path), sample_rate, pcm)


# ---------------------------------------------------------------------------
# STFT
# ---------------------------------------------------------------------------

@functools.lru_cache(maxsize=None)
def hann_window(n: int) -> np.ndarray:
    """Periodic Hann window (matches ``torch.hann_window``)."""
    w = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)
    w.setflags(write=False)
    return w


def _check_window(window_length: int) -> None:
    if window_length < 64 or window_length > 2048 or window_length & (window_length - 1):
        raise ValueError(f"window length must be a power of two in [64, 2048], got {window_length}")


def stft(x: np.ndarray, window_length: int, hop: int | None = None) -> np.ndarray:
    """Complex STFT, ``(frames, window_length // 2 + 1)``, reflection-padded and centered."""
    _check_window(window_length)
    hop = window_length // 4 if hop is None else hop
    x = np.asarray(x, dtype=np.float64)
    pad = window_length // 2
    if x.ndim != 1 or len(x) <= pad:
        raise AudioError(f"need more than {pad} samples for window {window_length}, got {x.shape}")
    xp = np.pad(x, pad, mode="reflect")
    n_frames = len(x) // hop + 1
    frames = np.lib.stride_tricks.sliding_window_view(xp, window_length)[::hop][:n_frames]
    return np.fft.rfft(frames * hann_window(window_length), axis=-1)


def stft_magnitude(x: np.ndarray, window_length: int, hop: int | None = None) -> np.ndarray:
    return np.abs(stft(x, window_length, hop))


def istft(spec: np.ndarray, window_length: int, hop: int | None = None,
          length: int | None = None) -> np.ndarray:
    """Least-squares inverse of :func:`stft` (weighted overlap-add)."""
    hop = window_length // 4 if hop is None else hop
    n_frames = spec.shape[0]
    w = hann_window(window_length)
    frames = np.fft.irfft(spec, n=window_length, axis=-1) * w
    total = window_length + hop * (n_frames - 1)
    out = np.zeros(total)
    norm = np.zeros(total)
    for t in range(n_frames):
        out[t * hop:t * hop + window_length] += frames[t]
        norm[t * hop:t * hop + window_length] += w * w
    out /= np.maximum(norm, 1e-11)
    pad = window_length // 2
    out = out[pad:]
    length = hop * (n_frames - 1) if length is None else length
    if len(out) < length:
        out = np.pad(out, (0, length - len(out)))
    return out[:length]


# ---------------------------------------------------------------------------
# Mel analysis
# ---------------------------------------------------------------------------

def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@functools.lru_cache(maxsize=None)
def mel_filterbank(sample_rate: int = SAMPLE_RATE, n_fft: int = N_FFT, n_mels: int = N_MELS,
                   fmin: float = 0.0, fmax: float | None = None) -> np.ndarray:
    """Triangular HTK-scale filterbank, ``(n_mels, n_fft // 2 + 1)``, unit-area filters."""
    fmax = sample_rate / 2 if fmax is None else fmax
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    lower, centre, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lower) / (centre - lower)
    falling = (upper - freqs) / (upper - centre)
    fb = np.maximum(0.0, np.minimum(rising, falling))
    fb *= 2.0 / (upper - lower)
    fb.setflags(write=False)
    return fb


def mel_spectrogram(x: np.ndarray, sample_rate: int = SAMPLE_RATE, floor: float = FLOOR) -> np.ndarray:
    """80-band mel magnitudes of ``x`` (1024-sample frames, hop 256), clamped at ``floor``."""
    if sample_rate != SAMPLE_RATE:
        raise ValueError(f"mel analysis expects {SAMPLE_RATE} Hz audio, got {sample_rate}")
    mag = stft_magnitude(x, N_FFT, HOP)
    return np.maximum(mag @ mel_filterbank().T, floor)


def log_mel(x: np.ndarray, floor: float = FLOOR) -> np.ndarray:
    return np.log(mel_spectrogram(x, floor=floor))


def mel_cepstrum(mel: np.ndarray, order: int = N_CEPSTRUM) -> np.ndarray:
    """Orthonormal DCT-II of log-mel, keeping c0..c{order}."""
    mel = np.asarray(mel, dtype=np.float64)
    if mel.ndim != 2 or np.any(mel <= 0):
        raise ValueError("expected a (frames, bands) array of positive mel magnitudes")
    if order + 1 > mel.shape[1]:
        raise ValueError(f"cannot keep {order + 1} coefficients from {mel.shape[1]} bands")
    return scipy.fft.dct(np.log(mel), type=2, norm="ortho", axis=-1)[:, :order + 1]


# ---------------------------------------------------------------------------
# Resampling
# ---------------------------------------------------------------------------

@functools.lru_cache(maxsize=32)
def _polyphase_table(up: int, down: int, num_zeros: int, beta: float, rolloff: float):
    # positions are measured in input samples; the sinc cutoff is relative to
    # the input Nyquist, so downsampling narrows it by up/down
    cutoff = rolloff * min(1.0, up / down)
    half_width = num_zeros / cutoff
    k = int(math.ceil(half_width))
    phase = np.arange(up)[:, None] / up
    d = phase + (k - 1) - np.arange(2 * k)[None, :]
    inside = np.abs(d) <= half_width
    ratio = np.where(inside, d / half_width, 0.0)
    window = np.i0(beta * np.sqrt(np.clip(1.0 - ratio ** 2, 0.0, None))) / np.i0(beta)
    table = np.where(inside, cutoff * np.sinc(cutoff * d) * window, 0.0)
    table = np.ascontiguousarray(table)
    table.setflags(write=False)
    return table, k


def resample(x: np.ndarray, source_rate: float, target_rate: float,
             num_zeros: int = RESAMPLE_ZEROS, beta: float = RESAMPLE_BETA,
             rolloff: float = RESAMPLE_ROLLOFF) -> np.ndarray:
    """Kaiser-windowed-sinc polyphase resampling.

    Output length is ``round(len(x) * target_rate / source_rate)``.
    """
    if target_rate <= 0 or source_rate <= 0:
        raise ValueError(f"sample rates must be positive, got {source_rate} -> {target_rate}")
    x = np.ascontiguousarray(x, dtype=np.float64)
    ratio = Fraction(target_rate).limit_denominator(10_000) / Fraction(source_rate).limit_denominator(10_000)
    up, down = ratio.numerator, ratio.denominator
    if up == down:
        return x.copy()
    table, k = _polyphase_table(up, down, num_zeros, beta, rolloff)
    n_out = (len(x) * up + down // 2) // down
    xpad = np.concatenate([np.zeros(k), x, np.zeros(k + 1)])
    return kernels.polyphase(xpad, table, up, down, n_out)


# ---------------------------------------------------------------------------
# Reference mel inversion
# ---------------------------------------------------------------------------

def mel_to_linear(mel: np.ndarray, iterations: int = 300) -> np.ndarray:
    """Non-negative least-squares lift from mel to linear magnitudes.

    Solved for all frames at once with multiplicative updates, which keep the
    iterate non-negative and never increase the residual.
    """
    fb = mel_filterbank()
    mel = np.asarray(mel, dtype=np.float64)
    target = mel @ fb
    s = np.maximum(target, 1e-12)
    for _ in range(iterations):
        s *= target / np.maximum((s @ fb.T) @ fb, 1e-30)
    return s


def griffin_lim(magnitude: np.ndarray, iterations: int, window_length: int = N_FFT,
                hop: int = HOP, length: int | None = None, history: list | None = None) -> np.ndarray:
    """Griffin-Lim from zero phase. Appends the spectral convergence per round to ``history``."""
    length = hop * magnitude.shape[0] if length is None else length
    # iterate at the natural length so the re-analysis has the same frame count
    natural = hop * (magnitude.shape[0] - 1)
    spec = magnitude.astype(np.complex128)
    x = istft(spec, window_length, hop, natural)
    ref = np.linalg.norm(magnitude)
    for _ in range(iterations):
        rebuilt = stft(x, window_length, hop)
        if history is not None:
            history.append(np.linalg.norm(np.abs(rebuilt) - magnitude) / max(ref, 1e-12))
        spec = magnitude * np.exp(1j * np.angle(rebuilt))
        x = istft(spec, window_length, hop, natural)
    return np.pad(x, (0, max(0, length - natural)))[:length]


def mel_invert_reference(mel: np.ndarray, iterations: int = 60, history: list | None = None) -> np.ndarray:
    """Deterministic mel vocoder: NNLS lift followed by Griffin-Lim.

    Output has ``frames * HOP`` samples.
    """
    return griffin_lim(mel_to_linear(mel), iterations, length=mel.shape[0] * HOP, history=history)
