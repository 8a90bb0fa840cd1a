"""Speech restoration and audio effect transfer with a trained bundle."""
from __future__ import annotations

import contextlib

import numpy as np
import torch

from . import dsp
from .features import log_mel
from .models import ModelBundle, build_vocoder


@contextlib.contextmanager
def _eval_mode(bundle: ModelBundle):
    modules = (bundle.analysis, bundle.channel, bundle.synthesis)
    previous = [m.training for m in modules]
    bundle.eval()
    try:
        with torch.no_grad():
            yield
    finally:
        for m, was_training in zip(modules, previous):
            m.train(was_training)


def _fit_length(y: np.ndarray, n: int) -> np.ndarray:
    return y[:n] if len(y) >= n else np.pad(y, (0, n - len(y)))


def _chunked(fn, x: np.ndarray, chunk_seconds: float | None) -> np.ndarray:
    """Apply ``fn`` to 50%-overlapping chunks joined with triangular cross-fades."""
    if not chunk_seconds:
        return fn(x)
    size = int(round(chunk_seconds * dsp.SAMPLE_RATE))
    size += size % 2
    if len(x) <= size:
        return fn(x)
    hop = size // 2
    starts = list(range(0, len(x) - size + 1, hop))
    if starts[-1] + size < len(x):
        starts.append(len(x) - size)
    ramp = np.bartlett(size + 2)[1:-1]
    out = np.zeros(len(x))
    weight = np.zeros(len(x))
    for s in starts:
        w = ramp.copy()
        # full weight at the file edges so the first and last samples are not faded out
        if s == 0:
            w[:hop] = 1.0
        if s + size == len(x):
            w[hop:] = 1.0
        out[s:s + size] += w * fn(x[s:s + size])
        weight[s:s + size] += w
    return out / np.maximum(weight, 1e-12)


def restore(x_low: np.ndarray, bundle: ModelBundle, vocoder: str = "toy-neural",
            chunk_seconds: float | None = None, vocoder_checkpoint=None) -> np.ndarray:
    """Restored waveform (same length as ``x_low``) from analysis + synthesis."""
    x_low = np.asarray(x_low, dtype=np.float64)
    if vocoder == "toy-neural":
        synth = bundle.synthesis
    else:
        synth = build_vocoder(vocoder, bundle.config, vocoder_checkpoint)

    def run(x):
        xt = torch.tensor(x[None], dtype=torch.float32)
        z, _ = bundle.analysis(log_mel(xt))
        return _fit_length(synth(z)[0].double().numpy(), len(x))

    with _eval_mode(bundle):
        synth.eval()
        return _chunked(run, x_low, chunk_seconds)


def extract_channel(x_low: np.ndarray, bundle: ModelBundle) -> np.ndarray:
    """Time-invariant channel vector of a degraded recording."""
    with _eval_mode(bundle):
        xt = torch.tensor(np.asarray(x_low, dtype=np.float64)[None], dtype=torch.float32)
        _, c = bundle.analysis(log_mel(xt))
    return c[0].double().numpy()


def transfer_effect(x_clean: np.ndarray, c: np.ndarray, bundle: ModelBundle,
                    chunk_seconds: float | None = None) -> np.ndarray:
    """Distort ``x_clean`` with the channel module conditioned on ``c``."""
    c = np.asarray(c, dtype=np.float64)
    if c.shape != (bundle.config.channel_dim,):
        raise ValueError(f"channel vector must have shape ({bundle.config.channel_dim},), got {c.shape}")
    ct = torch.tensor(c[None], dtype=torch.float32)

    def run(x):
        xt = torch.tensor(x[None], dtype=torch.float32)
        return bundle.channel(xt, ct)[0].double().numpy()

    with _eval_mode(bundle):
        return _chunked(run, np.asarray(x_clean, dtype=np.float64), chunk_seconds)
