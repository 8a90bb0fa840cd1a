"""Synthetic speech-like corpus.

No speech data ships with the package, so tests, benchmarks and the desk-scale
experiments run on utterances built from a source-filter recipe: a glottal
pulse train with jittered pitch through moving formant resonators, broadband
fricative bursts and short pauses. The signals have the properties the
restoration pipeline cares about (harmonic low band, noisy high band, pauses)
and are fully determined by a seed.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
import scipy.signal

from .dsp import SAMPLE_RATE, save_wav

VOWELS = (
    (730, 1090, 2440, 3400),
    (270, 2290, 3010, 3700),
    (300, 870, 2240, 3500),
    (530, 1840, 2480, 3600),
    (570, 840, 2410, 3300),
    (440, 1020, 2240, 3450),
)
BANDWIDTHS = (80, 100, 140, 200)


def _resonator(x, freq, bandwidth, sr):
    r = np.exp(-np.pi * bandwidth / sr)
    theta = 2 * np.pi * freq / sr
    a = [1.0, -2 * r * np.cos(theta), r * r]
    return scipy.signal.lfilter([1.0 - r], a, x)


def _voiced(rng, n, sr):
    f0 = rng.uniform(110, 240)
    contour = f0 * (1 + 0.12 * np.sin(2 * np.pi * rng.uniform(1, 4) * np.arange(n) / sr + rng.uniform(0, 6)))
    contour *= 1 + 0.01 * rng.standard_normal(n).cumsum() / np.sqrt(np.arange(1, n + 1))
    phase = np.cumsum(contour / sr)
    # differentiated pulse train: strong harmonics with a natural roll-off
    pulses = np.diff(np.floor(phase), prepend=0.0)
    source = scipy.signal.lfilter([1.0, -0.95], [1.0], pulses)
    source += 0.03 * rng.standard_normal(n)
    v0, v1 = VOWELS[rng.integers(len(VOWELS))], VOWELS[rng.integers(len(VOWELS))]
    half = n // 2
    out = np.zeros(n)
    for seg, formants in ((slice(0, half), v0), (slice(half, n), v1)):
        y = source[seg]
        acc = np.zeros_like(y)
        for f, bw in zip(formants, BANDWIDTHS):
            acc += _resonator(y, f * rng.uniform(0.95, 1.05), bw, sr)
        out[seg] = acc
    # weak high-frequency formant keeps energy above 4 kHz in voiced frames
    out += 0.4 * _resonator(source, rng.uniform(4500, 6000), 600, sr)
    return out


def _fricative(rng, n, sr):
    noise = rng.standard_normal(n)
    lo = rng.uniform(2500, 4500)
    hi = min(rng.uniform(7000, 10500), sr / 2 - 100)
    sos = scipy.signal.butter(4, [lo, hi], btype="bandpass", fs=sr, output="sos")
    return scipy.signal.sosfilt(sos, noise)


def synth_utterance(seed: int, seconds: float = 2.0, sample_rate: int = SAMPLE_RATE,
                    peak: float = 0.9) -> np.ndarray:
    """One speech-like utterance of ``seconds`` duration, peak-normalised to ``peak``."""
    rng = np.random.default_rng(seed)
    n_total = int(round(seconds * sample_rate))
    out = np.zeros(n_total)
    pos = int(rng.uniform(0.02, 0.08) * sample_rate)
    while pos < n_total:
        kind = rng.choice(["voiced", "voiced", "fricative", "pause"], p=[0.45, 0.25, 0.2, 0.1])
        n = int(rng.uniform(0.08, 0.25) * sample_rate)
        n = min(n, n_total - pos)
        if n < 64:
            break
        if kind == "pause":
            pos += n
            continue
        seg = _voiced(rng, n, sample_rate) if kind == "voiced" else _fricative(rng, n, sample_rate)
        seg /= np.max(np.abs(seg)) + 1e-12
        env = np.sin(np.pi * np.linspace(0, 1, n)) ** 0.5
        gain = rng.uniform(0.3, 1.0) if kind == "voiced" else rng.uniform(0.05, 0.25)
        out[pos:pos + n] += gain * env * seg
        pos += n
    out += 1e-4 * rng.standard_normal(n_total)
    return peak * out / np.max(np.abs(out))


def write_corpus(out_dir, n_items: int, seconds: float = 2.0, seed: int = 0,
                 prefix: str = "utt") -> list[tuple[str, Path, float]]:
    """Write ``n_items`` utterances as WAVs; returns ``(id, path, duration)`` rows."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    seeds = np.random.SeedSequence(seed).generate_state(n_items)
    rows = []
    for i, s in enumerate(seeds):
        item_id = f"{prefix}{i:04d}"
        path = out_dir / f"{item_id}.wav"
        x = synth_utterance(int(s), seconds)
        save_wav(x, path)
        rows.append((item_id, path, len(x) / SAMPLE_RATE))
    return rows
