"""Pure-Python versions of the kernels in ``_kernels.pyx``."""
from __future__ import annotations

import numpy as np


def biquad(x: np.ndarray, b0: float, b1: float, b2: float, a1: float, a2: float) -> np.ndarray:
    y = np.empty(len(x), dtype=np.float64)
    x1 = x2 = y1 = y2 = 0.0
    for i, xi in enumerate(x.tolist()):
        yi = b0 * xi + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2
        x2, x1 = x1, xi
        y2, y1 = y1, yi
        y[i] = yi
    return y


def overdrive(x: np.ndarray, gain: float, colour: float) -> np.ndarray:
    y = np.empty(len(x), dtype=np.float64)
    last_in = last_out = 0.0
    for i, d0 in enumerate(x.tolist()):
        d = d0 * gain + colour
        if d < -1.0:
            d = -2.0 / 3.0
        elif d > 1.0:
            d = 2.0 / 3.0
        else:
            d = d - d * d * d * (1.0 / 3.0)
        last_out = d - last_in + 0.995 * last_out
        last_in = d
        o = d0 * 0.5 + last_out * 0.75
        y[i] = min(1.0, max(-1.0, o))
    return y


def polyphase(xpad: np.ndarray, table: np.ndarray, up: int, down: int, n_out: int,
              chunk: int = 4096) -> np.ndarray:
    taps = table.shape[1]
    windows = np.lib.stride_tricks.sliding_window_view(xpad, taps)
    y = np.empty(n_out, dtype=np.float64)
    for start in range(0, n_out, chunk):
        n = np.arange(start, min(start + chunk, n_out), dtype=np.int64) * down
        q, p = np.divmod(n, up)
        y[start:start + len(n)] = np.einsum("ij,ij->i", table[p], windows[q + 1])
    return y
