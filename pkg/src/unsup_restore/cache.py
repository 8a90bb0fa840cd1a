"""Optional on-disk cache of decoded, resampled clips.

Enabled by pointing ``UNSUP_RESTORE_CACHE`` at a writable directory. Entries
are keyed by absolute path, size and modification time, so editing a WAV
invalidates its entry.
"""
from __future__ import annotations

import hashlib
import os
from pathlib import Path

import numpy as np

from . import dsp

ENV_VAR = "UNSUP_RESTORE_CACHE"


def cache_dir() -> Path | None:
    value = os.environ.get(ENV_VAR)
    return Path(value) if value else None


def _key(path: Path) -> str:
    st = path.stat()
    raw = f"{path.resolve()}|{st.st_size}|{st.st_mtime_ns}|{dsp.SAMPLE_RATE}"
    return hashlib.sha1(raw.encode()).hexdigest()


def load_clip(path) -> np.ndarray:
    """``dsp.load_wav`` with a transparent cache when one is configured."""
    path = Path(path)
    root = cache_dir()
    if root is None:
        return dsp.load_wav(path)
    entry = root / "clips" / f"{_key(path)}.npy"
    if entry.exists():
        return np.load(entry)
    x = dsp.load_wav(path)
    entry.parent.mkdir(parents=True, exist_ok=True)
    tmp = entry.with_suffix(f".{os.getpid()}.tmp.npy")
    np.save(tmp, x)
    os.replace(tmp, entry)
    return x
