"""Kernel backend selection.

The compiled extension is used when it was built; otherwise the pure-Python
fallback is imported. Set ``UNSUP_RESTORE_PURE_PYTHON=1`` to force the
fallback (useful for benchmarking and for checking the two against each other).
"""
from __future__ import annotations

import os

from . import _fallback

BACKEND = "python"
if os.environ.get("UNSUP_RESTORE_PURE_PYTHON", "") not in ("1", "true"):
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _fallback
else:
    _impl = _fallback

biquad = _impl.biquad
overdrive = _impl.overdrive
polyphase = _impl.polyphase

__all__ = ["BACKEND", "biquad", "overdrive", "polyphase"]
