"""Compare the compiled kernels with the pure-Python fallback.

Run with ``python3 benchmarks/bench_kernels.py [--seconds 2.0] [--repeat 3]``.
Each degradation is timed on the same synthetic utterance with both backends
swapped in, and the outputs are checked for agreement before timing.
"""
import argparse
import timeit

import numpy as np

from unsup_restore import _fallback, corpus, degradations, dsp, kernels

try:
    from unsup_restore import _kernels
except ImportError:
    _kernels = None

KERNELS = ("biquad", "overdrive", "polyphase")


def use(module) -> None:
    for name in KERNELS:
        setattr(kernels, name, getattr(module, name))


def cases(x):
    return {
        "band_limit 4 kHz": lambda: degradations.band_limit(x, 4000.0),
        "overdrive 20/20": lambda: degradations.overdrive(x),
        "resample 22050->8000": lambda: dsp.resample(x, 22050, 8000),
    }


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seconds", type=float, default=2.0, help="utterance length")
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()
    if _kernels is None:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation` first")

    x = corpus.synth_utterance(0, args.seconds)
    print(f"{'operation':24s} {'python (ms)':>12s} {'cython (ms)':>12s} {'speed-up':>9s}")
    for name in cases(x):
        timings = {}
        outputs = {}
        for label, module in (("python", _fallback), ("cython", _kernels)):
            use(module)
            fn = cases(x)[name]
            outputs[label] = fn()
            timings[label] = min(timeit.repeat(fn, number=1, repeat=args.repeat)) * 1e3
        use(_kernels)
        np.testing.assert_allclose(outputs["python"], outputs["cython"], atol=1e-9)
        print(f"{name:24s} {timings['python']:12.1f} {timings['cython']:12.2f} "
              f"{timings['python'] / timings['cython']:8.0f}x")


if __name__ == "__main__":
    main()
