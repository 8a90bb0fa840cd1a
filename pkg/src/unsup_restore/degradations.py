"""Simulated channel distortions and the random pretraining sampler.

Every degradation is a pure function of its input and a
:class:`DegradationRecipe`; applying the same recipe twice gives bit-identical
output.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .dsp import SAMPLE_RATE, resample

KINDS = ("band_limited", "clipped", "quantized_resampled", "overdrive", "random_pretrain")

PRETRAIN_BITS = (6, 7, 8, 9, 10)
PRETRAIN_RATES = (8000, 11250, 12000, 16000)

# the four simulated test conditions
DEFAULT_PARAMS = {
    "band_limited": {"cutoff_hz": 4000.0},
    "clipped": {"clip_threshold": 0.25},
    "quantized_resampled": {"bits": 8, "intermediate_rate_hz": 8000},
    "overdrive": {"gain_db": 20.0, "colour": 20.0},
    "random_pretrain": {},
}


class RecipeError(ValueError):
    pass


@dataclass(frozen=True)
class DegradationRecipe:
    kind: str
    params: dict = field(default_factory=dict)
    seed: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise RecipeError(f"unknown degradation kind {self.kind!r}; expected one of {KINDS}")
        p = self.params
        if self.kind == "band_limited":
            _require(p, "cutoff_hz", lambda v: 0 < v < SAMPLE_RATE / 2, "in (0, 11025)")
        elif self.kind == "clipped":
            _require(p, "clip_threshold", lambda v: 0 < v <= 1, "in (0, 1]")
        elif self.kind == "quantized_resampled":
            _require(p, "bits", lambda v: 2 <= v <= 16 and int(v) == v, "an integer in [2, 16]")
            _require(p, "intermediate_rate_hz", lambda v: 0 < v <= SAMPLE_RATE, "in (0, 22050]")
        elif self.kind == "overdrive":
            _require(p, "gain_db", lambda v: v >= 0, ">= 0")
            _require(p, "colour", lambda v: 0 <= v <= 100, "in [0, 100]")
        elif self.seed is None:
            raise RecipeError("random_pretrain recipes need a seed")

    @classmethod
    def default(cls, kind: str, **overrides) -> "DegradationRecipe":
        params = dict(DEFAULT_PARAMS.get(kind, {}))
        seed = overrides.pop("seed", None)
        params.update({k: v for k, v in overrides.items() if v is not None})
        return cls(kind, params, seed)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "DegradationRecipe":
        d = json.loads(text)
        return cls(d["kind"], d.get("params", {}), d.get("seed"))


def _require(params, key, ok, what):
    if key not in params:
        raise RecipeError(f"missing parameter {key!r}")
    try:
        valid = ok(params[key])
    except TypeError:
        valid = False
    if not valid:
        raise RecipeError(f"{key} must be {what}, got {params[key]!r}")


def _as_float64(x) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=np.float64)


def lowpass_coefficients(cutoff_hz: float, sample_rate: int = SAMPLE_RATE, q: float = 1 / math.sqrt(2)):
    """RBJ cookbook lowpass, normalised so ``a0 == 1``. Returns ``(b, a)``."""
    w0 = 2.0 * math.pi * cutoff_hz / sample_rate
    alpha = math.sin(w0) / (2.0 * q)
    cos_w0 = math.cos(w0)
    a0 = 1.0 + alpha
    b = np.array([(1.0 - cos_w0) / 2.0, 1.0 - cos_w0, (1.0 - cos_w0) / 2.0]) / a0
    a = np.array([1.0, -2.0 * cos_w0 / a0, (1.0 - alpha) / a0])
    return b, a


def band_limit(x: np.ndarray, cutoff_hz: float = 4000.0, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Single causal pass of a Butterworth-Q biquad lowpass."""
    if not 0 < cutoff_hz < sample_rate / 2:
        raise RecipeError(f"cutoff must lie in (0, {sample_rate / 2}), got {cutoff_hz}")
    b, a = lowpass_coefficients(cutoff_hz, sample_rate)
    return kernels.biquad(_as_float64(x), b[0], b[1], b[2], a[1], a[2])


def clip(x: np.ndarray, threshold: float = 0.25) -> np.ndarray:
    if not 0 < threshold <= 1:
        raise RecipeError(f"clip threshold must be in (0, 1], got {threshold}")
    return np.clip(_as_float64(x), -threshold, threshold)


def mu_law_compress(x, mu):
    return np.sign(x) * np.log1p(mu * np.abs(x)) / np.log1p(mu)


def mu_law_expand(y, mu):
    return np.sign(y) * np.expm1(np.abs(y) * np.log1p(mu)) / mu


def mu_law_quantize(x: np.ndarray, bits: int = 8) -> np.ndarray:
    """Companding quantizer with ``mu = 2**bits - 1``.

    Codes ``0..mu`` map to evenly spaced companded levels spanning [-1, 1]
    inclusive, so at most ``2**bits`` distinct output values are produced and
    full scale survives exactly.
    """
    if not (2 <= bits <= 16 and int(bits) == bits):
        raise RecipeError(f"bits must be an integer in [2, 16], got {bits}")
    mu = 2 ** int(bits) - 1
    companded = mu_law_compress(np.clip(_as_float64(x), -1.0, 1.0), mu)
    codes = np.floor((companded + 1.0) / 2.0 * mu + 0.5)
    return mu_law_expand(2.0 * codes / mu - 1.0, mu)


def quantize_and_resample(x: np.ndarray, bits: int = 8, intermediate_rate: float = 8000,
                          sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    x = _as_float64(x)
    if not 0 < intermediate_rate <= sample_rate:
        raise RecipeError(f"intermediate rate must be in (0, {sample_rate}], got {intermediate_rate}")
    y = mu_law_quantize(x, bits)
    y = resample(resample(y, sample_rate, intermediate_rate), intermediate_rate, sample_rate)
    if len(y) >= len(x):
        return y[:len(x)]
    return np.pad(y, (0, len(x) - len(y)))


def overdrive(x: np.ndarray, gain_db: float = 20.0, colour: float = 20.0) -> np.ndarray:
    """SoX ``overdrive`` effect: gain, DC offset, cubic soft clip, DC block, 1:1.5 dry/wet mix."""
    if gain_db < 0:
        raise RecipeError(f"gain_db must be >= 0, got {gain_db}")
    return kernels.overdrive(_as_float64(x), 10.0 ** (gain_db / 20.0), colour / 200.0)


def sample_pretrain_recipe(rng_seed: int) -> DegradationRecipe:
    """Draw bit depth from {6..10} and intermediate rate from {8, 11.25, 12, 16} kHz."""
    rng = np.random.default_rng(rng_seed)
    bits = int(rng.choice(PRETRAIN_BITS))
    rate = int(rng.choice(PRETRAIN_RATES))
    return DegradationRecipe("quantized_resampled", {"bits": bits, "intermediate_rate_hz": rate})


def apply(recipe: DegradationRecipe, x: np.ndarray) -> np.ndarray:
    """Apply ``recipe`` to ``x``; output length always equals input length."""
    p = recipe.params
    if recipe.kind == "band_limited":
        return band_limit(x, p["cutoff_hz"])
    if recipe.kind == "clipped":
        return clip(x, p["clip_threshold"])
    if recipe.kind == "quantized_resampled":
        return quantize_and_resample(x, int(p["bits"]), p["intermediate_rate_hz"])
    if recipe.kind == "overdrive":
        return overdrive(x, p["gain_db"], p["colour"])
    if recipe.kind == "random_pretrain":
        return apply(sample_pretrain_recipe(recipe.seed), x)
    raise RecipeError(f"unknown degradation kind {recipe.kind!r}")


class RecipeStream:
    """Seeded stream of pretraining recipes, one per (epoch, item) draw."""

    def __init__(self, seed: int):
        self.seed = seed
        self._seq = np.random.SeedSequence(seed)
        self._rng = np.random.default_rng(self._seq)

    def next_recipe(self) -> DegradationRecipe:
        return sample_pretrain_recipe(int(self._rng.integers(2 ** 63 - 1)))

    def state(self) -> dict:
        return self._rng.bit_generator.state

    def set_state(self, state: dict) -> None:
        self._rng.bit_generator.state = state
