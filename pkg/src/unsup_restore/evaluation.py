"""Objective metrics, dataset manifests and the simulated-dataset builder."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import torch

from . import cache, dsp
from .degradations import DegradationRecipe, apply
from .losses import LossConfig, recons_loss

MCD_CONSTANT = 10.0 * math.sqrt(2.0) / math.log(10.0)
SPLITS = ("train", "val", "test")
MANIFEST_FIELDS = ("id", "clean_path", "degraded_path", "recipe_json", "split", "duration")
METRICS = ("mcd", "msd")


class ManifestError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def match_length(reference: np.ndarray, hypothesis: np.ndarray, tolerance: int = dsp.HOP) -> np.ndarray:
    """Centre-trim or pad ``hypothesis`` to the reference length (within one hop)."""
    diff = len(hypothesis) - len(reference)
    if abs(diff) > tolerance:
        raise ValueError(f"lengths differ by {diff} samples (more than {tolerance})")
    if diff > 0:
        start = diff // 2
        return hypothesis[start:start + len(reference)]
    if diff < 0:
        before = -diff // 2
        return np.pad(hypothesis, (before, -diff - before))
    return hypothesis


def cepstral_distortion(c_ref: np.ndarray, c_hyp: np.ndarray) -> float:
    """Mean frame-wise MCD in dB between cepstra that already exclude c0."""
    return float(MCD_CONSTANT * np.mean(np.linalg.norm(c_ref - c_hyp, axis=1)))


def mcd(reference: np.ndarray, hypothesis: np.ndarray) -> float:
    """Mel cepstral distortion over c1..c24, frame-aligned (no DTW)."""
    hypothesis = match_length(reference, hypothesis)
    c_ref = dsp.mel_cepstrum(dsp.mel_spectrogram(reference))[:, 1:]
    c_hyp = dsp.mel_cepstrum(dsp.mel_spectrogram(hypothesis))[:, 1:]
    return cepstral_distortion(c_ref, c_hyp)


def spectral_distance(reference: np.ndarray, hypothesis: np.ndarray, cfg: LossConfig = LossConfig()) -> float:
    """The multi-scale spectral reconstruction loss used as a metric."""
    hypothesis = match_length(reference, hypothesis)
    with torch.no_grad():
        value = recons_loss(torch.tensor(reference, dtype=torch.float64),
                            torch.tensor(hypothesis, dtype=torch.float64), cfg)
    return float(value)


# ---------------------------------------------------------------------------
# Manifests
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ManifestItem:
    id: str
    clean_path: str
    degraded_path: str | None = None
    recipe: DegradationRecipe | None = None
    split: str = "train"
    duration: float = 0.0


@dataclass
class DatasetManifest:
    items: list[ManifestItem] = field(default_factory=list)
    root: Path | None = None

    def __post_init__(self):
        ids = [it.id for it in self.items]
        if len(ids) != len(set(ids)):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ManifestError(f"duplicate ids: {dupes[:5]}")
        for it in self.items:
            if it.split not in SPLITS:
                raise ManifestError(f"item {it.id}: unknown split {it.split!r}")

    def split(self, name: str) -> list[ManifestItem]:
        return [it for it in self.items if it.split == name]

    def resolve(self, path: str | None) -> Path | None:
        if path is None:
            return None
        p = Path(path)
        return p if p.is_absolute() or self.root is None else self.root / p

    def load_clips(self, split: str | None = None, which: str = "degraded") -> list[np.ndarray]:
        items = self.items if split is None else self.split(split)
        clips = []
        for it in items:
            path = it.degraded_path if which == "degraded" and it.degraded_path else it.clean_path
            clips.append(cache.load_clip(self.resolve(path)))
        return clips

    def check_files(self) -> None:
        for it in self.items:
            for p in (it.clean_path, it.degraded_path):
                if p is not None and not self.resolve(p).exists():
                    raise ManifestError(f"item {it.id}: missing file {self.resolve(p)}")


def write_manifest(manifest: DatasetManifest, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_FIELDS)
        for it in manifest.items:
            writer.writerow([it.id, it.clean_path, it.degraded_path or "",
                             it.recipe.to_json() if it.recipe else "", it.split, f"{it.duration:.6f}"])
    return path


def read_manifest(path, check_files: bool = True) -> DatasetManifest:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != MANIFEST_FIELDS:
            raise ManifestError(f"{path}: header must be {','.join(MANIFEST_FIELDS)}")
        items = [ManifestItem(row["id"], row["clean_path"], row["degraded_path"] or None,
                              DegradationRecipe.from_json(row["recipe_json"]) if row["recipe_json"] else None,
                              row["split"], float(row["duration"] or 0.0))
                 for row in reader]
    manifest = DatasetManifest(items, root=path.parent)
    if check_files:
        manifest.check_files()
    return manifest


def manifest_from_files(paths: Iterable, split: str = "train") -> DatasetManifest:
    items = []
    for p in paths:
        p = Path(p)
        x = dsp.load_wav(p)
        items.append(ManifestItem(p.stem, str(p.resolve()), None, None, split, len(x) / dsp.SAMPLE_RATE))
    return DatasetManifest(items)


# ---------------------------------------------------------------------------
# Simulated datasets
# ---------------------------------------------------------------------------

def assign_splits(ids: Sequence[str], n_val: int, n_test: int, seed: int) -> dict[str, str]:
    if n_val + n_test > len(ids):
        raise ManifestError(f"cannot take {n_val} val + {n_test} test items from {len(ids)}")
    order = np.random.default_rng(seed).permutation(len(ids))
    splits = {}
    for rank, i in enumerate(order):
        splits[ids[i]] = "val" if rank < n_val else "test" if rank < n_val + n_test else "train"
    return splits


def build_simulated_dataset(clean: DatasetManifest, recipe: DegradationRecipe, out_dir, seed: int = 0,
                            n_val: int = 25, n_test: int = 25) -> DatasetManifest:
    """Degrade every clean item with ``recipe``, write WAVs and a manifest.

    Paths in the written manifest are relative to ``out_dir``.
    """
    out_dir = Path(out_dir)
    (out_dir / "degraded").mkdir(parents=True, exist_ok=True)
    splits = assign_splits([it.id for it in clean.items], n_val, n_test, seed)
    items = []
    for it in clean.items:
        src = clean.resolve(it.clean_path)
        x = dsp.load_wav(src)
        y = apply(recipe, x)
        rel = Path("degraded") / f"{it.id}.wav"
        dsp.save_wav(y, out_dir / rel)
        items.append(ManifestItem(it.id, str(Path(src).resolve()), str(rel), recipe, splits[it.id],
                                  len(x) / dsp.SAMPLE_RATE))
    manifest = DatasetManifest(items, root=out_dir)
    write_manifest(manifest, out_dir / "manifest.csv")
    return manifest


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

@dataclass
class MetricReport:
    per_item: list[dict]
    metrics: tuple[str, ...]

    @property
    def aggregate(self) -> dict[str, dict[str, float]]:
        out = {}
        for m in self.metrics:
            values = np.array([row[m] for row in self.per_item], dtype=np.float64)
            out[m] = {"mean": float(values.mean()), "std": float(values.std())}
        return out

    def write(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(("id",) + self.metrics)
            for row in self.per_item:
                writer.writerow([row["id"]] + [repr(row[m]) for m in self.metrics])
        path.with_suffix(".summary.json").write_text(json.dumps(self.aggregate, indent=2, sort_keys=True))


def evaluate(manifest: DatasetManifest, bundle=None, metrics: Sequence[str] = METRICS, split: str = "test",
             vocoder: str = "toy-neural", restore_fn=None) -> MetricReport:
    """Score each ``split`` item against its clean reference.

    With ``bundle=None`` the degraded input itself is scored (the "Input" row).
    """
    from .inference import restore  # local import: inference depends on this module's helpers

    unknown = set(metrics) - set(METRICS)
    if unknown:
        raise ValueError(f"unknown metrics {sorted(unknown)}; choose from {METRICS}")
    items = manifest.split(split)
    if not items:
        raise ManifestError(f"split {split!r} is empty")
    rows = []
    for it in items:
        clean = cache.load_clip(manifest.resolve(it.clean_path))
        source = manifest.resolve(it.degraded_path) if it.degraded_path else manifest.resolve(it.clean_path)
        degraded = cache.load_clip(source)
        if restore_fn is not None:
            hyp = restore_fn(degraded)
        elif bundle is None:
            hyp = degraded
        else:
            hyp = restore(degraded, bundle, vocoder=vocoder)
        row = {"id": it.id}
        if "mcd" in metrics:
            row["mcd"] = mcd(clean, hyp)
        if "msd" in metrics:
            row["msd"] = spectral_distance(clean, hyp)
        rows.append(row)
    return MetricReport(rows, tuple(m for m in METRICS if m in metrics))


def with_split(manifest: DatasetManifest, split: str) -> DatasetManifest:
    return DatasetManifest([replace(it, split=split) for it in manifest.items], manifest.root)
