"""Training tasks: forward (self-supervised reconstruction), dual learning,
supervised pretraining, plus the epoch loop with plateau scheduling,
validation-based model selection, checkpointing and resume.
"""
from __future__ import annotations

import copy
import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch

from . import degradations, dsp
from .features import log_mel
from .losses import LossConfig, combined_loss, feature_loss, recons_loss, stop_gradient_to_channel
from .models import ModelBundle, save_bundle
from .models.synthesis import freeze

log = logging.getLogger(__name__)

TASKS = ("forward_only", "dual", "pretrain")


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    task: str = "dual"
    batch_size: int = 4
    max_epochs: int = 50
    lr: float = 1e-3
    lr_decay: float = 0.5
    patience_epochs: int = 3
    beta: float | None = None
    seed: int = 0
    clip_seconds: float = 2.0
    steps_per_epoch: int | None = None
    vocoder_steps: int = 300

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"train.task must be one of {TASKS}, got {self.task!r}")
        for name in ("batch_size", "max_epochs", "patience_epochs"):
            if getattr(self, name) < 1:
                raise ValueError(f"train.{name} must be >= 1, got {getattr(self, name)}")
        if self.lr <= 0 or not 0 < self.lr_decay <= 1:
            raise ValueError("train.lr must be > 0 and train.lr_decay in (0, 1]")
        if self.beta is not None and not 0 <= self.beta <= 1:
            raise ValueError(f"train.beta must be in [0, 1], got {self.beta}")
        if self.vocoder_steps < 0:
            raise ValueError(f"train.vocoder_steps must be >= 0, got {self.vocoder_steps}")
        if self.steps_per_epoch is not None and self.steps_per_epoch < 1:
            raise ValueError(f"train.steps_per_epoch must be >= 1, got {self.steps_per_epoch}")
        if self.clip_seconds <= 0:
            raise ValueError(f"train.clip_seconds must be > 0, got {self.clip_seconds}")

    def resolved_beta(self, loss_cfg: LossConfig) -> float:
        if self.beta is not None:
            return self.beta
        return {"forward_only": 0.0, "dual": loss_cfg.beta_dual, "pretrain": loss_cfg.beta_pretrain}[self.task]

    @property
    def clip_samples(self) -> int:
        return int(round(self.clip_seconds * dsp.SAMPLE_RATE))


@dataclass
class TrainState:
    epoch: int = 0
    best_val: float = math.inf
    lr_current: float = 1e-3
    epochs_since_improve: int = 0
    decays: int = 0
    rng_state: dict = field(default_factory=dict)
    recipe_state: dict = field(default_factory=dict)


class PlateauScheduler:
    """Multiply the rate by ``decay`` once ``patience`` validation epochs pass without a new minimum."""

    def __init__(self, state: TrainState, decay: float = 0.5, patience: int = 3):
        self.state = state
        self.decay = decay
        self.patience = patience

    def update(self, val_loss: float) -> bool:
        """Record one validation loss; returns True when it is a new best."""
        s = self.state
        if val_loss < s.best_val:
            s.best_val = val_loss
            s.epochs_since_improve = 0
            return True
        s.epochs_since_improve += 1
        if s.epochs_since_improve >= self.patience:
            s.lr_current *= self.decay
            s.decays += 1
            s.epochs_since_improve = 0
        return False


# ---------------------------------------------------------------------------
# Loss computations (no parameter updates)
# ---------------------------------------------------------------------------

def _check_synthesis(bundle: ModelBundle) -> None:
    if not getattr(bundle.synthesis, "differentiable", False):
        raise TrainingError(f"vocoder {bundle.synthesis.kind!r} cannot be used for training")


def _synthesize(bundle: ModelBundle, z: torch.Tensor, n_samples: int) -> torch.Tensor:
    return bundle.synthesis(z)[..., :n_samples]


def forward_task_losses(bundle: ModelBundle, x_low: torch.Tensor, loss_cfg: LossConfig):
    """Reconstruct degraded speech through analysis -> synthesis -> channel.

    Returns ``(l_recons, channel_vector)``.
    """
    _check_synthesis(bundle)
    y_low = log_mel(x_low)
    z_res, c = bundle.analysis(y_low)
    x_res = _synthesize(bundle, z_res, x_low.shape[-1])
    x_low_hat = bundle.channel(x_res, c)
    return recons_loss(x_low, x_low_hat, loss_cfg), c


def backward_task_loss(bundle: ModelBundle, x_high: torch.Tensor, c: torch.Tensor) -> torch.Tensor:
    """Distort clean speech with the channel module, analyse it back, compare features.

    The channel runs with its parameters cut from the graph, so this loss
    never updates the channel module.
    """
    x_low_hat = stop_gradient_to_channel(bundle.channel, x_high, c)
    z_res, _ = bundle.analysis(log_mel(x_low_hat))
    return feature_loss(log_mel(x_high), z_res)


def dual_task_losses(bundle: ModelBundle, x_low: torch.Tensor, x_high: torch.Tensor,
                     loss_cfg: LossConfig, beta: float):
    l_recons, c = forward_task_losses(bundle, x_low, loss_cfg)
    # pair clean item i with the channel vector of degraded item i
    n = x_high.shape[0]
    c_pair = c[torch.arange(n) % c.shape[0]]
    l_feature = backward_task_loss(bundle, x_high, c_pair)
    return l_recons, l_feature, combined_loss(l_recons, l_feature, beta)


def pretrain_task_losses(bundle: ModelBundle, x_high: torch.Tensor, x_pseudo_low: torch.Tensor,
                         loss_cfg: LossConfig, beta: float):
    """Supervised pair: analysis sees the pseudo-degraded audio, the channel
    re-distorts the clean audio (the synthesis module is not used)."""
    z_res, c = bundle.analysis(log_mel(x_pseudo_low))
    l_feature = feature_loss(log_mel(x_high), z_res)
    x_low_hat = bundle.channel(x_high, c)
    l_recons = recons_loss(x_pseudo_low, x_low_hat, loss_cfg)
    return l_recons, l_feature, combined_loss(l_recons, l_feature, beta)


def _finite_or_raise(where: str, **losses) -> None:
    for name, value in losses.items():
        if not torch.isfinite(value).all():
            detail = ", ".join(f"{k}={float(v):.6g}" for k, v in losses.items())
            raise TrainingError(f"non-finite {name} in {where}: {detail}")


# ---------------------------------------------------------------------------
# Single optimisation steps
# ---------------------------------------------------------------------------

def _optimize(optimizer: torch.optim.Optimizer, total: torch.Tensor) -> None:
    optimizer.zero_grad(set_to_none=True)
    total.backward()
    optimizer.step()


def step_forward_task(batch_low: torch.Tensor, bundle: ModelBundle, optimizer, loss_cfg: LossConfig,
                      where: str = "forward step") -> float:
    l_recons, _ = forward_task_losses(bundle, batch_low, loss_cfg)
    _finite_or_raise(where, recons=l_recons)
    _optimize(optimizer, l_recons)
    return l_recons.item()


def step_dual_task(batch_low: torch.Tensor, batch_high: torch.Tensor, bundle: ModelBundle, optimizer,
                   loss_cfg: LossConfig, beta: float, where: str = "dual step"):
    l_recons, l_feature, total = dual_task_losses(bundle, batch_low, batch_high, loss_cfg, beta)
    _finite_or_raise(where, recons=l_recons, feature=l_feature)
    _optimize(optimizer, total)
    return l_recons.item(), l_feature.item()


def step_pretrain_task(batch_high: torch.Tensor, bundle: ModelBundle, optimizer, loss_cfg: LossConfig,
                       beta: float, recipe_stream: degradations.RecipeStream, where: str = "pretrain step"):
    pseudo = pseudo_degrade(batch_high, recipe_stream)
    l_recons, l_feature, total = pretrain_task_losses(bundle, batch_high, pseudo, loss_cfg, beta)
    _finite_or_raise(where, recons=l_recons, feature=l_feature)
    _optimize(optimizer, total)
    return l_recons.item(), l_feature.item()


def pseudo_degrade(batch_high: torch.Tensor, recipe_stream: degradations.RecipeStream) -> torch.Tensor:
    rows = [degradations.apply(recipe_stream.next_recipe(), x) for x in batch_high.detach().double().numpy()]
    return torch.tensor(np.stack(rows), dtype=batch_high.dtype)


# ---------------------------------------------------------------------------
# Data
# ---------------------------------------------------------------------------

def _crop(x: np.ndarray, n: int, rng: np.random.Generator | None) -> np.ndarray:
    if len(x) <= n:
        return np.pad(x, (0, n - len(x)))
    start = len(x) // 2 - n // 2 if rng is None else int(rng.integers(0, len(x) - n + 1))
    return x[start:start + n]


def make_batch(clips: Sequence[np.ndarray], indices, n_samples: int, rng=None) -> torch.Tensor:
    return torch.tensor(np.stack([_crop(clips[i], n_samples, rng) for i in indices]), dtype=torch.float32)


def _batches(n_items: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n_items)
    return [order[i:i + batch_size] for i in range(0, n_items, batch_size)]


# ---------------------------------------------------------------------------
# Validation and the epoch loop
# ---------------------------------------------------------------------------

def validation_loss(task: str, bundle: ModelBundle, val_clips, clean_clips, cfg: TrainConfig,
                    loss_cfg: LossConfig) -> float:
    """Task total loss over fixed centre crops, eval mode, no gradients."""
    bundle.eval()
    beta = cfg.resolved_beta(loss_cfg)
    n = cfg.clip_samples
    stream = degradations.RecipeStream(cfg.seed + 7919)
    values = []
    with torch.no_grad():
        for i in range(len(val_clips)):
            x = make_batch(val_clips, [i], n)
            if task == "forward_only":
                values.append(float(forward_task_losses(bundle, x, loss_cfg)[0]))
            elif task == "dual":
                x_high = make_batch(clean_clips, [i % len(clean_clips)], n)
                values.append(float(dual_task_losses(bundle, x, x_high, loss_cfg, beta)[2]))
            else:
                values.append(float(pretrain_task_losses(bundle, x, pseudo_degrade(x, stream), loss_cfg, beta)[2]))
    value = float(np.mean(values))
    if not math.isfinite(value):
        raise TrainingError(f"non-finite validation loss {value}")
    return value


@dataclass
class FitResult:
    bundle: ModelBundle
    history: list[dict]
    best_epoch: int
    state: TrainState


def _snapshot(bundle: ModelBundle) -> dict:
    return {"analysis": copy.deepcopy(bundle.analysis.state_dict()),
            "channel": copy.deepcopy(bundle.channel.state_dict())}


def _restore(bundle: ModelBundle, snap: dict) -> None:
    bundle.analysis.load_state_dict(snap["analysis"])
    bundle.channel.load_state_dict(snap["channel"])


def write_history(history: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["epoch", "train_loss", "val_loss", "lr"], extrasaction="ignore")
        writer.writeheader()
        for row in history:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def fit(task: str, train_clips: Sequence[np.ndarray], val_clips: Sequence[np.ndarray], bundle: ModelBundle,
        cfg: TrainConfig, loss_cfg: LossConfig = LossConfig(), clean_clips: Sequence[np.ndarray] | None = None,
        out_dir=None, resume_from=None, on_epoch: Callable[[dict], None] | None = None) -> FitResult:
    """Train ``bundle`` in place and return it with the best-validation weights loaded.

    ``train_clips`` are degraded recordings for ``forward_only``/``dual`` and
    clean recordings for ``pretrain``. ``clean_clips`` is the unpaired clean
    corpus used by the dual task's backward pass. When ``out_dir`` is given,
    per-epoch checkpoints (``ckpt_<epoch>``), the resumable trainer state,
    ``best.pt`` and ``history.csv`` are written there.
    """
    if task != cfg.task:
        cfg = TrainConfig(**{**asdict(cfg), "task": task})
    if not train_clips or not val_clips:
        raise TrainingError("training and validation sets must be non-empty")
    if task == "dual" and not clean_clips:
        raise TrainingError("dual learning needs a clean corpus")
    if task != "pretrain":
        _check_synthesis(bundle)
    if not bundle.synthesis_frozen:
        bundle.freeze_synthesis()
    beta = cfg.resolved_beta(loss_cfg)
    out_dir = Path(out_dir) if out_dir is not None else None

    torch.manual_seed(cfg.seed)
    optimizer = torch.optim.Adam(bundle.trainable_parameters(), lr=cfg.lr)
    state = TrainState(lr_current=cfg.lr)
    rng = np.random.default_rng(cfg.seed)
    stream = degradations.RecipeStream(cfg.seed)
    history: list[dict] = []
    best_snapshot = _snapshot(bundle)
    best_epoch = 0

    if resume_from is not None:
        saved = torch.load(str(resume_from), map_location="cpu", weights_only=False)
        _restore(bundle, saved["model"])
        optimizer.load_state_dict(saved["optimizer"])
        state = TrainState(**saved["state"])
        rng.bit_generator.state = state.rng_state
        stream.set_state(state.recipe_state)
        history = saved["history"]
        best_snapshot = saved["best"]
        best_epoch = saved["best_epoch"]

    scheduler = PlateauScheduler(state, cfg.lr_decay, cfg.patience_epochs)
    n = cfg.clip_samples
    while state.epoch < cfg.max_epochs:
        epoch = state.epoch + 1
        for group in optimizer.param_groups:
            group["lr"] = state.lr_current
        bundle.train()
        batches = _batches(len(train_clips), cfg.batch_size, rng)
        if cfg.steps_per_epoch is not None:
            batches = [batches[i % len(batches)] for i in range(cfg.steps_per_epoch)]
        losses = []
        for b, idx in enumerate(batches):
            where = f"epoch {epoch} batch {b}"
            x = make_batch(train_clips, idx, n, rng)
            if task == "forward_only":
                losses.append((step_forward_task(x, bundle, optimizer, loss_cfg, where), 0.0))
            elif task == "dual":
                high_idx = rng.integers(0, len(clean_clips), size=len(idx))
                x_high = make_batch(clean_clips, high_idx, n, rng)
                losses.append(step_dual_task(x, x_high, bundle, optimizer, loss_cfg, beta, where))
            else:
                losses.append(step_pretrain_task(x, bundle, optimizer, loss_cfg, beta, stream, where))
        rec = float(np.mean([r for r, _ in losses]))
        feat = float(np.mean([f for _, f in losses]))
        train_loss = (1 - beta) * rec + beta * feat
        val = validation_loss(task, bundle, val_clips, clean_clips or train_clips, cfg, loss_cfg)
        lr_used = state.lr_current
        if scheduler.update(val):
            best_snapshot = _snapshot(bundle)
            best_epoch = epoch
        state.epoch = epoch
        state.rng_state = rng.bit_generator.state
        state.recipe_state = stream.state()
        row = {"epoch": epoch, "train_loss": train_loss, "val_loss": val, "lr": lr_used,
               "train_recons": rec, "train_feature": feat}
        history.append(row)
        log.info("epoch %d train %.5f (recons %.5f feature %.5f) val %.5f lr %.2e",
                 epoch, train_loss, rec, feat, val, lr_used)
        if on_epoch is not None:
            on_epoch(row)
        if out_dir is not None:
            save_bundle(bundle, out_dir / f"ckpt_{epoch}")
            torch.save({"model": _snapshot(bundle), "optimizer": optimizer.state_dict(), "state": asdict(state),
                        "history": history, "best": best_snapshot, "best_epoch": best_epoch},
                       out_dir / f"state_{epoch}.pt")
            write_history(history, out_dir / "history.csv")

    _restore(bundle, best_snapshot)
    bundle.eval()
    if out_dir is not None:
        save_bundle(bundle, out_dir / "best.pt")
    return FitResult(bundle, history, best_epoch, state)


# ---------------------------------------------------------------------------
# Toy vocoder pretraining
# ---------------------------------------------------------------------------

def pretrain_vocoder(bundle: ModelBundle, clean_clips: Sequence[np.ndarray], steps: int = 300,
                     seed: int = 0, batch_size: int = 4, clip_seconds: float = 1.0, lr: float = 2e-3,
                     loss_cfg: LossConfig = LossConfig()) -> list[float]:
    """Fit the toy vocoder to a clean corpus with the spectral loss, then freeze it."""
    voc = bundle.synthesis
    if not getattr(voc, "differentiable", False):
        raise TrainingError("only differentiable vocoders can be pretrained")
    for p in voc.parameters():
        p.requires_grad_(True)
    voc.train()
    bundle.synthesis_frozen = False
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    opt = torch.optim.Adam(voc.parameters(), lr=lr)
    n = int(round(clip_seconds * dsp.SAMPLE_RATE))
    curve = []
    for step in range(steps):
        idx = rng.integers(0, len(clean_clips), size=batch_size)
        x = make_batch(clean_clips, idx, n, rng)
        loss = recons_loss(x, voc(log_mel(x))[..., :n], loss_cfg)
        _finite_or_raise(f"vocoder step {step}", recons=loss)
        _optimize(opt, loss)
        curve.append(loss.item())
    freeze(voc)
    bundle.synthesis_frozen = True
    return curve


__all__ = [
    "FitResult", "PlateauScheduler", "TrainConfig", "TrainState", "TrainingError", "backward_task_loss",
    "dual_task_losses", "fit", "forward_task_losses", "make_batch", "pretrain_task_losses",
    "pretrain_vocoder", "pseudo_degrade", "step_dual_task", "step_forward_task", "step_pretrain_task",
    "validation_loss",
]
