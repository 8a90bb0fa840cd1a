"""Training objectives: multi-scale spectral reconstruction loss, feature
loss, their weighted combination, and the channel stop-gradient."""
from __future__ import annotations

from dataclasses import dataclass

import torch
from torch.func import functional_call

from . import dsp
from .features import stft_magnitude

DEFAULT_WINDOWS = (2048, 1024, 512, 256, 128, 64)


@dataclass(frozen=True)
class LossConfig:
    windows: tuple[int, ...] = DEFAULT_WINDOWS
    alpha: float = 1.0
    beta_dual: float = 0.1
    beta_pretrain: float = 0.001
    reduction: str = "mean"

    def __post_init__(self):
        if not self.windows:
            raise ValueError("loss.windows must not be empty")
        for w in self.windows:
            if w <= 0 or w & (w - 1):
                raise ValueError(f"loss.windows entries must be powers of two, got {w}")
        if self.alpha < 0:
            raise ValueError(f"loss.alpha must be >= 0, got {self.alpha}")
        for name in ("beta_dual", "beta_pretrain"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"loss.{name} must be in [0, 1], got {v}")
        if self.reduction not in ("mean", "sum"):
            raise ValueError(f"loss.reduction must be 'mean' or 'sum', got {self.reduction!r}")


def recons_loss(x: torch.Tensor, x_hat: torch.Tensor, cfg: LossConfig = LossConfig()) -> torch.Tensor:
    """Sum over window lengths of L1 distances between magnitude spectrograms
    and between their logs (weighted by ``alpha``).

    Each scale's L1 term is averaged over time-frequency cells (and batch)
    when ``cfg.reduction == "mean"``.
    """
    if x.shape != x_hat.shape:
        raise ValueError(f"waveform shapes differ: {tuple(x.shape)} vs {tuple(x_hat.shape)}")
    reduce = torch.mean if cfg.reduction == "mean" else torch.sum
    total = x_hat.new_zeros(())
    for w in cfg.windows:
        s = stft_magnitude(x, w)
        s_hat = stft_magnitude(x_hat, w)
        term = reduce(torch.abs(s - s_hat))
        if cfg.alpha:
            log_s = torch.log(torch.clamp(s, min=dsp.FLOOR))
            log_s_hat = torch.log(torch.clamp(s_hat, min=dsp.FLOOR))
            term = term + cfg.alpha * reduce(torch.abs(log_s - log_s_hat))
        total = total + term
    return total


def feature_loss(z_high: torch.Tensor, z_res_hat: torch.Tensor) -> torch.Tensor:
    if z_high.shape != z_res_hat.shape:
        raise ValueError(f"feature shapes differ: {tuple(z_high.shape)} vs {tuple(z_res_hat.shape)}")
    return torch.mean((z_high - z_res_hat) ** 2)


def combined_loss(l_recons, l_feature, beta: float):
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must be in [0, 1], got {beta}")
    return (1.0 - beta) * l_recons + beta * l_feature


def stop_gradient_to_channel(channel: torch.nn.Module, *args, **kwargs) -> torch.Tensor:
    """Run ``channel`` with its parameters cut out of the autograd graph.

    Gradients still flow through the inputs (and the conditioning vector), so
    a loss computed on the output trains whatever produced those inputs but
    never the channel module itself. Buffers (normalisation statistics) are
    used and updated as in a normal call.
    """
    detached = {name: p.detach() for name, p in channel.named_parameters()}
    return functional_call(channel, detached, args, kwargs, strict=False)
