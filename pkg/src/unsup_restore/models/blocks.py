"""Building blocks shared by the analysis and channel U-Nets."""
from __future__ import annotations

import torch
from torch import nn

BN_MOMENTUM = 0.1  # running = 0.9 * running + 0.1 * batch


def conv(in_ch: int, out_ch: int, kernel: int = 3) -> nn.Conv1d:
    return nn.Conv1d(in_ch, out_ch, kernel, padding=kernel // 2, padding_mode="reflect")


class ResBlock(nn.Module):
    """conv-norm-act-conv-norm with an identity skip.

    When ``film`` parameters are passed to :meth:`forward` each normalisation
    is followed by a feature-wise affine modulation.
    """

    n_norms = 2

    def __init__(self, channels: int, kernel: int = 3):
        super().__init__()
        self.conv1 = conv(channels, channels, kernel)
        self.norm1 = nn.BatchNorm1d(channels, momentum=BN_MOMENTUM)
        self.conv2 = conv(channels, channels, kernel)
        self.norm2 = nn.BatchNorm1d(channels, momentum=BN_MOMENTUM)
        self.act = nn.LeakyReLU(0.2)

    def forward(self, x, film=None):
        h = self.norm1(self.conv1(x))
        if film is not None:
            h = h * film[0][0][..., None] + film[0][1][..., None]
        h = self.norm2(self.conv2(self.act(h)))
        if film is not None:
            h = h * film[1][0][..., None] + film[1][1][..., None]
        return self.act(x + h)


class Stage(nn.Module):
    """``n_blocks`` residual blocks at one resolution."""

    def __init__(self, channels: int, n_blocks: int, kernel: int = 3):
        super().__init__()
        self.channels = channels
        self.blocks = nn.ModuleList(ResBlock(channels, kernel) for _ in range(n_blocks))

    @property
    def n_norms(self) -> int:
        return len(self.blocks) * ResBlock.n_norms

    def forward(self, x, film=None):
        for i, block in enumerate(self.blocks):
            x = block(x, None if film is None else film[2 * i:2 * i + 2])
        return x


def pad_to_multiple(x: torch.Tensor, multiple: int, minimum: int, value: float = 0.0):
    """Right-pad the last axis to a multiple of ``multiple`` (and at least ``minimum``)."""
    n = x.shape[-1]
    target = max(minimum, -(-n // multiple) * multiple)
    if target == n:
        return x
    return nn.functional.pad(x, (0, target - n), value=value)


def level_widths(base: int, levels: int, max_mult: int = 4) -> list[int]:
    return [base * min(2 ** i, max_mult) for i in range(levels + 1)]
