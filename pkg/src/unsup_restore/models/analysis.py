"""Analysis module: degraded log-mel in, restored log-mel and a channel vector out."""
from __future__ import annotations

from typing import NamedTuple

import torch
from torch import nn

from .. import dsp
from .blocks import Stage, conv, level_widths, pad_to_multiple


class AnalysisOutput(NamedTuple):
    restored: torch.Tensor  # (B, n_mels, frames) log-mel
    channel: torch.Tensor   # (B, channel_dim)


class AnalysisUNet(nn.Module):
    """U-Net over the frame axis with mel bands as input channels.

    Each encoder level runs ``n_blocks`` residual blocks and halves the frame
    rate with average pooling; the decoder doubles it back with transposed
    convolutions and concatenated skips. The channel head pools the
    bottleneck over time, so the channel vector has no time axis by
    construction. The restored features are predicted as a residual on the
    input log-mel.
    """

    def __init__(self, n_mels: int = dsp.N_MELS, base_width: int = 64, levels: int = 4,
                 n_blocks: int = 4, channel_dim: int = 128, head_hidden: int = 256):
        super().__init__()
        self.levels = levels
        self.n_mels = n_mels
        w = level_widths(base_width, levels)
        self.stem = conv(n_mels, w[0], 3)
        self.encoders = nn.ModuleList(Stage(w[i], n_blocks) for i in range(levels))
        self.downs = nn.ModuleList(nn.Conv1d(w[i], w[i + 1], 1) for i in range(levels))
        self.bottleneck = Stage(w[levels], n_blocks)
        self.ups = nn.ModuleList(nn.ConvTranspose1d(w[i + 1], w[i], 2, stride=2) for i in range(levels))
        self.merges = nn.ModuleList(nn.Conv1d(2 * w[i], w[i], 1) for i in range(levels))
        self.decoders = nn.ModuleList(Stage(w[i], n_blocks) for i in range(levels))
        self.out = conv(w[0], n_mels, 3)
        self.pool = nn.AvgPool1d(2)
        self.head = nn.Sequential(
            nn.Linear(w[levels], head_hidden), nn.LeakyReLU(0.2), nn.Linear(head_hidden, channel_dim))

    def encode(self, y: torch.Tensor):
        h = self.stem(y)
        skips = []
        for enc, down in zip(self.encoders, self.downs):
            h = enc(h)
            skips.append(h)
            h = down(self.pool(h))
        return self.bottleneck(h), skips

    def forward(self, y: torch.Tensor) -> AnalysisOutput:
        frames = y.shape[-1]
        scale = 2 ** self.levels
        y_pad = pad_to_multiple(y, scale, 2 * scale, value=float(torch.log(torch.tensor(dsp.FLOOR))))
        h, skips = self.encode(y_pad)
        c = self.head(h.mean(dim=-1))
        for i in reversed(range(self.levels)):
            h = self.ups[i](h)
            h = self.merges[i](torch.cat([h, skips[i]], dim=1))
            h = self.decoders[i](h)
        restored = y_pad + self.out(h)
        return AnalysisOutput(restored[..., :frames], c)

    def pooled_bottleneck(self, y: torch.Tensor) -> torch.Tensor:
        """Bottleneck activations ``(B, width, frames / 2**levels)`` before time pooling."""
        return self.encode(y)[0]
