"""Channel module: a waveform U-Net conditioned on the channel vector."""
from __future__ import annotations

import torch
from torch import nn

from .blocks import Stage, conv, level_widths, pad_to_multiple


class FiLMGenerator(nn.Module):
    """Maps the channel vector to (scale, shift) pairs for every norm in one level."""

    def __init__(self, channel_dim: int, width: int, n_norms: int, hidden: int = 64):
        super().__init__()
        self.width = width
        self.n_norms = n_norms
        self.net = nn.Sequential(
            nn.Linear(channel_dim, hidden), nn.LeakyReLU(0.2), nn.Linear(hidden, 2 * n_norms * width))

    def forward(self, c: torch.Tensor):
        out = self.net(c).view(c.shape[0], self.n_norms, 2, self.width)
        return [(1.0 + out[:, i, 0], out[:, i, 1]) for i in range(self.n_norms)]


class ChannelUNet(nn.Module):
    """1-D U-Net over raw samples; output = input + learned distortion residual.

    With ``film_identity = True`` every modulation is replaced by scale 1 and
    shift 0, which makes the output independent of the channel vector.
    """

    def __init__(self, base_width: int = 32, levels: int = 4, n_blocks: int = 4,
                 channel_dim: int = 128, stem_kernel: int = 15):
        super().__init__()
        self.levels = levels
        self.film_identity = False
        w = level_widths(base_width, levels)
        self.stem = conv(1, w[0], stem_kernel)
        self.encoders = nn.ModuleList(Stage(w[i], n_blocks) for i in range(levels))
        self.downs = nn.ModuleList(nn.Conv1d(w[i], w[i + 1], 1) for i in range(levels))
        self.bottleneck = Stage(w[levels], n_blocks)
        self.ups = nn.ModuleList(nn.ConvTranspose1d(w[i + 1], w[i], 2, stride=2) for i in range(levels))
        self.merges = nn.ModuleList(nn.Conv1d(2 * w[i], w[i], 1) for i in range(levels))
        self.decoders = nn.ModuleList(Stage(w[i], n_blocks) for i in range(levels))
        self.out = conv(w[0], 1, stem_kernel)
        self.pool = nn.AvgPool1d(2)
        stages = list(self.encoders) + [self.bottleneck] + list(self.decoders)
        self.films = nn.ModuleList(FiLMGenerator(channel_dim, s.channels, s.n_norms) for s in stages)

    def forward(self, x: torch.Tensor, c: torch.Tensor) -> torch.Tensor:
        """``x``: (B, samples) waveform, ``c``: (B, channel_dim) -> (B, samples)."""
        n = x.shape[-1]
        scale = 2 ** self.levels
        h_in = pad_to_multiple(x[:, None, :], scale, 2 * scale)
        films = [None] * len(self.films) if self.film_identity else [f(c) for f in self.films]
        n_enc = self.levels
        h = self.stem(h_in)
        skips = []
        for i, (enc, down) in enumerate(zip(self.encoders, self.downs)):
            h = enc(h, films[i])
            skips.append(h)
            h = down(self.pool(h))
        h = self.bottleneck(h, films[n_enc])
        for i in reversed(range(self.levels)):
            h = self.ups[i](h)
            h = self.merges[i](torch.cat([h, skips[i]], dim=1))
            h = self.decoders[i](h, films[n_enc + 1 + i])
        y = h_in + self.out(h)
        return y[:, 0, :n]
