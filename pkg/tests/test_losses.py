"""Tests for the spectral reconstruction loss, the feature loss, their
combination and the channel stop-gradient."""

import numpy as np
import pytest
import torch

from unsup_restore import dsp
from unsup_restore.losses import (LossConfig, combined_loss, feature_loss, recons_loss,
                                  stop_gradient_to_channel)
from unsup_restore.models import ChannelUNet


def naive_magnitudes(x, n):
    """Reflect-padded, Hann-windowed frames through an explicit DFT sum."""
    hop = n // 4
    xp = np.pad(x, n // 2, mode="reflect")
    w = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n)
    k = np.arange(n // 2 + 1)
    basis = np.exp(-2j * np.pi * np.outer(k, np.arange(n)) / n)
    frames = [xp[t * hop:t * hop + n] * w for t in range(len(x) // hop + 1)]
    return np.abs(np.array([basis @ f for f in frames]))


def naive_mse(a, b):
    total = 0.0
    rows, cols = a.shape
    for i in range(rows):
        for j in range(cols):
            total += (a[i, j] - b[i, j]) ** 2
    return total / (rows * cols)


def rand(n, seed):
    return torch.tensor(np.random.default_rng(seed).standard_normal(n), dtype=torch.float64)


# ---------------------------------------------------------------------------
# Config
# ---------------------------------------------------------------------------


class TestLossConfig:
    def test_defaults(self):
        cfg = LossConfig()
        assert cfg.windows == (2048, 1024, 512, 256, 128, 64)
        assert cfg.alpha == 1.0
        assert (cfg.beta_dual, cfg.beta_pretrain) == (0.1, 0.001)

    @pytest.mark.parametrize("kwargs", [
        {"windows": ()}, {"windows": (100,)}, {"alpha": -1.0},
        {"beta_dual": 1.5}, {"beta_pretrain": -0.1}, {"reduction": "max"},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            LossConfig(**kwargs)


# ---------------------------------------------------------------------------
# Reconstruction loss
# ---------------------------------------------------------------------------


class TestReconsLoss:
    def test_identity_is_exactly_zero(self):
        x = rand(4096, 0)
        assert recons_loss(x, x.clone()).item() == 0.0

    def test_symmetric(self):
        x, y = rand(4096, 1), rand(4096, 2)
        assert recons_loss(x, y).item() == pytest.approx(recons_loss(y, x).item(), rel=1e-12)

    def test_sign_flip_invariant(self):
        x, y = rand(4096, 3), rand(4096, 4)
        assert recons_loss(x, -y).item() == pytest.approx(recons_loss(x, y).item(), rel=1e-9)

    def test_positive_for_different_signals(self):
        assert recons_loss(rand(4096, 5), rand(4096, 6)).item() > 0

    def test_single_scale_matches_naive_dft(self):
        x, y = np.random.default_rng(7).standard_normal((2, 1024))
        cfg = LossConfig(windows=(64,), alpha=0.0)
        got = recons_loss(torch.tensor(x), torch.tensor(y), cfg).item()
        expected = np.mean(np.abs(naive_magnitudes(x, 64) - naive_magnitudes(y, 64)))
        assert abs(got - expected) < 1e-6

    def test_log_term_matches_naive_dft(self):
        x, y = np.random.default_rng(8).standard_normal((2, 1024))
        cfg = LossConfig(windows=(128,), alpha=2.0)
        got = recons_loss(torch.tensor(x), torch.tensor(y), cfg).item()
        sx, sy = naive_magnitudes(x, 128), naive_magnitudes(y, 128)
        log_x = np.log(np.maximum(sx, dsp.FLOOR))
        log_y = np.log(np.maximum(sy, dsp.FLOOR))
        expected = np.mean(np.abs(sx - sy)) + 2.0 * np.mean(np.abs(log_x - log_y))
        assert abs(got - expected) < 1e-5

    def test_sum_over_scales(self):
        x, y = rand(4096, 9), rand(4096, 10)
        per_scale = [recons_loss(x, y, LossConfig(windows=(w,))).item() for w in LossConfig().windows]
        assert recons_loss(x, y).item() == pytest.approx(sum(per_scale), rel=1e-12)

    def test_sum_reduction(self):
        x, y = rand(2048, 11), rand(2048, 12)
        mean = recons_loss(x, y, LossConfig(windows=(256,), alpha=0.0)).item()
        total = recons_loss(x, y, LossConfig(windows=(256,), alpha=0.0, reduction="sum")).item()
        assert total == pytest.approx(mean * (2048 // 64 + 1) * 129, rel=1e-9)

    def test_batched(self):
        x = torch.stack([rand(2048, 13), rand(2048, 14)])
        y = torch.stack([rand(2048, 15), rand(2048, 16)])
        both = recons_loss(x, y).item()
        each = [recons_loss(x[i], y[i]).item() for i in range(2)]
        assert both == pytest.approx(np.mean(each), rel=1e-9)

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="shapes differ"):
            recons_loss(rand(4096, 0), rand(4000, 0))

    def test_gradient_matches_finite_differences(self):
        x = rand(256, 17)
        y = rand(256, 18).requires_grad_(True)
        cfg = LossConfig(windows=(64,))
        recons_loss(x, y, cfg).backward()
        eps = 1e-6
        for i in np.random.default_rng(0).choice(256, size=20, replace=False):
            plus, minus = y.detach().clone(), y.detach().clone()
            plus[i] += eps
            minus[i] -= eps
            fd = (recons_loss(x, plus, cfg) - recons_loss(x, minus, cfg)).item() / (2 * eps)
            assert abs(fd - y.grad[i].item()) <= 1e-3 * max(abs(fd), 1e-6)


# ---------------------------------------------------------------------------
# Feature and combined losses
# ---------------------------------------------------------------------------


class TestFeatureLoss:
    def test_identical_is_zero(self):
        z = torch.randn(2, 80, 30)
        assert feature_loss(z, z.clone()).item() == 0.0

    def test_constant_offset(self):
        z = torch.randn(80, 30, dtype=torch.float64)
        assert feature_loss(z, z + 0.7).item() == pytest.approx(0.49, rel=1e-12)

    def test_matches_two_loop_oracle(self):
        a, b = np.random.default_rng(19).standard_normal((2, 80, 25))
        assert abs(feature_loss(torch.tensor(a), torch.tensor(b)).item() - naive_mse(a, b)) < 1e-9

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            feature_loss(torch.zeros(80, 10), torch.zeros(80, 11))


class TestCombinedLoss:
    def test_endpoints(self):
        assert combined_loss(2.0, 10.0, 0.0) == 2.0
        assert combined_loss(2.0, 10.0, 1.0) == 10.0

    def test_dual_value(self):
        assert combined_loss(2.0, 10.0, 0.1) == pytest.approx(2.8, abs=1e-12)

    def test_affine_in_beta(self):
        values = [combined_loss(3.0, 7.0, b) for b in (0.0, 0.25, 0.5, 0.75, 1.0)]
        assert np.allclose(np.diff(values), 1.0)

    @pytest.mark.parametrize("beta", [-0.01, 1.01])
    def test_out_of_range(self, beta):
        with pytest.raises(ValueError):
            combined_loss(1.0, 1.0, beta)


# ---------------------------------------------------------------------------
# Stop-gradient
# ---------------------------------------------------------------------------


class TestStopGradient:
    def _setup(self):
        torch.manual_seed(3)
        channel = ChannelUNet(base_width=4, levels=2, n_blocks=1, channel_dim=8)
        x = torch.randn(2, 512, requires_grad=True)
        c = torch.randn(2, 8, requires_grad=True)
        return channel, x, c

    def test_channel_parameters_get_no_gradient(self):
        channel, x, c = self._setup()
        stop_gradient_to_channel(channel, x, c).pow(2).mean().backward()
        for p in channel.parameters():
            assert p.grad is None or not torch.any(p.grad)

    def test_inputs_still_get_gradient(self):
        channel, x, c = self._setup()
        stop_gradient_to_channel(channel, x, c).pow(2).mean().backward()
        assert x.grad.abs().sum() > 0
        assert c.grad.abs().sum() > 0

    def test_same_output_as_plain_call(self):
        channel, x, c = self._setup()
        channel.eval()
        np.testing.assert_array_equal(stop_gradient_to_channel(channel, x, c).detach().numpy(),
                                      channel(x, c).detach().numpy())

    def test_input_gradient_unchanged(self):
        channel, x, c = self._setup()
        channel.eval()
        stop_gradient_to_channel(channel, x, c).sum().backward()
        g_stop = x.grad.clone()
        x.grad = None
        channel(x, c).sum().backward()
        torch.testing.assert_close(x.grad, g_stop, rtol=0, atol=0)
