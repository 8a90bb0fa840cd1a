"""Tests for WAV I/O, STFT, mel analysis, cepstra, resampling and mel inversion."""

import numpy as np
import pytest
import scipy.io.wavfile

from unsup_restore import dsp

from conftest import SR, band_energy_db, peak_hz, sine


# ---------------------------------------------------------------------------
# WAV I/O
# ---------------------------------------------------------------------------


class TestWavIO:
    def test_pcm_full_scale_normalization(self, tmp_path):
        path = tmp_path / "max.wav"
        scipy.io.wavfile.write(path, SR, np.array([0, 32767, -32768], dtype=np.int16))
        x = dsp.load_wav(path)
        assert x[1] == 32767 / 32768
        assert x[2] == -1.0

    def test_native_rate_passthrough(self, tmp_path):
        pcm = (sine(300.0) * 32767).astype(np.int16)
        scipy.io.wavfile.write(tmp_path / "a.wav", SR, pcm)
        x = dsp.load_wav(tmp_path / "a.wav")
        np.testing.assert_array_equal(x, pcm / 32768.0)

    def test_44k_file_is_resampled_with_peak_kept(self, tmp_path):
        pcm = (sine(1000.0, sr=44100) * 32767).astype(np.int16)
        scipy.io.wavfile.write(tmp_path / "hi.wav", 44100, pcm)
        x = dsp.load_wav(tmp_path / "hi.wav")
        assert len(x) == SR
        assert abs(peak_hz(x) - 1000.0) <= SR / len(x)

    def test_float32_and_stereo_downmix(self, tmp_path):
        left = sine(200.0).astype(np.float32)
        stereo = np.stack([left, np.zeros_like(left)], axis=1)
        scipy.io.wavfile.write(tmp_path / "st.wav", SR, stereo)
        np.testing.assert_allclose(dsp.load_wav(tmp_path / "st.wav"), left / 2, atol=1e-7)

    def test_zero_round_trip(self, tmp_path):
        dsp.save_wav(np.zeros(1000), tmp_path / "z.wav")
        assert not np.any(dsp.load_wav(tmp_path / "z.wav"))

    def test_ramp_round_trip_within_quantization_bound(self, tmp_path):
        ramp = np.linspace(-1, 1, 5001)
        dsp.save_wav(ramp, tmp_path / "r.wav")
        assert np.max(np.abs(dsp.load_wav(tmp_path / "r.wav") - ramp)) <= 2 / 32768

    def test_half_scale_sine_peak(self, tmp_path):
        x = sine(441.0, amp=0.5)
        dsp.save_wav(x, tmp_path / "s.wav")
        assert abs(np.max(dsp.load_wav(tmp_path / "s.wav")) - np.max(x)) <= 1 / 32768

    def test_empty_file_rejected(self, tmp_path):
        scipy.io.wavfile.write(tmp_path / "e.wav", SR, np.zeros(0, dtype=np.int16))
        with pytest.raises(dsp.AudioError, match="no samples"):
            dsp.load_wav(tmp_path / "e.wav")

    def test_garbage_file_rejected(self, tmp_path):
        (tmp_path / "bad.wav").write_bytes(b"not a wav file at all")
        with pytest.raises(dsp.AudioError):
            dsp.load_wav(tmp_path / "bad.wav")

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            dsp.load_wav(tmp_path / "nope.wav")


# ---------------------------------------------------------------------------
# STFT
# ---------------------------------------------------------------------------


def naive_stft_frame(x, start, n):
    """Direct DFT of one Hann-windowed frame."""
    w = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n)
    seg = x[start:start + n] * w
    k = np.arange(n // 2 + 1)[:, None]
    return np.abs(np.sum(seg * np.exp(-2j * np.pi * k * np.arange(n) / n), axis=1))


class TestSTFT:
    def test_zero_input(self):
        assert not np.any(dsp.stft_magnitude(np.zeros(4096), 512))

    def test_bins_and_frames(self):
        s = dsp.stft_magnitude(np.random.default_rng(0).standard_normal(5000), 256)
        assert s.shape == (5000 // 64 + 1, 129)

    def test_impulse_at_frame_centre_is_flat(self):
        # the Hann window is exactly 1 at the frame centre, so an impulse there has a flat spectrum
        x = np.zeros(4096)
        x[2048] = 1.0
        s = dsp.stft_magnitude(x, 1024, 256)
        np.testing.assert_allclose(s[8], 1.0, atol=1e-12)

    def test_bin_centred_sine_concentrates_energy(self):
        n = 1024
        x = sine(40 * SR / n, seconds=1.0)
        s = dsp.stft_magnitude(x, n)[10] ** 2
        assert s[39:42].sum() / s.sum() > 0.99

    def test_matches_naive_dft_oracle(self):
        x = np.random.default_rng(1).standard_normal(2000)
        n = 128
        xp = np.pad(x, n // 2, mode="reflect")
        s = dsp.stft_magnitude(x, n)
        for t in (0, 5, 17):
            np.testing.assert_allclose(s[t], naive_stft_frame(xp, t * n // 4, n), rtol=1e-9, atol=1e-9)

    def test_homogeneous(self):
        x = np.random.default_rng(2).standard_normal(3000)
        np.testing.assert_allclose(dsp.stft_magnitude(3.7 * x, 512), 3.7 * dsp.stft_magnitude(x, 512), rtol=1e-6)

    @pytest.mark.parametrize("n", [32, 100, 4096])
    def test_rejects_bad_window(self, n):
        with pytest.raises(ValueError, match="power of two"):
            dsp.stft_magnitude(np.zeros(10000), n)

    def test_rejects_too_short(self):
        with pytest.raises(dsp.AudioError):
            dsp.stft_magnitude(np.zeros(100), 1024)

    def test_istft_inverts_stft(self):
        x = np.random.default_rng(3).standard_normal(4000)
        y = dsp.istft(dsp.stft(x, 512), 512, length=len(x))
        np.testing.assert_allclose(y, x, atol=1e-9)


# ---------------------------------------------------------------------------
# Mel analysis and cepstra
# ---------------------------------------------------------------------------


def naive_dct_ortho(v):
    n = len(v)
    k = np.arange(n)[:, None]
    basis = np.cos(np.pi * k * (2 * np.arange(n) + 1) / (2 * n))
    scale = np.full(n, np.sqrt(2.0 / n))
    scale[0] = np.sqrt(1.0 / n)
    return scale * (basis @ v)


class TestMel:
    def test_zero_input_is_floor(self):
        m = dsp.mel_spectrogram(np.zeros(SR))
        assert np.all(m == dsp.FLOOR)

    def test_shape_one_second(self):
        assert dsp.mel_spectrogram(np.zeros(SR)).shape == (87, 80)

    def test_frame_count_formula_random_lengths(self):
        rng = np.random.default_rng(4)
        for n in rng.integers(600, 30000, size=100):
            assert dsp.mel_spectrogram(np.zeros(int(n))).shape[0] == n // dsp.HOP + 1

    @pytest.mark.parametrize("seed", range(10))
    def test_white_noise_fills_every_band(self, seed):
        x = 0.1 * np.random.default_rng(seed).standard_normal(SR)
        assert np.all(dsp.mel_spectrogram(x) > dsp.FLOOR)

    def test_filterbank_layout(self):
        fb = dsp.mel_filterbank()
        assert fb.shape == (80, 513)
        assert np.all(fb >= 0)
        assert np.all(fb.sum(axis=1) > 0)
        with pytest.raises(ValueError):
            fb[0, 0] = 1.0

    def test_rejects_other_rates(self):
        with pytest.raises(ValueError, match="22050"):
            dsp.mel_spectrogram(np.zeros(SR), sample_rate=16000)

    def test_constant_log_mel_cepstrum(self):
        v = -2.5
        c = dsp.mel_cepstrum(np.full((3, 80), np.exp(v)))
        np.testing.assert_allclose(c[:, 0], v * np.sqrt(80), rtol=1e-12)
        np.testing.assert_allclose(c[:, 1:], 0.0, atol=1e-12)
        assert c.shape == (3, 25)

    def test_cepstrum_matches_naive_dct(self):
        v = np.random.default_rng(5).uniform(-5, 2, size=80)
        c = dsp.mel_cepstrum(np.exp(v)[None])
        np.testing.assert_allclose(c[0], naive_dct_ortho(v)[:25], atol=1e-9)

    def test_full_order_cepstrum_inverts(self):
        import scipy.fft
        v = np.random.default_rng(6).uniform(-5, 2, size=(4, 80))
        c = dsp.mel_cepstrum(np.exp(v), order=79)
        np.testing.assert_allclose(scipy.fft.idct(c, type=2, norm="ortho", axis=-1), v, atol=1e-9)

    def test_cepstrum_deterministic(self, speech):
        m = dsp.mel_spectrogram(speech)
        np.testing.assert_array_equal(dsp.mel_cepstrum(m), dsp.mel_cepstrum(m))

    def test_cepstrum_rejects_log_input(self):
        with pytest.raises(ValueError):
            dsp.mel_cepstrum(np.full((2, 80), -1.0))


# ---------------------------------------------------------------------------
# Resampling
# ---------------------------------------------------------------------------


class TestResample:
    def test_downsample_keeps_1k_peak_and_level(self):
        x = sine(1000.0, seconds=1.0, amp=0.5)
        y = dsp.resample(x, SR, 8000)
        assert len(y) == 8000
        assert abs(peak_hz(y, 8000) - 1000.0) <= 8000 / len(y)
        core = y[1000:-1000]
        rms_db = 20 * np.log10(np.sqrt(np.mean(core ** 2)) / (0.5 / np.sqrt(2)))
        assert abs(rms_db) < 0.5

    def test_6k_sine_removed_by_8k_downsampling(self):
        x = sine(6000.0, seconds=1.0, amp=0.5)
        y = dsp.resample(x, SR, 8000)
        ratio_db = 10 * np.log10(np.mean(y ** 2) / np.mean(x ** 2))
        assert ratio_db < -40

    def test_same_rate_is_identity(self, speech):
        y = dsp.resample(speech, SR, SR)
        assert len(y) == len(speech)
        assert np.max(np.abs(y - speech)) < 1e-6

    @pytest.mark.parametrize("rate", [8000, 11250, 12000, 16000])
    def test_output_length(self, rate):
        for n in (1000, 22050, 33333):
            assert len(dsp.resample(np.zeros(n), SR, rate)) == round(n * rate / SR)

    @pytest.mark.parametrize("rate", [8000, 11250, 12000, 16000])
    def test_round_trip_keeps_peak(self, rate):
        f = 0.4 * rate
        x = sine(f, seconds=1.0)
        y = dsp.resample(dsp.resample(x, SR, rate), rate, SR)
        assert abs(peak_hz(y) - peak_hz(x)) <= SR / len(x)

    def test_rejects_non_positive_rate(self):
        with pytest.raises(ValueError):
            dsp.resample(np.zeros(100), SR, 0)

    def test_deterministic(self, speech):
        np.testing.assert_array_equal(dsp.resample(speech, SR, 12000), dsp.resample(speech, SR, 12000))


# ---------------------------------------------------------------------------
# Reference mel inversion
# ---------------------------------------------------------------------------


class TestMelInversion:
    def test_sine_peak_survives(self):
        x = sine(440.0, seconds=1.0)
        y = dsp.mel_invert_reference(dsp.mel_spectrogram(x), iterations=60)
        # one bin of the 1024-point analysis FFT: the mel front end cannot resolve finer
        assert abs(peak_hz(y) - 440.0) <= SR / dsp.N_FFT

    def test_floor_input_is_near_silent(self):
        y = dsp.mel_invert_reference(np.full((50, 80), dsp.FLOOR), iterations=10)
        assert np.sqrt(np.mean(y ** 2)) < 1e-3

    def test_output_length(self):
        assert len(dsp.mel_invert_reference(np.full((40, 80), 0.01), iterations=2)) == 40 * dsp.HOP

    def test_spectral_convergence_monotone(self):
        x = np.random.default_rng(8).standard_normal(SR) * np.hanning(SR)
        history = []
        dsp.mel_invert_reference(dsp.mel_spectrogram(x), iterations=30, history=history)
        assert len(history) == 30
        assert np.all(np.diff(history) <= 1e-12)

    def test_lift_is_non_negative_and_fits(self, speech):
        m = dsp.mel_spectrogram(speech)
        s = dsp.mel_to_linear(m)
        assert np.all(s >= 0)
        rel = np.linalg.norm(s @ dsp.mel_filterbank().T - m) / np.linalg.norm(m)
        assert rel < 0.05

    def test_deterministic(self, speech):
        m = dsp.mel_spectrogram(speech[:8000])
        np.testing.assert_array_equal(dsp.mel_invert_reference(m, 5), dsp.mel_invert_reference(m, 5))
