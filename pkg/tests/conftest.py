import numpy as np
import pytest
import torch

from unsup_restore import corpus, dsp

SR = dsp.SAMPLE_RATE


def sine(freq, seconds=1.0, amp=0.5, sr=SR, phase=0.0):
    t = np.arange(int(round(seconds * sr))) / sr
    return amp * np.sin(2 * np.pi * freq * t + phase)


def band_energy_db(x, lo, hi, sr=SR):
    spec = np.abs(np.fft.rfft(x * np.hanning(len(x)))) ** 2
    f = np.fft.rfftfreq(len(x), 1 / sr)
    return 10 * np.log10(np.sum(spec[(f >= lo) & (f < hi)]) + 1e-30)


def peak_hz(x, sr=SR):
    spec = np.abs(np.fft.rfft(x * np.hanning(len(x))))
    return np.argmax(spec) * sr / len(x)


@pytest.fixture(scope="session")
def speech():
    return corpus.synth_utterance(7, seconds=1.5)


@pytest.fixture(scope="session")
def speech_clips():
    return [corpus.synth_utterance(100 + i, seconds=1.0) for i in range(6)]


@pytest.fixture(autouse=True)
def _torch_seed():
    torch.manual_seed(0)
    yield


# ---------------------------------------------------------------------------
# Acceptance summary: one line per criterion, printed after the run
# ---------------------------------------------------------------------------

ACCEPTANCE_LINES: dict[str, str] = {}


def record_criterion(key: str, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES[key] = f"criterion {key:>3s}: {'PASS' if passed else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES, key=lambda k: (int(k.rstrip("abc")), k)):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
