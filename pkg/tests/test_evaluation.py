"""Tests for MCD, spectral distance, manifests, simulated datasets and reports."""

import csv
import json
import math

import numpy as np
import pytest

from unsup_restore import corpus, dsp, evaluation
from unsup_restore.degradations import DegradationRecipe, apply
from unsup_restore.evaluation import (MCD_CONSTANT, DatasetManifest, ManifestError, ManifestItem,
                                      MetricReport, build_simulated_dataset, cepstral_distortion, mcd,
                                      read_manifest, spectral_distance, write_manifest)


@pytest.fixture()
def clean_manifest(tmp_path):
    rows = corpus.write_corpus(tmp_path / "clean", 8, seconds=0.5, seed=1)
    items = [ManifestItem(i, str(p), None, None, "train", d) for i, p, d in rows]
    manifest = DatasetManifest(items, tmp_path)
    write_manifest(manifest, tmp_path / "clean.csv")
    return manifest


class TestMCD:
    def test_constant(self):
        assert MCD_CONSTANT == pytest.approx(10 * math.sqrt(2) / math.log(10), rel=1e-15)

    def test_identical_is_zero(self, speech):
        assert mcd(speech, speech) == 0.0

    def test_symmetric(self, speech):
        other = speech[::-1].copy()
        assert mcd(speech, other) == pytest.approx(mcd(other, speech), rel=1e-12)

    def test_closed_form_two_frames(self):
        ref = np.zeros((2, 24))
        hyp = np.zeros((2, 24))
        hyp[0, 0] = 3.0
        hyp[1, :2] = [1.0, 1.0]
        expected = MCD_CONSTANT * (3.0 + math.sqrt(2.0)) / 2
        assert abs(cepstral_distortion(ref, hyp) - expected) < 1e-9

    def test_excludes_c0(self, speech):
        # a global gain only moves c0 of the log-mel cepstrum
        assert mcd(speech, 2.0 * speech) < 1e-9

    def test_pseudometric_triangle(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            a, b, c = (0.1 * rng.standard_normal(8000) for _ in range(3))
            assert mcd(a, c) <= mcd(a, b) + mcd(b, c) + 1e-9
            assert mcd(a, b) >= 0

    def test_length_tolerance(self, speech):
        assert mcd(speech, np.pad(speech, (100, 100))) < 1e-9
        with pytest.raises(ValueError, match="lengths differ"):
            mcd(speech, speech[:-300])

    def test_match_length_centre_trim(self):
        ref = np.zeros(10)
        hyp = np.arange(14.0)
        np.testing.assert_array_equal(evaluation.match_length(ref, hyp, 4), np.arange(2.0, 12.0))
        np.testing.assert_array_equal(evaluation.match_length(np.zeros(6), np.ones(4), 4), [0, 1, 1, 1, 1, 0])


class TestSpectralDistance:
    def test_identical_zero(self, speech):
        assert spectral_distance(speech, speech) == 0.0

    def test_non_negative(self, speech):
        assert spectral_distance(speech, np.zeros_like(speech)) > 0


class TestManifest:
    def test_round_trip(self, clean_manifest, tmp_path):
        back = read_manifest(tmp_path / "clean.csv")
        assert [it.id for it in back.items] == [it.id for it in clean_manifest.items]
        assert back.items[0].duration == pytest.approx(0.5, abs=1e-6)

    def test_header(self, tmp_path, clean_manifest):
        header = (tmp_path / "clean.csv").read_text().splitlines()[0]
        assert header == "id,clean_path,degraded_path,recipe_json,split,duration"

    def test_bad_header(self, tmp_path):
        (tmp_path / "bad.csv").write_text("id,path\n")
        with pytest.raises(ManifestError, match="header"):
            read_manifest(tmp_path / "bad.csv")

    def test_duplicate_ids(self):
        with pytest.raises(ManifestError, match="duplicate"):
            DatasetManifest([ManifestItem("a", "x.wav"), ManifestItem("a", "y.wav")])

    def test_unknown_split(self):
        with pytest.raises(ManifestError, match="split"):
            DatasetManifest([ManifestItem("a", "x.wav", split="dev")])

    def test_missing_file(self, tmp_path):
        write_manifest(DatasetManifest([ManifestItem("a", "gone.wav")]), tmp_path / "m.csv")
        with pytest.raises(ManifestError, match="missing"):
            read_manifest(tmp_path / "m.csv")

    def test_cache_round_trip(self, clean_manifest, tmp_path, monkeypatch):
        monkeypatch.setenv("UNSUP_RESTORE_CACHE", str(tmp_path / "cache"))
        first = clean_manifest.load_clips(None, "clean")
        second = clean_manifest.load_clips(None, "clean")
        assert len(list((tmp_path / "cache" / "clips").glob("*.npy"))) == 8
        for a, b in zip(first, second):
            np.testing.assert_array_equal(a, b)


class TestSimulatedDataset:
    def test_splits_and_regeneration(self, clean_manifest, tmp_path):
        recipe = DegradationRecipe.default("clipped")
        m = build_simulated_dataset(clean_manifest, recipe, tmp_path / "sim", seed=3, n_val=2, n_test=3)
        assert len(m.split("val")) == 2 and len(m.split("test")) == 3 and len(m.split("train")) == 3
        again = build_simulated_dataset(clean_manifest, recipe, tmp_path / "sim2", seed=3, n_val=2, n_test=3)
        assert [it.split for it in m.items] == [it.split for it in again.items]
        for it in m.items:
            regenerated = apply(it.recipe, dsp.load_wav(it.clean_path))
            stored = dsp.load_wav(m.resolve(it.degraded_path))
            assert np.max(np.abs(stored - regenerated)) <= 1 / 32768 + 1e-12

    def test_recipe_recorded(self, clean_manifest, tmp_path):
        recipe = DegradationRecipe.default("band_limited", cutoff_hz=3000.0)
        build_simulated_dataset(clean_manifest, recipe, tmp_path / "sim", n_val=1, n_test=1)
        back = read_manifest(tmp_path / "sim" / "manifest.csv")
        assert all(it.recipe == recipe for it in back.items)

    def test_too_many_held_out(self, clean_manifest, tmp_path):
        with pytest.raises(ManifestError):
            build_simulated_dataset(clean_manifest, DegradationRecipe.default("clipped"), tmp_path, n_val=5, n_test=5)


class TestEvaluate:
    def test_clean_vs_clean_is_zero(self, clean_manifest):
        m = evaluation.with_split(clean_manifest, "test")
        report = evaluation.evaluate(m, None)
        assert all(row["mcd"] == 0 and row["msd"] == 0 for row in report.per_item)

    def test_aggregate_and_files(self, clean_manifest, tmp_path):
        m = build_simulated_dataset(clean_manifest, DegradationRecipe.default("overdrive"), tmp_path / "s",
                                    n_val=2, n_test=4)
        report = evaluation.evaluate(m, None, metrics=("mcd",))
        values = [row["mcd"] for row in report.per_item]
        assert abs(report.aggregate["mcd"]["mean"] - np.mean(values)) < 1e-9
        assert abs(report.aggregate["mcd"]["std"] - np.std(values)) < 1e-9
        report.write(tmp_path / "report.csv")
        rows = list(csv.DictReader(open(tmp_path / "report.csv")))
        assert len(rows) == 4 and set(rows[0]) == {"id", "mcd"}
        summary = json.loads((tmp_path / "report.summary.json").read_text())
        assert summary["mcd"]["mean"] == pytest.approx(report.aggregate["mcd"]["mean"])

    def test_deterministic(self, clean_manifest, tmp_path):
        m = build_simulated_dataset(clean_manifest, DegradationRecipe.default("clipped"), tmp_path / "s",
                                    n_val=2, n_test=2)
        assert evaluation.evaluate(m, None).per_item == evaluation.evaluate(m, None).per_item

    def test_unknown_metric(self, clean_manifest):
        with pytest.raises(ValueError, match="unknown metrics"):
            evaluation.evaluate(evaluation.with_split(clean_manifest, "test"), None, metrics=("pesq",))

    def test_empty_split(self, clean_manifest):
        with pytest.raises(ManifestError, match="empty"):
            evaluation.evaluate(clean_manifest, None)

    def test_report_from_rows(self):
        report = MetricReport([{"id": "a", "mcd": 1.0}, {"id": "b", "mcd": 3.0}], ("mcd",))
        assert report.aggregate == {"mcd": {"mean": 2.0, "std": 1.0}}
