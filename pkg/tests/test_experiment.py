"""Leave-one-out harness tests.

The summary math is checked against hand-built fold reports, the report CSV
against its documented canonical layout, and the end-to-end harness against
a tiny linearly separable feature dataset where every variant must score
highly, deterministically, and write the full output bundle.
"""

import numpy as np
import pytest

from hypnolearn.experiment import (
    ExperimentConfig,
    ExperimentResult,
    FoldReport,
    RecordingFeatures,
    _derive_seed,
    emit_hypnogram,
    format_report_csv,
    run_experiment,
    summarize,
)
from hypnolearn.metrics import confusion


def report(model, seq_len, rep, fold, acc, f1):
    preds = np.zeros(4, dtype=np.int64)
    return FoldReport(model, seq_len, rep, fold, acc, f1, confusion(preds, preds))


class TestConfigValidation:
    def test_unknown_model_rejected(self):
        with pytest.raises(ValueError, match="unknown models"):
            ExperimentConfig(models=("dbn", "transformer"))

    def test_bad_reps_and_seq_rejected(self):
        with pytest.raises(ValueError, match="reps"):
            ExperimentConfig(reps=0)
        with pytest.raises(ValueError, match="window lengths"):
            ExperimentConfig(seq_lens=(5, 0))

    def test_bad_f1_average_rejected(self):
        with pytest.raises(ValueError, match="f1_average"):
            ExperimentConfig(f1_average="micro")

    def test_bad_lstm_input_rejected(self):
        with pytest.raises(ValueError, match="lstm_input"):
            ExperimentConfig(lstm_input="features")


class TestSeedDerivation:
    def test_deterministic_and_purpose_separated(self):
        assert _derive_seed(0, 1, 2, 3) == _derive_seed(0, 1, 2, 3)
        seeds = {_derive_seed(0, 0, 0, code) for code in range(6)}
        assert len(seeds) == 6


class TestSummarize:
    def test_population_mean_and_std_per_model(self):
        cfg = ExperimentConfig(models=("dbn", "lstm"), seq_lens=(5,))
        reports = [
            report("dbn", 5, 0, 0, 0.8, 0.7),
            report("dbn", 5, 0, 1, 0.6, 0.5),
            report("lstm", 5, 0, 0, 1.0, 1.0),
        ]
        rows = summarize(reports, cfg)
        assert [(r.model, r.n_folds) for r in rows] == [("dbn", 2), ("lstm", 1)]
        dbn = rows[0]
        assert dbn.mean_acc == pytest.approx(0.7)
        assert dbn.std_acc == pytest.approx(0.1)  # population std of {0.8, 0.6}
        assert dbn.mean_f1 == pytest.approx(0.6)

    def test_models_without_reports_get_no_row(self):
        cfg = ExperimentConfig(models=("dbn", "lstm"))
        rows = summarize([report("dbn", 5, 0, 0, 0.9, 0.9)], cfg)
        assert [r.model for r in rows] == ["dbn"]


class TestReportCsv:
    def test_canonical_layout(self):
        cfg = ExperimentConfig(models=("dbn", "lstm"), seq_lens=(3,))
        reports = [
            report("dbn", 3, 0, 0, 0.875, 0.8),
            report("dbn", 3, 0, 1, 0.625, 0.6),
            report("lstm", 3, 0, 0, 1.0, 1.0),
            report("lstm", 3, 0, 1, 0.5, 0.4),
        ]
        text = format_report_csv(reports, summarize(reports, cfg), cfg)
        assert text.splitlines() == [
            "model,seq_len,rep,fold,acc,f1",
            "dbn,3,0,0,0.875000,0.800000",
            "dbn,3,0,1,0.625000,0.600000",
            "dbn,3,all,avg,0.750000,0.700000",
            "dbn,3,all,std,0.125000,0.100000",
            "lstm,3,0,0,1.000000,1.000000",
            "lstm,3,0,1,0.500000,0.400000",
            "lstm,3,all,avg,0.750000,0.700000",
            "lstm,3,all,std,0.250000,0.300000",
        ]

    def test_missing_folds_are_skipped_not_padded(self):
        cfg = ExperimentConfig(models=("dbn",), seq_lens=(3,))
        reports = [report("dbn", 3, 0, 1, 0.5, 0.5)]
        lines = format_report_csv(reports, summarize(reports, cfg), cfg).splitlines()
        assert lines[1] == "dbn,3,0,1,0.500000,0.500000"
        assert len(lines) == 4  # header, one fold, avg, std


class TestHypnogramOutput:
    def test_writes_svg_and_csv(self, tmp_path):
        true = np.array([0, 1, 2, 3, 4, 4, 0])
        pred = np.array([0, 1, 2, 2, 4, 4, 0])
        svg_path, csv_path = emit_hypnogram(pred, true, tmp_path / "plots" / "fold0")
        svg = svg_path.read_text()
        assert svg.startswith("<svg ") or svg.startswith("<svg\n")
        assert svg.count("<polyline") == 2
        lines = csv_path.read_text().splitlines()
        assert lines[0] == "epoch,true,pred"
        assert lines[1] == "0,W,W"
        assert lines[4] == "3,SWS,S2"
        assert len(lines) == 8

    def test_length_mismatch_and_empty_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="length mismatch"):
            emit_hypnogram(np.zeros(3, dtype=int), np.zeros(4, dtype=int), tmp_path / "x")
        with pytest.raises(ValueError, match="empty"):
            emit_hypnogram(np.empty(0, dtype=int), np.empty(0, dtype=int), tmp_path / "x")


def blob_feature_sets(n_recordings=3, epochs_per_stage=30, seed=0):
    """Tiny linearly separable dataset: stage k peaks feature k.

    Stages come in long runs so transition removal leaves every class enough
    epochs for the 5:1 split.
    """
    rng = np.random.default_rng(seed)
    sets = []
    for i in range(n_recordings):
        labels = np.repeat(np.arange(5), epochs_per_stage)
        feats = np.clip(0.1 + rng.normal(scale=0.05, size=(len(labels), 6)), 0, 1)
        feats[np.arange(len(labels)), labels] = 0.9
        sets.append(RecordingFeatures(id=f"rec{i:02d}", features=feats, labels=labels))
    return sets


SMALL_CFG = dict(
    seq_lens=(3,),
    dbn_params={"hidden_units": (16, 16), "pretrain_epochs": 10, "finetune_epochs": 80,
                "batch_size": 50, "learning_rate": 0.2},
    lstm_params={"hidden_units": (6,), "epochs": 5, "batch_size": 50},
)


class TestRunExperiment:
    def test_needs_two_recordings(self):
        with pytest.raises(ValueError, match="at least 2"):
            run_experiment(blob_feature_sets(1), ExperimentConfig())

    def test_full_bundle_on_separable_blobs(self, tmp_path):
        cfg = ExperimentConfig(out_dir=tmp_path / "out", **SMALL_CFG)
        result = run_experiment(blob_feature_sets(), cfg)
        assert result.failures == []
        by_model = {row.model: row for row in result.summary}
        assert set(by_model) == {"dbn", "lstm", "dbn+hmm", "dbn+lstm"}
        assert all(row.n_folds == 3 for row in result.summary)
        assert by_model["dbn"].mean_acc >= 0.9  # blobs are linearly separable
        out = tmp_path / "out"
        assert (out / "report.csv").exists()
        assert (out / "confusion_dbn.csv").exists()
        assert (out / "confusion_dbn_lstm.csv").exists()
        assert not (out / "failures.csv").exists()
        for fold in range(3):
            assert (out / f"hypnogram_fold{fold}.svg").exists()
            assert (out / f"hypnogram_fold{fold}.csv").exists()

    def test_reruns_are_byte_identical(self):
        cfg = ExperimentConfig(**SMALL_CFG)
        sets = blob_feature_sets()
        a = run_experiment(sets, cfg)
        b = run_experiment(sets, cfg)
        text_a = format_report_csv(a.reports, a.summary, cfg)
        text_b = format_report_csv(b.reports, b.summary, cfg)
        assert text_a == text_b

    def test_window_starved_folds_fail_without_sinking_others(self, tmp_path):
        # Recordings shorter than the window length leave the sequence models
        # nothing to train on; the per-epoch models must still be scored.
        sets = blob_feature_sets(n_recordings=3, epochs_per_stage=3, seed=1)
        cfg = ExperimentConfig(
            out_dir=tmp_path / "out",
            seq_lens=(16,),
            transition_removal=False,
            dbn_params=SMALL_CFG["dbn_params"],
            lstm_params=SMALL_CFG["lstm_params"],
        )
        result = run_experiment(sets, cfg)
        assert {f.model for f in result.failures} == {"lstm", "dbn+lstm"}
        assert all("empty window list" in f.error for f in result.failures)
        assert {row.model for row in result.summary} == {"dbn", "dbn+hmm"}
        failures_csv = (tmp_path / "out" / "failures.csv").read_text()
        assert failures_csv.startswith("rep,fold,model,seq_len,error\n")
        assert "lstm" in failures_csv

    def test_result_predictions_are_keyed_per_fold(self):
        cfg = ExperimentConfig(models=("dbn",), **SMALL_CFG)
        sets = blob_feature_sets()
        result = run_experiment(sets, cfg)
        assert isinstance(result, ExperimentResult)
        for fold, fs in enumerate(sets):
            preds = result.predictions[("dbn", 3, 0, fold)]
            assert preds.shape == fs.labels.shape
