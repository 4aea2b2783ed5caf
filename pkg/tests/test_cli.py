"""End-to-end tests for the command-line entry point.

Each test drives ``main(argv)`` directly (no subprocess) so exit codes,
stdout, and written artifacts can be asserted cheaply.  Dataset fixtures are
generated through the ``synth`` subcommand itself, which keeps the tests
honest about the documented flag surface.
"""

import numpy as np
import pytest

from hypnolearn.cli import main

# Hyperparameters small enough that every fit in this module is sub-second.
TINY_PROFILE = [
    "--dbn.hidden=8",
    "--dbn.pretrain_epochs=2",
    "--dbn.finetune_epochs=6",
    "--dbn.batch=32",
    "--dbn.patience=3",
    "--lstm.hidden=6",
    "--lstm.epochs=3",
    "--lstm.batch=64",
]


@pytest.fixture(scope="module")
def tiny_dataset(tmp_path_factory):
    """Two 8-epoch recordings with 2-second epochs."""
    out = tmp_path_factory.mktemp("tiny_data")
    rc = main(["synth", "--recordings", "2", "--epochs", "8", "--seed", "3",
               "--data.epoch_len", "4", "--out", str(out)])
    assert rc == 0
    return out


@pytest.fixture(scope="module")
def loocv_dataset(tmp_path_factory):
    """Three 120-epoch recordings; seed 7 gives every stage >= 6 epochs in
    each two-recording training pool, so stratified splits are possible."""
    out = tmp_path_factory.mktemp("loocv_data")
    rc = main(["synth", "--recordings", "3", "--epochs", "120", "--seed", "7",
               "--data.epoch_len", "4", "--out", str(out)])
    assert rc == 0
    return out


class TestParsing:
    def test_version_prints_format_versions(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
        out = capsys.readouterr().out
        assert "hypnolearn" in out
        for fragment in ("dbn v1", "lstm v1", "hmm v1", "scaler v1"):
            assert fragment in out

    def test_no_command_prints_help(self, capsys):
        assert main([]) == 2
        out = capsys.readouterr().out
        assert "usage:" in out
        for command in ("synth", "extract", "pretrain", "train", "evaluate", "loocv"):
            assert command in out

    def test_unknown_subcommand_lists_valid_ones(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code != 0
        err = capsys.readouterr().err
        assert "invalid choice" in err and "loocv" in err

    def test_unknown_dotted_key_fails(self, tmp_path, capsys):
        rc = main(["synth", "--out", str(tmp_path / "d"), "--run.bogus", "5"])
        assert rc == 1
        err = capsys.readouterr().err
        assert err.startswith("error:") and "run.bogus" in err

    def test_undotted_extra_flag_rejected(self, tmp_path, capsys):
        rc = main(["synth", "--out", str(tmp_path / "d"), "--bogus", "5"])
        assert rc == 1
        assert "unrecognized argument" in capsys.readouterr().err

    def test_bad_value_names_key(self, tmp_path, capsys):
        rc = main(["synth", "--out", str(tmp_path / "d"), "--dbn.lr", "banana"])
        assert rc == 1
        assert "dbn.lr" in capsys.readouterr().err

    def test_equals_form_override_lands_in_resolved_cfg(self, tmp_path, capsys):
        out = tmp_path / "d"
        rc = main(["synth", "--recordings", "1", "--epochs", "4",
                   "--data.epoch_len", "4", "--out", str(out), "--dbn.hidden=64"])
        assert rc == 0
        assert "dbn.hidden = 64" in (out / "resolved.cfg").read_text()

    def test_flag_overrides_config_file(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("synth.epochs = 5\nsynth.recordings = 1\n")
        out = tmp_path / "d"
        rc = main(["synth", "--config", str(cfg), "--epochs", "6",
                   "--data.epoch_len", "4", "--out", str(out)])
        assert rc == 0
        assert "(6 epochs each)" in capsys.readouterr().out


class TestSynthExtract:
    def test_synth_writes_recordings_and_resolved_cfg(self, tiny_dataset, capsys):
        for name in ("rec00.csv", "rec00.labels.csv", "rec01.csv",
                     "rec01.labels.csv", "resolved.cfg"):
            assert (tiny_dataset / name).exists(), name

    def test_synth_reports_what_it_wrote(self, tmp_path, capsys):
        out = tmp_path / "d"
        rc = main(["synth", "--recordings", "2", "--epochs", "8", "--seed", "3",
                   "--data.epoch_len", "4", "--out", str(out)])
        assert rc == 0
        assert "wrote 2 recordings (8 epochs each)" in capsys.readouterr().out

    def test_extract_writes_feature_csv_per_recording(self, tiny_dataset, tmp_path, capsys):
        out = tmp_path / "features"
        rc = main(["extract", str(tiny_dataset), "--data.epoch_len", "4",
                   "--out", str(out)])
        assert rc == 0
        for rec_id in ("rec00", "rec01"):
            path = out / f"{rec_id}.features.csv"
            assert path.exists()
            lines = path.read_text().strip().splitlines()
            assert len(lines) == 1 + 8  # header + one row per epoch
        assert "rec00.features.csv (8 epochs)" in capsys.readouterr().out

    def test_pretrain_writes_dbn_and_scaler(self, tiny_dataset, tmp_path, capsys):
        out = tmp_path / "models"
        rc = main(["pretrain", str(tiny_dataset), "--data.epoch_len", "4",
                   "--out", str(out)] + TINY_PROFILE)
        assert rc == 0
        assert (out / "dbn.txt").exists() and (out / "scaler.txt").exists()
        assert "pretrained" in capsys.readouterr().out


class TestTrainEvaluate:
    def test_train_then_evaluate(self, loocv_dataset, tmp_path, capsys):
        model_dir = tmp_path / "models"
        rc = main(["train", str(loocv_dataset), "--data.epoch_len", "4",
                   "--models", "dbn,dbn+hmm", "--no-transition-removal",
                   "--out", str(model_dir)] + TINY_PROFILE)
        assert rc == 0
        for name in ("scaler.txt", "dbn.txt", "hmm.txt"):
            assert (model_dir / name).exists(), name
        capsys.readouterr()

        eval_dir = tmp_path / "eval"
        rc = main(["evaluate", str(loocv_dataset), "--data.epoch_len", "4",
                   "--models", "dbn,dbn+hmm", "--model-dir", str(model_dir),
                   "--out", str(eval_dir)])
        assert rc == 0
        lines = (eval_dir / "eval_report.csv").read_text().strip().splitlines()
        assert lines[0] == "model,recording,acc,f1"
        body = [ln.split(",") for ln in lines[1:]]
        assert {row[0] for row in body} == {"dbn", "dbn+hmm"}
        assert {row[1] for row in body} == {"rec00", "rec01", "rec02"}
        for row in body:
            assert 0.0 <= float(row[2]) <= 1.0 and 0.0 <= float(row[3]) <= 1.0

    def test_evaluate_without_trained_models_fails(self, loocv_dataset, tmp_path, capsys):
        rc = main(["evaluate", str(loocv_dataset), "--data.epoch_len", "4",
                   "--model-dir", str(tmp_path / "nothing"),
                   "--out", str(tmp_path / "eval")])
        assert rc == 1
        err = capsys.readouterr().err
        assert err.startswith("error:") and "missing" in err and "train" in err


class TestLoocv:
    LOOCV_FLAGS = ["--data.epoch_len", "4", "--models", "dbn,dbn+lstm",
                   "--seq", "3", "--no-transition-removal"] + TINY_PROFILE

    def test_smoke_writes_reports_and_is_deterministic(self, loocv_dataset, tmp_path, capsys):
        outs = []
        for name in ("out1", "out2"):
            out = tmp_path / name
            rc = main(["loocv", str(loocv_dataset), "--out", str(out)] + self.LOOCV_FLAGS)
            assert rc == 0
            outs.append(out)
        stdout = capsys.readouterr().out
        assert "dbn seq=3: acc" in stdout and "dbn+lstm seq=3: acc" in stdout

        report = (outs[0] / "report.csv").read_bytes()
        assert report == (outs[1] / "report.csv").read_bytes()
        assert report.decode().splitlines()[0] == "model,seq_len,rep,fold,acc,f1"
        for name in ("resolved.cfg", "confusion_dbn.csv", "confusion_dbn_lstm.csv",
                     "hypnogram_fold0.svg", "hypnogram_fold0.csv"):
            assert (outs[0] / name).exists(), name
        assert not (outs[0] / "failures.csv").exists()

    def test_fold_failures_give_nonzero_exit(self, loocv_dataset, tmp_path, capsys):
        out = tmp_path / "out"
        rc = main(["loocv", str(loocv_dataset), "--out", str(out),
                   "--data.epoch_len", "4", "--models", "dbn,dbn+lstm",
                   "--seq", "200", "--no-transition-removal"] + TINY_PROFILE)
        assert rc == 1
        assert "fold failures" in capsys.readouterr().err
        assert (out / "failures.csv").exists()

    def test_missing_dataset_path_fails_with_name(self, tmp_path, capsys):
        missing = tmp_path / "no_such_dir"
        rc = main(["loocv", str(missing), "--out", str(tmp_path / "out")])
        assert rc == 1
        err = capsys.readouterr().err
        assert err.startswith("error:") and "no_such_dir" in err
