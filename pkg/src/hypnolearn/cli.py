"""Command-line entry point.

Subcommands: synth (generate data), extract (feature CSVs), pretrain
(unsupervised belief-network layers), train (fit models on one dataset),
evaluate (score saved models), loocv (the full leave-one-out protocol).
Any registry key can be overridden with ``--<section>.<key> VALUE``; common
ones have short aliases (--models, --seq, --reps, --seed, --jobs, ...).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import REGISTRY, ConfigError, RunConfig, parse_config
from .data import (
    DataFormatError,
    load_dataset,
    segment_epochs,
    stratified_split,
    transition_keep_mask,
)
from .dbn import DeepBeliefNetwork
from .experiment import run_experiment
from .features import RobustRangeScaler, extract_feature_matrix, write_features_csv
from .hmm import SleepHmm
from .lstm import StackedLstmClassifier, make_windows, predict_epoch_sequence, stack_windows
from .metrics import confusion, f1_macro, f1_weighted
from .persistence import (
    FORMAT_VERSIONS,
    PersistenceError,
    load_dbn,
    load_hmm,
    load_lstm,
    load_scaler,
    save_dbn,
    save_hmm,
    save_lstm,
    save_scaler,
)
from .synth import gen_dataset

logger = logging.getLogger(__name__)

#: Short flags mapped onto registry keys.
ALIASES = {
    "seed": "run.seed",
    "jobs": "run.jobs",
    "models": "run.models",
    "seq": "run.seq",
    "reps": "run.reps",
    "f1": "run.f1",
    "recordings": "synth.recordings",
    "epochs": "synth.epochs",
    "fs": "data.sample_rate",
}


def _version_text() -> str:
    formats = ", ".join(f"{k} v{v}" for k, v in FORMAT_VERSIONS.items())
    return f"hypnolearn {__version__} (model formats: {formats})"


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hypnolearn",
        description="Sleep-stage classification: handcrafted features, a belief-network "
        "feature generator, and sequence decoders with a leave-one-out harness.",
        epilog="Any config key can be set with --<section>.<key> VALUE "
        "(e.g. --dbn.hidden 64 --lstm.epochs 50).",
    )
    parser.add_argument("--version", action="version", version=_version_text())

    def common(sp, out_default):
        sp.add_argument("--config", help="key = value config file")
        sp.add_argument("--out", default=out_default, help=f"output directory (default {out_default})")
        for alias in ("seed", "jobs"):
            sp.add_argument(f"--{alias}", help=REGISTRY[ALIASES[alias]].doc)

    sub = parser.add_subparsers(dest="command", metavar="command")
    sp = sub.add_parser("synth", help="generate a synthetic dataset")
    common(sp, "synth_data")
    sp.add_argument("--recordings", help=REGISTRY["synth.recordings"].doc)
    sp.add_argument("--epochs", help=REGISTRY["synth.epochs"].doc)
    sp.add_argument("--fs", help=REGISTRY["data.sample_rate"].doc)

    sp = sub.add_parser("extract", help="write per-recording feature CSVs")
    sp.add_argument("data", help="dataset directory")
    common(sp, None)

    sp = sub.add_parser("pretrain", help="unsupervised belief-network pretraining")
    sp.add_argument("data", help="dataset directory")
    common(sp, "models")

    sp = sub.add_parser("train", help="fit the requested models on a whole dataset")
    sp.add_argument("data", help="dataset directory")
    common(sp, "models")
    sp.add_argument("--models", help=REGISTRY["run.models"].doc)
    sp.add_argument("--no-transition-removal", action="store_true",
                    help="keep epochs adjacent to stage switches")

    sp = sub.add_parser("evaluate", help="score saved models on a dataset")
    sp.add_argument("data", help="dataset directory")
    sp.add_argument("--model-dir", default="models", help="directory holding saved models")
    common(sp, "eval_out")
    sp.add_argument("--models", help=REGISTRY["run.models"].doc)
    sp.add_argument("--f1", help=REGISTRY["run.f1"].doc)

    sp = sub.add_parser("loocv", help="full leave-one-out protocol")
    sp.add_argument("data", help="dataset directory")
    common(sp, "loocv_out")
    sp.add_argument("--models", help=REGISTRY["run.models"].doc)
    sp.add_argument("--seq", help=REGISTRY["run.seq"].doc)
    sp.add_argument("--reps", help=REGISTRY["run.reps"].doc)
    sp.add_argument("--f1", help=REGISTRY["run.f1"].doc)
    sp.add_argument("--no-transition-removal", action="store_true",
                    help="keep epochs adjacent to stage switches")
    return parser


def _collect_overrides(args: argparse.Namespace, extras: list[str]) -> list[tuple[str, str]]:
    """Alias flags plus raw --section.key pairs, in override order."""
    overrides: list[tuple[str, str]] = []
    for alias, key in ALIASES.items():
        value = getattr(args, alias, None)
        if value is not None:
            overrides.append((key, value))
    if getattr(args, "no_transition_removal", False):
        overrides.append(("run.transition_removal", "false"))
    i = 0
    while i < len(extras):
        token = extras[i]
        if not (token.startswith("--") and "." in token):
            raise ConfigError(f"unrecognized argument {token!r}")
        if "=" in token:
            key, _, value = token[2:].partition("=")
            i += 1
        else:
            if i + 1 >= len(extras):
                raise ConfigError(f"flag {token!r} needs a value")
            key, value = token[2:], extras[i + 1]
            i += 2
        overrides.append((key, value))
    return overrides


def _resolve(args: argparse.Namespace, extras: list[str]) -> RunConfig:
    return parse_config(getattr(args, "config", None), _collect_overrides(args, extras))


def _load_scaled_dataset(cfg: RunConfig, data_dir):
    """Recordings -> (epochs, raw features, labels) per recording."""
    recordings = load_dataset(data_dir, cfg["data.sample_rate"], cfg["data.epoch_len"])
    out = []
    for rec in recordings:
        epochs = segment_epochs(rec)
        out.append((rec, epochs, extract_feature_matrix(epochs, rec.sample_rate_hz)))
    return out


def _cmd_synth(args, cfg: RunConfig) -> int:
    out = Path(args.out)
    cfg.write_resolved(out)
    recs = gen_dataset(cfg["synth.recordings"], cfg["synth.epochs"], cfg["run.seed"],
                       fs=cfg["data.sample_rate"], epoch_len_s=cfg["data.epoch_len"],
                       out_dir=out)
    print(f"wrote {len(recs)} recordings ({recs[0].n_epochs} epochs each) to {out}")
    return 0


def _cmd_extract(args, cfg: RunConfig) -> int:
    out = Path(args.out) if args.out else Path(args.data)
    cfg.write_resolved(out)
    recordings = load_dataset(args.data, cfg["data.sample_rate"], cfg["data.epoch_len"])
    for rec in recordings:
        feats = extract_feature_matrix(segment_epochs(rec), rec.sample_rate_hz)
        path = out / f"{rec.id}.features.csv"
        write_features_csv(path, feats, rec.labels)
        print(f"wrote {path} ({len(feats)} epochs)")
    return 0


def _cmd_pretrain(args, cfg: RunConfig) -> int:
    out = Path(args.out)
    cfg.write_resolved(out)
    data = _load_scaled_dataset(cfg, args.data)
    feats = np.vstack([f for _, _, f in data])
    scaler = RobustRangeScaler().fit(feats)
    dbn = DeepBeliefNetwork(random_state=cfg["run.seed"], **cfg.dbn_params())
    dbn.pretrain(scaler.transform(feats))
    save_scaler(scaler, out / "scaler.txt")
    save_dbn(dbn, out / "dbn.txt")
    print(f"pretrained {feats.shape[1]}->{'->'.join(map(str, dbn.hidden_units))} "
          f"on {len(feats)} epochs; wrote {out}/dbn.txt and {out}/scaler.txt")
    return 0


def _cmd_train(args, cfg: RunConfig) -> int:
    out = Path(args.out)
    cfg.write_resolved(out)
    data = _load_scaled_dataset(cfg, args.data)
    margin = cfg["run.removal_margin"] if cfg["run.transition_removal"] else 0
    masks = [transition_keep_mask(rec.labels, margin) for rec, _, _ in data]
    pooled = np.vstack([f[m] for (_, _, f), m in zip(data, masks)])
    labels = np.concatenate([rec.labels[m] for (rec, _, _), m in zip(data, masks)])
    tr_idx, val_idx = stratified_split(labels, cfg["run.seed"])
    scaler = RobustRangeScaler().fit(pooled[tr_idx])
    X_tr, y_tr = scaler.transform(pooled[tr_idx]), labels[tr_idx]
    X_val, y_val = scaler.transform(pooled[val_idx]), labels[val_idx]
    save_scaler(scaler, out / "scaler.txt")
    written = ["scaler.txt"]

    models = cfg["run.models"]
    seq_len = cfg["lstm.seq_len"]
    dbn = None
    if {"dbn", "dbn+hmm", "dbn+lstm"} & set(models):
        dbn = DeepBeliefNetwork(random_state=cfg["run.seed"], **cfg.dbn_params())
        dbn.fit(X_tr, y_tr, validation_data=(X_val, y_val))
        save_dbn(dbn, out / "dbn.txt")
        written.append("dbn.txt")
    if "dbn+hmm" in models:
        hmm = SleepHmm(**cfg.hmm_params())
        hmm.fit([rec.labels for rec, _, _ in data])
        save_hmm(hmm, out / "hmm.txt")
        written.append("hmm.txt")

    def fit_window_model(vectors_per_rec, name: str) -> None:
        windows = []
        for (rec, _, _), vecs, mask in zip(data, vectors_per_rec, masks):
            wins = make_windows(vecs, rec.labels, seq_len)
            windows.extend(w for w, ok in zip(wins, mask[seq_len - 1:]) if ok)
        Xw, yw = stack_windows(windows)
        wtr, wval = stratified_split(yw, cfg["run.seed"] + 1)
        lstm = StackedLstmClassifier(seq_len=seq_len, random_state=cfg["run.seed"],
                                     **cfg.lstm_params())
        lstm.fit(Xw[wtr], yw[wtr], validation_data=(Xw[wval], yw[wval]))
        save_lstm(lstm, out / name)
        written.append(name)

    if "lstm" in models:
        fit_window_model([scaler.transform(f) for _, _, f in data], "lstm.txt")
    if "dbn+lstm" in models:
        pre_softmax = cfg["run.lstm_input"] == "logit"
        fit_window_model(
            [dbn.transform(scaler.transform(f), pre_softmax=pre_softmax) for _, _, f in data],
            "dbn_lstm.txt",
        )
    print(f"wrote {', '.join(written)} to {out}")
    return 0


def _cmd_evaluate(args, cfg: RunConfig) -> int:
    out = Path(args.out)
    cfg.write_resolved(out)
    model_dir = Path(args.model_dir)
    scaler_path = model_dir / "scaler.txt"
    if not scaler_path.exists():
        raise FileNotFoundError(f"missing {scaler_path}; run 'train' first")
    scaler = load_scaler(scaler_path)
    data = _load_scaled_dataset(cfg, args.data)
    f1_fn = f1_macro if cfg["run.f1"] == "macro" else f1_weighted
    pre_softmax = cfg["run.lstm_input"] == "logit"

    dbn = load_dbn(model_dir / "dbn.txt") if (model_dir / "dbn.txt").exists() else None
    scorers = {}
    if dbn is not None:
        scorers["dbn"] = lambda X: dbn.predict(X)
        if (model_dir / "hmm.txt").exists():
            hmm = load_hmm(model_dir / "hmm.txt")
            scorers["dbn+hmm"] = lambda X: hmm.decode(dbn.transform(X))
        if (model_dir / "dbn_lstm.txt").exists():
            dlstm = load_lstm(model_dir / "dbn_lstm.txt")
            scorers["dbn+lstm"] = lambda X: predict_epoch_sequence(
                dlstm, dbn.transform(X, pre_softmax=pre_softmax))[0]
    if (model_dir / "lstm.txt").exists():
        flstm = load_lstm(model_dir / "lstm.txt")
        scorers["lstm"] = lambda X: predict_epoch_sequence(flstm, X)[0]
    wanted = [m for m in cfg["run.models"] if m in scorers]
    if not wanted:
        raise FileNotFoundError(f"no requested model files found in {model_dir}")

    lines = ["model,recording,acc,f1"]
    for model in wanted:
        for rec, _, feats in data:
            preds = scorers[model](scaler.transform(feats))
            cm = confusion(preds, rec.labels)
            lines.append(f"{model},{rec.id},{cm.accuracy:.6f},{f1_fn(cm):.6f}")
    report = "\n".join(lines) + "\n"
    (out / "eval_report.csv").write_text(report)
    print(report, end="")
    print(f"wrote {out}/eval_report.csv")
    return 0


def _cmd_loocv(args, cfg: RunConfig) -> int:
    out = Path(args.out)
    cfg.write_resolved(out)
    recordings = load_dataset(args.data, cfg["data.sample_rate"], cfg["data.epoch_len"])
    result = run_experiment(recordings, cfg.experiment_config(out_dir=out))
    for row in result.summary:
        print(f"{row.model} seq={row.seq_len}: acc {row.mean_acc:.4f} +/- {row.std_acc:.4f}, "
              f"f1 {row.mean_f1:.4f} +/- {row.std_f1:.4f} over {row.n_folds} folds")
    if result.failures:
        print(f"{len(result.failures)} fold failures; see {out}/failures.csv", file=sys.stderr)
        return 1
    print(f"wrote {out}/report.csv")
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "extract": _cmd_extract,
    "pretrain": _cmd_pretrain,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "loocv": _cmd_loocv,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    parser = _build_parser()
    args, extras = parser.parse_known_args(argv)
    if args.command is None:
        parser.print_help()
        return 2
    try:
        cfg = _resolve(args, extras)
        return _COMMANDS[args.command](args, cfg)
    except (ConfigError, DataFormatError, PersistenceError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
