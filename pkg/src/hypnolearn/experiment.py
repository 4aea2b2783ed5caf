"""Leave-one-out evaluation harness for the four classifier variants.

For every repetition and every held-out recording the harness builds the
protocol split (transition removal, class-balanced 5:1 train:validation),
fits one belief network shared by the dbn/dbn+hmm/dbn+lstm variants, fits
the requested sequence decoders per window length, and scores every test
epoch exactly once. Results land in report.csv (fold rows plus avg/std rows
per model and window length), per-model confusion tables, and per-fold
hypnogram step plots. All randomness derives from the experiment seed, so a
fixed config reproduces its outputs byte for byte; wall-clock timings are
logged only, never written into reports.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import (
    N_STAGES,
    STAGE_NAMES,
    STAGE_TOKENS,
    Recording,
    segment_epochs,
    stratified_split,
    transition_keep_mask,
)
from .dbn import DeepBeliefNetwork
from .features import RobustRangeScaler, extract_feature_matrix
from .hmm import SleepHmm
from .lstm import StackedLstmClassifier, make_windows, predict_epoch_sequence, stack_windows
from .metrics import ConfusionMatrix, confusion, f1_macro, f1_weighted, format_confusion_csv

logger = logging.getLogger(__name__)

MODELS = ("dbn", "lstm", "dbn+hmm", "dbn+lstm")
#: Preference order when choosing which model's predictions to plot per fold.
HYPNOGRAM_PRIORITY = ("dbn+lstm", "dbn+hmm", "lstm", "dbn")
_DBN_MODELS = frozenset({"dbn", "dbn+hmm", "dbn+lstm"})
_SEQ_MODELS = frozenset({"lstm", "dbn+lstm"})


@dataclass
class ExperimentConfig:
    models: tuple[str, ...] = MODELS
    seq_lens: tuple[int, ...] = (5,)
    reps: int = 1
    transition_removal: bool = True
    removal_margin: int = 1
    seed: int = 0
    f1_average: str = "macro"
    jobs: int = 1
    lstm_input: str = "posterior"  # or "logit": feed pre-softmax activations
    dbn_params: dict = field(default_factory=dict)
    lstm_params: dict = field(default_factory=dict)
    hmm_params: dict = field(default_factory=dict)
    out_dir: Path | None = None
    emit_hypnograms: bool = True

    def __post_init__(self):
        unknown = set(self.models) - set(MODELS)
        if unknown:
            raise ValueError(f"unknown models {sorted(unknown)}; valid: {', '.join(MODELS)}")
        if self.reps < 1:
            raise ValueError(f"reps must be >= 1, got {self.reps}")
        if any(s < 1 for s in self.seq_lens):
            raise ValueError(f"window lengths must be >= 1, got {self.seq_lens}")
        if self.f1_average not in ("macro", "weighted"):
            raise ValueError(f"f1_average must be macro or weighted, got {self.f1_average!r}")
        if self.lstm_input not in ("posterior", "logit"):
            raise ValueError(f"lstm_input must be posterior or logit, got {self.lstm_input!r}")


@dataclass
class RecordingFeatures:
    """One recording reduced to its raw (unscaled) feature matrix and labels."""

    id: str
    features: np.ndarray
    labels: np.ndarray


@dataclass
class FoldReport:
    model: str
    seq_len: int
    rep: int
    fold: int
    accuracy: float
    f1: float
    confusion: ConfusionMatrix
    wall_times: dict[str, float] = field(default_factory=dict)


@dataclass
class FoldFailure:
    rep: int
    fold: int
    model: str
    seq_len: int
    error: str


@dataclass
class SummaryRow:
    model: str
    seq_len: int
    mean_acc: float
    std_acc: float
    mean_f1: float
    std_f1: float
    n_folds: int


@dataclass
class ExperimentResult:
    reports: list[FoldReport]
    failures: list[FoldFailure]
    summary: list[SummaryRow]
    predictions: dict  # (model, seq_len, rep, fold) -> predicted stage array


def featurize(recordings: list[Recording]) -> list[RecordingFeatures]:
    """Extract the 28-feature matrix per recording (signals can be dropped after)."""
    out = []
    for rec in recordings:
        t0 = time.perf_counter()
        feats = extract_feature_matrix(segment_epochs(rec), rec.sample_rate_hz)
        logger.info("featurized %s: %d epochs in %.1fs", rec.id, len(feats), time.perf_counter() - t0)
        out.append(RecordingFeatures(id=rec.id, features=feats, labels=rec.labels))
    return out


def _derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


# purpose codes for per-fold seed derivation
_SPLIT, _DBN, _WSPLIT_LSTM, _LSTM, _WSPLIT_DBNLSTM, _DBNLSTM = range(6)


def _window_sets(train_sets, vectors_by_id, labels_split_seed, seq_len):
    """Window tensors for the sequence models of one fold.

    Windows slide over each training recording's full vector sequence so the
    models see stage switches at every window position; transition removal
    governs only the per-epoch pool the belief network trains on. The windows
    are split 5:1 per class into train/validation.
    """
    windows = []
    for rf in train_sets:
        windows.extend(make_windows(vectors_by_id[rf.id], rf.labels, seq_len))
    X, y = stack_windows(windows)
    tr_idx, val_idx = stratified_split(y, labels_split_seed)
    return X[tr_idx], y[tr_idx], X[val_idx], y[val_idx]


def _run_fold(feature_sets: list[RecordingFeatures], fold: int, rep: int,
              cfg: ExperimentConfig):
    """All models and window lengths for one (repetition, held-out recording).

    Returns (reports, predictions keyed (model, seq_len), failures).
    """
    reports: list[FoldReport] = []
    failures: list[FoldFailure] = []
    predictions: dict[tuple[str, int], np.ndarray] = {}
    times: dict[str, float] = {}

    def clock(key: str, t0: float) -> None:
        times[key] = times.get(key, 0.0) + (time.perf_counter() - t0)

    def fail(model: str, seq_len: int, exc: Exception) -> None:
        logger.error("rep %d fold %d %s seq %d failed: %s", rep, fold, model, seq_len, exc)
        failures.append(FoldFailure(rep, fold, model, seq_len, f"{type(exc).__name__}: {exc}"))

    try:
        t0 = time.perf_counter()
        train_sets = [fs for j, fs in enumerate(feature_sets) if j != fold]
        test_set = feature_sets[fold]
        keep_masks = [
            transition_keep_mask(rf.labels, cfg.removal_margin if cfg.transition_removal else 0)
            for rf in train_sets
        ]
        pooled_feats = np.vstack([rf.features[m] for rf, m in zip(train_sets, keep_masks)])
        pooled_labels = np.concatenate([rf.labels[m] for rf, m in zip(train_sets, keep_masks)])
        tr_idx, val_idx = stratified_split(pooled_labels, _derive_seed(cfg.seed, rep, fold, _SPLIT))
        scaler = RobustRangeScaler().fit(pooled_feats[tr_idx])
        X_tr, y_tr = scaler.transform(pooled_feats[tr_idx]), pooled_labels[tr_idx]
        X_val, y_val = scaler.transform(pooled_feats[val_idx]), pooled_labels[val_idx]
        scaled_by_id = {rf.id: scaler.transform(rf.features) for rf in train_sets}
        test_scaled = scaler.transform(test_set.features)
        clock("prep", t0)
    except Exception as exc:  # data/split problems sink the whole fold
        fail("*", 0, exc)
        return reports, predictions, failures

    dbn = None
    if _DBN_MODELS & set(cfg.models):
        try:
            t0 = time.perf_counter()
            dbn = DeepBeliefNetwork(random_state=_derive_seed(cfg.seed, rep, fold, _DBN),
                                    **cfg.dbn_params)
            dbn.fit(X_tr, y_tr, validation_data=(X_val, y_val))
            clock("dbn_fit", t0)
        except Exception as exc:
            for model in sorted(_DBN_MODELS & set(cfg.models)):
                fail(model, 0, exc)
            dbn = None

    def score(model: str, seq_len: int, preds: np.ndarray) -> None:
        cm = confusion(preds, test_set.labels)
        f1 = f1_macro(cm) if cfg.f1_average == "macro" else f1_weighted(cm)
        reports.append(FoldReport(model, seq_len, rep, fold, cm.accuracy, f1, cm, dict(times)))
        predictions[(model, seq_len)] = preds

    base_scores: dict[str, np.ndarray] = {}  # seq-independent models, computed once
    if dbn is not None and "dbn" in cfg.models:
        try:
            t0 = time.perf_counter()
            base_scores["dbn"] = dbn.predict(test_scaled)
            clock("score", t0)
        except Exception as exc:
            fail("dbn", 0, exc)
    if dbn is not None and "dbn+hmm" in cfg.models:
        try:
            t0 = time.perf_counter()
            hmm = SleepHmm(**cfg.hmm_params)
            hmm.fit([rf.labels for rf in train_sets])
            base_scores["dbn+hmm"] = hmm.decode(dbn.transform(test_scaled))
            clock("hmm", t0)
        except Exception as exc:
            fail("dbn+hmm", 0, exc)

    pre_softmax = cfg.lstm_input == "logit"
    posteriors_by_id = None
    test_posteriors = None
    if dbn is not None and "dbn+lstm" in cfg.models:
        posteriors_by_id = {
            rf.id: dbn.transform(scaled_by_id[rf.id], pre_softmax=pre_softmax)
            for rf in train_sets
        }
        test_posteriors = dbn.transform(test_scaled, pre_softmax=pre_softmax)

    for seq_len in cfg.seq_lens:
        for model in cfg.models:
            if model in base_scores:
                score(model, seq_len, base_scores[model])
                continue
            if model == "lstm":
                vec_by_id, test_vecs = scaled_by_id, test_scaled
                wsplit_code, model_code = _WSPLIT_LSTM, _LSTM
            elif model == "dbn+lstm":
                if dbn is None:
                    continue  # failure already recorded
                vec_by_id, test_vecs = posteriors_by_id, test_posteriors
                wsplit_code, model_code = _WSPLIT_DBNLSTM, _DBNLSTM
            else:
                continue
            try:
                t0 = time.perf_counter()
                Xw, yw, Xwv, ywv = _window_sets(
                    train_sets, vec_by_id,
                    _derive_seed(cfg.seed, rep, fold, wsplit_code, seq_len), seq_len,
                )
                lstm = StackedLstmClassifier(
                    seq_len=seq_len,
                    random_state=_derive_seed(cfg.seed, rep, fold, model_code, seq_len),
                    **cfg.lstm_params,
                )
                lstm.fit(Xw, yw, validation_data=(Xwv, ywv))
                clock(f"{model}_seq{seq_len}_fit", t0)
                t0 = time.perf_counter()
                preds, padded = predict_epoch_sequence(lstm, test_vecs)
                logger.info("rep %d fold %d %s seq %d: %d leading epochs padded",
                            rep, fold, model, seq_len, int(padded.sum()))
                clock("score", t0)
                score(model, seq_len, preds)
            except Exception as exc:
                fail(model, seq_len, exc)

    logger.info("rep %d fold %d done; phase times %s", rep, fold,
                {k: round(v, 2) for k, v in times.items()})
    return reports, predictions, failures


def _run_fold_star(args):
    return _run_fold(*args)


def summarize(reports: list[FoldReport], cfg: ExperimentConfig) -> list[SummaryRow]:
    """Unweighted mean/std (population) over fold rows per (model, seq_len)."""
    rows = []
    for model in cfg.models:
        for seq_len in cfg.seq_lens:
            sel = [r for r in reports if r.model == model and r.seq_len == seq_len]
            if not sel:
                continue
            accs = np.array([r.accuracy for r in sel])
            f1s = np.array([r.f1 for r in sel])
            rows.append(SummaryRow(model, seq_len, float(accs.mean()), float(accs.std()),
                                   float(f1s.mean()), float(f1s.std()), len(sel)))
    return rows


def format_report_csv(reports: list[FoldReport], summary: list[SummaryRow],
                      cfg: ExperimentConfig) -> str:
    """Canonical report text: fold rows then avg/std rows per model block."""
    by_key = {(r.model, r.seq_len, r.rep, r.fold): r for r in reports}
    by_summary = {(s.model, s.seq_len): s for s in summary}
    lines = ["model,seq_len,rep,fold,acc,f1"]
    folds = sorted({r.fold for r in reports})
    for model in cfg.models:
        for seq_len in cfg.seq_lens:
            for rep in range(cfg.reps):
                for fold in folds:
                    r = by_key.get((model, seq_len, rep, fold))
                    if r is not None:
                        lines.append(f"{model},{seq_len},{rep},{fold},{r.accuracy:.6f},{r.f1:.6f}")
            s = by_summary.get((model, seq_len))
            if s is not None:
                lines.append(f"{model},{seq_len},all,avg,{s.mean_acc:.6f},{s.mean_f1:.6f}")
                lines.append(f"{model},{seq_len},all,std,{s.std_acc:.6f},{s.std_f1:.6f}")
    return "\n".join(lines) + "\n"


def _svg_hypnogram(pred: np.ndarray, true: np.ndarray) -> str:
    """Step plot: truth in red, prediction in blue, WAKE at the top."""
    width, height = 900, 320
    ml, mr, mt, mb = 70, 20, 34, 40
    n = len(true)
    span_x = width - ml - mr
    span_y = height - mt - mb

    def x(i: float) -> float:
        return ml + span_x * i / n

    def y(stage: int) -> float:
        return mt + span_y * stage / (N_STAGES - 1)

    def step_points(seq: np.ndarray) -> str:
        pts = []
        for i, s in enumerate(seq):
            pts.append(f"{x(i):.2f},{y(int(s)):.2f}")
            pts.append(f"{x(i + 1):.2f},{y(int(s)):.2f}")
        return " ".join(pts)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.0f}" y="18" text-anchor="middle" font-size="14">'
        "Hypnogram: truth (red) vs prediction (blue)</text>",
    ]
    for stage, name in enumerate(STAGE_NAMES):
        yy = y(stage)
        parts.append(f'<line x1="{ml}" y1="{yy:.2f}" x2="{width - mr}" y2="{yy:.2f}" '
                     'stroke="#dddddd" stroke-width="1"/>')
        parts.append(f'<text x="{ml - 8}" y="{yy + 4:.2f}" text-anchor="end" '
                     f'font-size="12">{name}</text>')
    parts.append(f'<text x="{width / 2:.0f}" y="{height - 8}" text-anchor="middle" '
                 'font-size="12">epoch</text>')
    for frac in (0.0, 0.5, 1.0):
        xi = int(round(frac * n))
        parts.append(f'<text x="{x(xi):.2f}" y="{height - mb + 16}" text-anchor="middle" '
                     f'font-size="11">{xi}</text>')
    parts.append(f'<polyline points="{step_points(true)}" fill="none" '
                 'stroke="red" stroke-width="1.5"/>')
    parts.append(f'<polyline points="{step_points(pred)}" fill="none" '
                 'stroke="blue" stroke-width="1.5"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_hypnogram(pred, true, out_base) -> tuple[Path, Path]:
    """Write <out_base>.svg (step plot) and <out_base>.csv (epoch,true,pred)."""
    pred = np.asarray(pred, dtype=np.int64)
    true = np.asarray(true, dtype=np.int64)
    if len(pred) != len(true):
        raise ValueError(f"length mismatch: {len(pred)} predictions, {len(true)} truths")
    if len(pred) == 0:
        raise ValueError("cannot plot an empty stage sequence")
    out_base = Path(out_base)
    out_base.parent.mkdir(parents=True, exist_ok=True)
    svg_path = out_base.with_suffix(".svg")
    csv_path = out_base.with_suffix(".csv")
    svg_path.write_text(_svg_hypnogram(pred, true))
    with open(csv_path, "w") as fh:
        fh.write("epoch,true,pred\n")
        for i, (t, p) in enumerate(zip(true, pred)):
            fh.write(f"{i},{STAGE_TOKENS[int(t)]},{STAGE_TOKENS[int(p)]}\n")
    return svg_path, csv_path


def _write_outputs(result: ExperimentResult, feature_sets, cfg: ExperimentConfig) -> None:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text(format_report_csv(result.reports, result.summary, cfg))
    for model in cfg.models:
        sel = [r.confusion for r in result.reports if r.model == model]
        if sel:
            total = sum(sel[1:], sel[0])
            safe = model.replace("+", "_")
            (out / f"confusion_{safe}.csv").write_text(format_confusion_csv(total))
    if result.failures:
        with open(out / "failures.csv", "w") as fh:
            fh.write("rep,fold,model,seq_len,error\n")
            for f in result.failures:
                err = f.error.replace("\n", " ").replace(",", ";")
                fh.write(f"{f.rep},{f.fold},{f.model},{f.seq_len},{err}\n")
    if cfg.emit_hypnograms:
        first_seq = cfg.seq_lens[0]
        for fold, fs in enumerate(feature_sets):
            for model in HYPNOGRAM_PRIORITY:
                preds = result.predictions.get((model, first_seq, 0, fold))
                if preds is not None:
                    emit_hypnogram(preds, fs.labels, out / f"hypnogram_fold{fold}")
                    break
    logger.info("wrote outputs to %s", out)


def run_experiment(dataset, cfg: ExperimentConfig) -> ExperimentResult:
    """LOOCV over recordings for every model, window length, and repetition.

    ``dataset`` is a list of Recording or RecordingFeatures (recordings are
    featurized first). Fold failures are recorded, not raised. Writes report
    files when cfg.out_dir is set.
    """
    if len(dataset) < 2:
        raise ValueError(f"leave-one-out needs at least 2 recordings, got {len(dataset)}")
    feature_sets = featurize(dataset) if isinstance(dataset[0], Recording) else list(dataset)

    tasks = [(feature_sets, fold, rep, cfg)
             for rep in range(cfg.reps) for fold in range(len(feature_sets))]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            outcomes = list(pool.map(_run_fold_star, tasks))
    else:
        outcomes = [_run_fold(*t) for t in tasks]

    reports: list[FoldReport] = []
    failures: list[FoldFailure] = []
    predictions: dict = {}
    for (_, fold, rep, _), (fold_reports, fold_preds, fold_failures) in zip(tasks, outcomes):
        reports.extend(fold_reports)
        failures.extend(fold_failures)
        for (model, seq_len), preds in fold_preds.items():
            predictions[(model, seq_len, rep, fold)] = preds
    result = ExperimentResult(reports, failures, summarize(reports, cfg), predictions)
    if cfg.out_dir is not None:
        _write_outputs(result, feature_sets, cfg)
    return result
