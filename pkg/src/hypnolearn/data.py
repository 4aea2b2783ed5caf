"""Recording I/O, 30-second epoch segmentation, and the protocol split rules.

A recording lives in two text files: ``<name>.csv`` with header
``t,eeg,eog_l,eog_r,emg`` (one row per sample) and ``<name>.labels.csv``
with header ``epoch,stage`` (one row per 30-second epoch, stage token in
{W, S1, S2, SWS, REM}; "S3" is accepted as an alias for SWS).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np
import pandas as pd


class SleepStage(IntEnum):
    """The five stage labels; SWS is displayed as "S3" in MKG-style reports."""

    WAKE = 0
    S1 = 1
    S2 = 2
    SWS = 3
    REM = 4


N_STAGES = 5
#: Canonical file tokens, indexed by stage code.
STAGE_TOKENS = ("W", "S1", "S2", "SWS", "REM")
#: Row/column headers used in confusion tables.
STAGE_NAMES = ("WAKE", "S1", "S2", "SWS", "REM")
TOKEN_TO_STAGE = {
    "W": SleepStage.WAKE,
    "WAKE": SleepStage.WAKE,
    "S1": SleepStage.S1,
    "S2": SleepStage.S2,
    "SWS": SleepStage.SWS,
    "S3": SleepStage.SWS,  # MKG-style alias
    "REM": SleepStage.REM,
}

CHANNEL_NAMES = ("eeg", "eog_l", "eog_r", "emg")
SIGNAL_HEADER = ("t",) + CHANNEL_NAMES


class DataFormatError(ValueError):
    """Malformed recording or label file; the message names the offending line."""


class InsufficientClassSupportError(ValueError):
    """A stage has too few epochs to honor the 5:1 train:validation split."""


@dataclass(frozen=True)
class Recording:
    """A full night: four channels plus one stage label per epoch.

    All channels have the same length, which must equal
    ``len(labels) * epoch_len_s * sample_rate_hz`` exactly.
    """

    id: str
    sample_rate_hz: float
    epoch_len_s: float
    channels: dict[str, np.ndarray]
    labels: np.ndarray

    def __post_init__(self) -> None:
        if self.sample_rate_hz <= 0:
            raise ValueError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        if set(self.channels) != set(CHANNEL_NAMES):
            raise ValueError(
                f"recording {self.id!r}: channels must be exactly {CHANNEL_NAMES}, "
                f"got {tuple(self.channels)}"
            )
        lengths = {name: len(arr) for name, arr in self.channels.items()}
        if len(set(lengths.values())) != 1:
            raise ValueError(f"recording {self.id!r}: channel length mismatch {lengths}")
        if self.n_epochs < 1:
            raise ValueError(f"recording {self.id!r}: needs at least one labeled epoch")
        spe = self.epoch_len_s * self.sample_rate_hz
        if abs(spe - round(spe)) > 1e-9:
            raise ValueError(
                f"recording {self.id!r}: epoch_len_s * sample_rate_hz = {spe} "
                "is not an integral sample count"
            )
        n_samples = next(iter(lengths.values()))
        if n_samples != self.n_epochs * int(round(spe)):
            raise ValueError(
                f"recording {self.id!r}: {n_samples} samples != "
                f"{self.n_epochs} epochs * {int(round(spe))} samples/epoch"
            )

    @property
    def n_epochs(self) -> int:
        return len(self.labels)

    @property
    def samples_per_epoch(self) -> int:
        return int(round(self.epoch_len_s * self.sample_rate_hz))


@dataclass(frozen=True)
class Epoch:
    """One 30-second scoring window of a recording."""

    recording_id: str
    index: int
    channels: dict[str, np.ndarray]
    label: int


@dataclass
class DatasetSplit:
    """Disjoint train/validation/test epoch lists (test is the held-out night)."""

    train: list[Epoch] = field(default_factory=list)
    validation: list[Epoch] = field(default_factory=list)
    test: list[Epoch] = field(default_factory=list)


@dataclass(frozen=True)
class Fold:
    """One leave-one-out round: a single held-out recording."""

    index: int
    train: tuple[Recording, ...]
    test: Recording


def load_recording(path, sample_rate_hz: float = 100.0, epoch_len_s: float = 30.0) -> Recording:
    """Load a recording CSV plus its ``.labels.csv`` companion.

    Raises DataFormatError with a line-numbered diagnostic for malformed rows,
    unknown stage tokens, channel-length mismatches, and epoch-count problems.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"recording file not found: {path}")
    labels_path = path.parent / (path.stem + ".labels.csv")
    if not labels_path.exists():
        raise FileNotFoundError(f"labels file not found: {labels_path}")

    channels = _read_signal_file(path)
    labels = _read_labels_file(labels_path)

    spe = epoch_len_s * sample_rate_hz
    if abs(spe - round(spe)) > 1e-9:
        raise DataFormatError(
            f"{path.name}: epoch_len_s={epoch_len_s} at {sample_rate_hz} Hz does not "
            "give an integral number of samples per epoch"
        )
    spe = int(round(spe))
    n_samples = len(channels["eeg"])
    if n_samples % spe != 0:
        raise DataFormatError(
            f"{path.name}: non-integral epoch count: {n_samples} samples is not a "
            f"multiple of {spe} samples/epoch (last data line {n_samples + 1})"
        )
    if n_samples // spe != len(labels):
        raise DataFormatError(
            f"{path.name}: {n_samples // spe} epochs of data but {len(labels)} labels "
            f"in {labels_path.name}"
        )
    return Recording(
        id=path.stem,
        sample_rate_hz=sample_rate_hz,
        epoch_len_s=epoch_len_s,
        channels=channels,
        labels=labels,
    )


def _read_signal_file(path: Path) -> dict[str, np.ndarray]:
    """Fast pandas parse; falls back to a line-by-line pass for diagnostics."""
    frame = None
    try:
        frame = pd.read_csv(path, dtype=np.float64)
    except Exception:
        frame = None
    if (
        frame is not None
        and tuple(frame.columns) == SIGNAL_HEADER
        and not frame.isna().any().any()
    ):
        return {name: frame[name].to_numpy() for name in CHANNEL_NAMES}
    return _diagnose_signal_file(path)


def _diagnose_signal_file(path: Path) -> dict[str, np.ndarray]:
    """Slow path: pinpoint the first problem and name its line number."""
    columns: dict[str, list[float]] = {name: [] for name in CHANNEL_NAMES}
    short_line = None  # first line where a channel went missing
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path.name}: empty file") from None
        if tuple(h.strip() for h in header) != SIGNAL_HEADER:
            raise DataFormatError(
                f"{path.name} line 1: header must be '{','.join(SIGNAL_HEADER)}', "
                f"got '{','.join(header)}'"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) > len(SIGNAL_HEADER):
                raise DataFormatError(
                    f"{path.name} line {lineno}: malformed row, expected "
                    f"{len(SIGNAL_HEADER)} fields, got {len(row)}"
                )
            if len(row) < len(SIGNAL_HEADER) and short_line is None:
                short_line = lineno
            for name, token in zip(SIGNAL_HEADER, row):
                token = token.strip()
                if token == "":
                    if short_line is None:
                        short_line = lineno
                    continue
                try:
                    value = float(token)
                except ValueError:
                    raise DataFormatError(
                        f"{path.name} line {lineno}: malformed row, "
                        f"non-numeric value {token!r} in column {name!r}"
                    ) from None
                if name != "t":
                    columns[name].append(value)
    lengths = {name: len(vals) for name, vals in columns.items()}
    if len(set(lengths.values())) != 1:
        shortest = min(lengths, key=lengths.get)
        raise DataFormatError(
            f"{path.name}: channel length mismatch, {shortest!r} has "
            f"{lengths[shortest]} samples vs {max(lengths.values())} "
            f"(first short row at line {short_line})"
        )
    # Lengths agree after all: the fast path failed for another reason
    # (e.g. stray NaN text); re-raise as malformed.
    raise DataFormatError(f"{path.name}: could not parse as '{','.join(SIGNAL_HEADER)}' CSV")


def _read_labels_file(path: Path) -> np.ndarray:
    labels: list[int] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path.name}: empty labels file") from None
        if tuple(h.strip() for h in header) != ("epoch", "stage"):
            raise DataFormatError(
                f"{path.name} line 1: header must be 'epoch,stage', got '{','.join(header)}'"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise DataFormatError(
                    f"{path.name} line {lineno}: malformed row, expected 2 fields, got {len(row)}"
                )
            idx_token, stage_token = row[0].strip(), row[1].strip()
            try:
                idx = int(idx_token)
            except ValueError:
                raise DataFormatError(
                    f"{path.name} line {lineno}: malformed epoch index {idx_token!r}"
                ) from None
            if idx != len(labels):
                raise DataFormatError(
                    f"{path.name} line {lineno}: epoch index {idx} out of order "
                    f"(expected {len(labels)})"
                )
            stage = TOKEN_TO_STAGE.get(stage_token.upper())
            if stage is None:
                raise DataFormatError(
                    f"{path.name} line {lineno}: unknown stage label {stage_token!r} "
                    f"(expected one of {', '.join(STAGE_TOKENS)} or S3)"
                )
            labels.append(int(stage))
    if not labels:
        raise DataFormatError(f"{path.name}: no labeled epochs")
    return np.asarray(labels, dtype=np.int64)


def write_recording(recording: Recording, out_dir, float_format: str = "%.8g") -> Path:
    """Write ``<id>.csv`` + ``<id>.labels.csv`` under ``out_dir``; returns the CSV path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    n = len(recording.channels["eeg"])
    t = np.arange(n, dtype=np.float64) / recording.sample_rate_hz
    frame = pd.DataFrame({"t": t} | {name: recording.channels[name] for name in CHANNEL_NAMES})
    csv_path = out_dir / f"{recording.id}.csv"
    frame.to_csv(csv_path, index=False, float_format=float_format)
    with open(out_dir / f"{recording.id}.labels.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "stage"])
        for i, code in enumerate(recording.labels):
            writer.writerow([i, STAGE_TOKENS[int(code)]])
    return csv_path


def load_dataset(directory, sample_rate_hz: float = 100.0, epoch_len_s: float = 30.0) -> list[Recording]:
    """Load every recording in a directory (files with a ``.labels.csv`` companion)."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"dataset directory not found: {directory}")
    paths = sorted(
        p for p in directory.glob("*.csv")
        if not p.name.endswith(".labels.csv")
        and not p.name.endswith(".features.csv")
        and (directory / (p.stem + ".labels.csv")).exists()
    )
    if not paths:
        raise FileNotFoundError(f"no recordings (CSV + labels pairs) found in {directory}")
    return [load_recording(p, sample_rate_hz, epoch_len_s) for p in paths]


def segment_epochs(recording: Recording) -> list[Epoch]:
    """Cut a recording into its epochs; epoch i covers samples [i*L, (i+1)*L)."""
    spe = recording.samples_per_epoch
    epochs = []
    for i in range(recording.n_epochs):
        sl = slice(i * spe, (i + 1) * spe)
        epochs.append(
            Epoch(
                recording_id=recording.id,
                index=i,
                channels={name: arr[sl] for name, arr in recording.channels.items()},
                label=int(recording.labels[i]),
            )
        )
    return epochs


def remove_transition_epochs(epochs: list[Epoch], margin: int = 1) -> list[Epoch]:
    """Drop the ``margin`` epochs on each side of every label switch.

    With the default margin of 1, a switch between epochs i and i+1 removes
    exactly those two epochs. Applied to model-building data only; test data
    is never filtered.
    """
    if margin < 0:
        raise ValueError(f"margin must be nonnegative, got {margin}")
    kept_mask = transition_keep_mask(np.asarray([e.label for e in epochs]), margin)
    return [e for e, keep in zip(epochs, kept_mask) if keep]


def transition_keep_mask(labels: np.ndarray, margin: int = 1) -> np.ndarray:
    """Boolean mask of epochs that are at least ``margin`` epochs from a switch."""
    n = len(labels)
    keep = np.ones(n, dtype=bool)
    if margin == 0:
        return keep
    switches = np.nonzero(labels[:-1] != labels[1:])[0]
    for i in switches:
        keep[max(0, i - margin + 1): i + 1 + margin] = False
    return keep


def stratified_split(
    labels: np.ndarray, seed: int, ratio: tuple[int, int] = (5, 1)
) -> tuple[np.ndarray, np.ndarray]:
    """Per-class seeded shuffle and ratio split; returns (train_idx, val_idx).

    Validation gets ``floor(count * val / (train + val))`` items per class,
    remainder to train. Classes present with fewer than ``train + val`` items
    raise InsufficientClassSupportError; absent classes are simply skipped.
    """
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    denom = sum(ratio)
    train_idx: list[np.ndarray] = []
    val_idx: list[np.ndarray] = []
    for cls in range(N_STAGES):
        idx = np.nonzero(labels == cls)[0]
        if len(idx) == 0:
            continue
        if len(idx) < denom:
            raise InsufficientClassSupportError(
                f"stage {STAGE_TOKENS[cls]} has only {len(idx)} epochs; "
                f"need at least {denom} for a {ratio[0]}:{ratio[1]} split"
            )
        perm = rng.permutation(len(idx))
        n_val = len(idx) * ratio[1] // denom
        val_idx.append(idx[perm[:n_val]])
        train_idx.append(idx[perm[n_val:]])
    return np.concatenate(train_idx), np.concatenate(val_idx)


def balanced_split(epochs: list[Epoch], seed: int) -> DatasetSplit:
    """Split epochs 5:1 into train:validation, class-balanced and seeded."""
    labels = np.asarray([e.label for e in epochs])
    train_idx, val_idx = stratified_split(labels, seed, ratio=(5, 1))
    return DatasetSplit(
        train=[epochs[i] for i in train_idx],
        validation=[epochs[i] for i in val_idx],
    )


def loocv_folds(recordings: list[Recording]) -> list[Fold]:
    """One fold per recording: recording k is the test night of fold k."""
    if len(recordings) < 2:
        raise ValueError(
            f"leave-one-out needs at least 2 recordings, got {len(recordings)}"
        )
    folds = []
    for k, test in enumerate(recordings):
        train = tuple(r for j, r in enumerate(recordings) if j != k)
        folds.append(Fold(index=k, train=train, test=test))
    return folds
