"""Handcrafted per-epoch features and the [0,1] range scaler.

Each 30-second epoch yields a fixed-order vector of 28 features: 12 from EEG,
10 from the two EOG channels, 6 from EMG (see FEATURE_NAMES). Spectral
quantities come from a Hann-windowed averaged periodogram (256-sample
segments, 50% overlap). Degenerate inputs follow explicit conventions so the
vector is always finite: zero/constant signals give 0 for entropies,
correlations and kurtosis, and 1.0 for the fractal dimension.
"""

from __future__ import annotations

import csv

import numpy as np
from scipy import signal as sps
from scipy import stats
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

N_FEATURES = 28

#: The five EEG bands (Hz); half-open [lo, hi) so they are disjoint.
EEG_BANDS = (
    ("delta", 0.5, 4.0),
    ("theta", 4.0, 8.0),
    ("alpha", 8.0, 13.0),
    ("beta", 13.0, 20.0),
    ("gamma", 20.0, 40.0),
)

FEATURE_NAMES = tuple(
    [f"eeg_rel_{name}" for name, _, _ in EEG_BANDS]
    + [
        "eeg_mean_freq",
        "eeg_spectral_entropy",
        "eeg_signal_entropy",
        "eeg_kurtosis",
        "eeg_median_abs",
        "eeg_higuchi_fd",
        "eeg_rms",
    ]
    + [f"eog_l_{stat}" for stat in ("signal_entropy", "kurtosis", "median_abs", "rms")]
    + [f"eog_r_{stat}" for stat in ("signal_entropy", "kurtosis", "median_abs", "rms")]
    + ["eog_correlation", "eog_movement_density"]
    + [
        "emg_median_abs",
        "emg_signal_entropy",
        "emg_kurtosis",
        "emg_rms",
        "emg_edge_freq_95",
        "emg_zero_cross_rate",
    ]
)
assert len(FEATURE_NAMES) == N_FEATURES

_NPERSEG = 256
_HIST_BINS = 32
_KMAX = 8


def periodogram(x: np.ndarray, fs: float) -> tuple[np.ndarray, np.ndarray]:
    """Averaged periodogram (Hann, 256-sample segments, 50% overlap).

    Returns (freqs, psd) restricted to nothing; callers select their band.
    """
    x = np.asarray(x, dtype=np.float64)
    if len(x) < _NPERSEG:
        raise ValueError(f"signal too short for spectral analysis: {len(x)} < {_NPERSEG}")
    freqs, psd = sps.welch(
        x, fs=fs, window="hann", nperseg=_NPERSEG, noverlap=_NPERSEG // 2,
        detrend="constant",
    )
    return freqs, psd


def band_power(x: np.ndarray, fs: float, band: tuple[float, float]) -> float:
    """Integrated periodogram power in the half-open band [lo, hi)."""
    lo, hi = band
    if not (0.0 <= lo < hi <= fs / 2):
        raise ValueError(f"band {band} outside (0, Nyquist={fs / 2}] Hz")
    freqs, psd = periodogram(x, fs)
    return _band_sum(freqs, psd, lo, hi) * (freqs[1] - freqs[0])


def _band_sum(freqs: np.ndarray, psd: np.ndarray, lo: float, hi: float) -> float:
    return float(psd[(freqs >= lo) & (freqs < hi)].sum())


def relative_band_powers(x: np.ndarray, fs: float) -> np.ndarray:
    """The five EEG band powers, each relative to total power over [0.5, fs/2].

    Zero total power (flat signal) gives all-zero ratios by convention. The
    bands are disjoint sub-intervals, so the ratios sum to at most 1.
    """
    freqs, psd = periodogram(x, fs)
    total = float(psd[(freqs >= 0.5) & (freqs <= fs / 2)].sum())
    if total <= 0.0:
        return np.zeros(len(EEG_BANDS))
    return np.array([_band_sum(freqs, psd, lo, hi) / total for _, lo, hi in EEG_BANDS])


def spectral_entropy(x: np.ndarray, fs: float) -> float:
    """Shannon entropy of the normalized periodogram over [0.5, fs/2], in [0,1]."""
    freqs, psd = periodogram(x, fs)
    p = psd[(freqs >= 0.5) & (freqs <= fs / 2)]
    total = p.sum()
    if total <= 0.0:
        return 0.0
    n_bins = len(p)
    p = p[p > 0] / total
    return float(-(p * np.log(p)).sum() / np.log(n_bins))


def spectral_mean_freq(x: np.ndarray, fs: float) -> float:
    """Power-weighted mean frequency over [0.5, fs/2] Hz; 0 for a flat signal."""
    freqs, psd = periodogram(x, fs)
    mask = (freqs >= 0.5) & (freqs <= fs / 2)
    total = psd[mask].sum()
    if total <= 0.0:
        return 0.0
    return float((freqs[mask] * psd[mask]).sum() / total)


def spectral_edge_freq(x: np.ndarray, fs: float, fraction: float = 0.95) -> float:
    """Lowest frequency below which ``fraction`` of the [0.5, fs/2] power lies."""
    freqs, psd = periodogram(x, fs)
    mask = (freqs >= 0.5) & (freqs <= fs / 2)
    p = psd[mask]
    total = p.sum()
    if total <= 0.0:
        return 0.0
    cum = np.cumsum(p) / total
    return float(freqs[mask][np.searchsorted(cum, fraction)])


def signal_entropy(x: np.ndarray, bins: int = _HIST_BINS) -> float:
    """Normalized Shannon entropy of the amplitude histogram, in [0,1]."""
    x = np.asarray(x, dtype=np.float64)
    if np.ptp(x) == 0.0:
        return 0.0
    counts, _ = np.histogram(x, bins=bins)
    p = counts[counts > 0] / len(x)
    return float(-(p * np.log(p)).sum() / np.log(bins))


def kurtosis(x: np.ndarray) -> float:
    """Excess kurtosis; 0 by convention for a constant signal."""
    x = np.asarray(x, dtype=np.float64)
    if np.ptp(x) == 0.0:
        return 0.0
    return float(stats.kurtosis(x, fisher=True, bias=True))


def median_abs_amplitude(x: np.ndarray) -> float:
    return float(np.median(np.abs(x)))


def rms(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.square(x, dtype=np.float64))))


def zero_crossing_rate(x: np.ndarray) -> float:
    """Fraction of consecutive sample pairs with a strict sign change."""
    x = np.asarray(x, dtype=np.float64)
    return float(np.mean(x[:-1] * x[1:] < 0.0))


def pearson_correlation(a: np.ndarray, b: np.ndarray) -> float:
    """Zero-lag Pearson correlation; 0 by convention if either side is constant."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    da, db = a - a.mean(), b - b.mean()
    denom = np.sqrt((da * da).sum() * (db * db).sum())
    if denom == 0.0:
        return 0.0
    return float((da * db).sum() / denom)


def movement_density(a: np.ndarray, b: np.ndarray, fs: float) -> float:
    """Fraction of 1 s sub-windows with RMS above 2x the epoch's median sub-window
    RMS, averaged over the two eye channels."""
    def one_eye(x: np.ndarray) -> float:
        n = int(round(fs))
        n_win = len(x) // n
        w = x[: n_win * n].reshape(n_win, n)
        win_rms = np.sqrt(np.mean(np.square(w, dtype=np.float64), axis=1))
        return float(np.mean(win_rms > 2.0 * np.median(win_rms)))

    return 0.5 * (one_eye(np.asarray(a)) + one_eye(np.asarray(b)))


def higuchi_fd(x: np.ndarray, k_max: int = _KMAX) -> float:
    """Higuchi fractal dimension.

    Curve lengths L(k) are averaged over the k phase offsets and regressed
    (least squares) as ln L(k) against ln(1/k); the slope is the dimension.
    A constant signal has zero curve length at every scale and returns 1.0.
    """
    x = np.asarray(x, dtype=np.float64)
    if k_max < 2:
        raise ValueError(f"k_max must be >= 2, got {k_max}")
    n = len(x)
    if n < 10 * k_max:
        raise ValueError(f"signal too short for k_max={k_max}: {n} < {10 * k_max}")
    if np.ptp(x) == 0.0:
        return 1.0
    lengths = []
    for k in range(1, k_max + 1):
        lm = []
        for m in range(k):
            idx = np.arange(m, n, k)
            num = (n - 1) / ((len(idx) - 1) * k)  # length normalization
            lm.append(np.abs(np.diff(x[idx])).sum() * num / k)
        lengths.append(np.mean(lm))
    lengths = np.asarray(lengths)
    k_vals = np.arange(1, k_max + 1)
    slope, _ = np.polyfit(np.log(1.0 / k_vals), np.log(lengths), 1)
    return float(slope)


def extract_features(epoch, fs: float) -> np.ndarray:
    """The 28-feature vector for one epoch, ordered as FEATURE_NAMES.

    Accepts anything with a ``channels`` mapping holding eeg/eog_l/eog_r/emg
    arrays. Deterministic, and finite for any finite input.
    """
    eeg = np.asarray(epoch.channels["eeg"], dtype=np.float64)
    eog_l = np.asarray(epoch.channels["eog_l"], dtype=np.float64)
    eog_r = np.asarray(epoch.channels["eog_r"], dtype=np.float64)
    emg = np.asarray(epoch.channels["emg"], dtype=np.float64)

    values = list(relative_band_powers(eeg, fs))
    values += [
        spectral_mean_freq(eeg, fs),
        spectral_entropy(eeg, fs),
        signal_entropy(eeg),
        kurtosis(eeg),
        median_abs_amplitude(eeg),
        higuchi_fd(eeg),
        rms(eeg),
    ]
    for eye in (eog_l, eog_r):
        values += [signal_entropy(eye), kurtosis(eye), median_abs_amplitude(eye), rms(eye)]
    values += [
        pearson_correlation(eog_l, eog_r),
        movement_density(eog_l, eog_r, fs),
        median_abs_amplitude(emg),
        signal_entropy(emg),
        kurtosis(emg),
        rms(emg),
        spectral_edge_freq(emg, fs),
        zero_crossing_rate(emg),
    ]
    out = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(out)):
        bad = [FEATURE_NAMES[i] for i in np.nonzero(~np.isfinite(out))[0]]
        raise ValueError(f"non-finite features {bad} for epoch {epoch.index} of {epoch.recording_id}")
    return out


def extract_feature_matrix(epochs, fs: float) -> np.ndarray:
    """Stack extract_features over a list of epochs into an (n, 28) matrix."""
    return np.asarray([extract_features(e, fs) for e in epochs])


class RobustRangeScaler(BaseEstimator, TransformerMixin):
    """Map each feature into [0,1] by clamping to fitted percentile bounds.

    Bounds are the per-feature 1st/99th percentiles of the training matrix
    (robust to outlier epochs); transform clamps to [low, high] and maps
    linearly. A feature with zero spread has its bounds widened by eps on
    each side, so constant features land at 0.5.
    """

    def __init__(self, low_pct: float = 1.0, high_pct: float = 99.0, eps: float = 1e-6):
        self.low_pct = low_pct
        self.high_pct = high_pct
        self.eps = eps

    def fit(self, X, y=None):
        X = check_array(X, ensure_min_samples=2)
        self.n_features_in_ = X.shape[1]
        self.low_ = np.percentile(X, self.low_pct, axis=0)
        self.high_ = np.percentile(X, self.high_pct, axis=0)
        flat = self.high_ - self.low_ <= 0.0
        self.low_[flat] -= self.eps
        self.high_[flat] += self.eps
        return self

    def transform(self, X):
        check_is_fitted(self, "low_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, scaler was fitted on {self.n_features_in_}"
            )
        clipped = np.clip(X, self.low_, self.high_)
        return (clipped - self.low_) / (self.high_ - self.low_)


def write_features_csv(path, features: np.ndarray, labels: np.ndarray) -> None:
    """Write ``epoch,stage,f00..f27`` rows at full decimal precision."""
    from .data import STAGE_TOKENS

    features = np.asarray(features)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "stage"] + [f"f{i:02d}" for i in range(features.shape[1])])
        for i, (row, label) in enumerate(zip(features, labels)):
            writer.writerow([i, STAGE_TOKENS[int(label)]] + [f"{v:.17g}" for v in row])
