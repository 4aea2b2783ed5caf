"""Five-state HMM over stage posteriors, decoded with log-space Viterbi.

Transitions are counted from training hypnograms with Laplace smoothing.
Emission scores divide each posterior by its class prior (the standard
pseudo-likelihood conversion for hybrid decoders); ``emissions="raw"`` uses
the posteriors directly.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .data import N_STAGES
from .validation import as_labels


def viterbi(pi: np.ndarray, trans: np.ndarray, emissions: np.ndarray) -> np.ndarray:
    """Most probable state path, computed in log space.

    ``emissions`` is a (T, S) matrix of nonnegative state scores; zero entries
    are allowed (log -> -inf) but an all-zero row has no valid state and is an
    error. Ties break toward the lower state index at every step.
    """
    pi = np.asarray(pi, dtype=np.float64)
    trans = np.asarray(trans, dtype=np.float64)
    emissions = np.asarray(emissions, dtype=np.float64)
    if emissions.ndim != 2 or emissions.shape[1] != len(pi):
        raise ValueError(f"emissions must be (T, {len(pi)}), got {emissions.shape}")
    if np.any(emissions.max(axis=1) <= 0.0):
        t = int(np.argmax(emissions.max(axis=1) <= 0.0))
        raise ValueError(f"zero emission row at t={t}: no state has positive score")
    T, S = emissions.shape
    with np.errstate(divide="ignore"):
        log_e = np.log(emissions)
        log_pi = np.log(pi)
        log_A = np.log(trans)
    score = log_pi + log_e[0]
    back = np.empty((T, S), dtype=np.int64)
    for t in range(1, T):
        cand = score[:, None] + log_A  # cand[i, j]: best-so-far ending i, then i->j
        back[t] = np.argmax(cand, axis=0)  # argmax returns the first (lowest) index
        score = cand[back[t], np.arange(S)] + log_e[t]
    path = np.empty(T, dtype=np.int64)
    path[-1] = int(np.argmax(score))
    for t in range(T - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path


class SleepHmm(BaseEstimator):
    """Stage-transition HMM fitted from hypnograms, decoding posterior sequences."""

    def __init__(self, alpha: float = 1.0, emissions: str = "scaled"):
        self.alpha = alpha
        self.emissions = emissions

    def fit(self, label_sequences, y=None) -> "SleepHmm":
        """Estimate pi, the transition matrix, and class priors by smoothed counts.

        A[i][j] = (count(i->j) + alpha) / (count(i->.) + 5 alpha); rows with no
        outgoing transitions and alpha=0 fall back to uniform.
        """
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        seqs = [as_labels(np.asarray(s), name="label sequence") for s in label_sequences]
        if not seqs or any(len(s) == 0 for s in seqs):
            raise ValueError("fit needs nonempty label sequences")
        S = N_STAGES
        counts = np.zeros((S, S))
        starts = np.zeros(S)
        totals = np.zeros(S)
        for s in seqs:
            starts[s[0]] += 1
            np.add.at(counts, (s[:-1], s[1:]), 1.0)
            np.add.at(totals, s, 1.0)
        row_sums = counts.sum(axis=1, keepdims=True) + S * self.alpha
        A = np.where(
            row_sums > 0.0,
            (counts + self.alpha) / np.where(row_sums > 0.0, row_sums, 1.0),
            1.0 / S,
        )
        self.trans_ = A
        self.pi_ = (starts + self.alpha) / (starts.sum() + S * self.alpha)
        self.class_priors_ = (totals + self.alpha) / (totals.sum() + S * self.alpha)
        return self

    def decode(self, posteriors: np.ndarray) -> np.ndarray:
        """Viterbi path for a (T, 5) posterior sequence (rows must sum to ~1)."""
        check_is_fitted(self, "trans_")
        posteriors = np.asarray(posteriors, dtype=np.float64)
        if posteriors.ndim != 2 or posteriors.shape[1] != N_STAGES:
            raise ValueError(f"posteriors must be (T, {N_STAGES}), got {posteriors.shape}")
        sums = posteriors.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > 1e-6):
            t = int(np.argmax(np.abs(sums - 1.0) > 1e-6))
            raise ValueError(f"posterior row {t} sums to {sums[t]}, not 1")
        if self.emissions == "scaled":
            scores = posteriors / self.class_priors_
        elif self.emissions == "raw":
            scores = posteriors
        else:
            raise ValueError(f"emissions must be 'scaled' or 'raw', got {self.emissions!r}")
        return viterbi(self.pi_, self.trans_, scores)

    predict = decode
