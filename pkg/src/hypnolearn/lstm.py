"""Stacked LSTM sequence classifier trained by full-window BPTT with RMSProp.

Windows of ``seq_len`` consecutive per-epoch vectors (5-dim stage posteriors,
or 28-dim scaled features in feature-only mode) predict the stage of the
window's final epoch. Three stacked layers (128/64/32 units by default) feed
a softmax head from the last layer's final hidden state.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .data import N_STAGES
from .dbn import cross_entropy_from_logits, softmax
from .validation import as_labels, as_window_tensor

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SequenceWindow:
    """``seq_len`` temporally consecutive epoch vectors labeled by the last epoch."""

    inputs: np.ndarray
    label: int


def make_windows(vectors: np.ndarray, labels: np.ndarray, seq_len: int) -> list[SequenceWindow]:
    """Stride-1 sliding windows over one recording's epoch vectors.

    The window ending at epoch t carries label(t); the first seq_len-1
    epochs yield no window. A sequence shorter than seq_len returns an
    empty list with a warning.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    labels = as_labels(labels, len(vectors), name="labels")
    if seq_len < 1:
        raise ValueError(f"seq_len must be >= 1, got {seq_len}")
    n = len(vectors)
    if n < seq_len:
        logger.warning("sequence of %d epochs is shorter than seq_len=%d; no windows", n, seq_len)
        return []
    return [
        SequenceWindow(inputs=vectors[t - seq_len + 1: t + 1], label=int(labels[t]))
        for t in range(seq_len - 1, n)
    ]


def stack_windows(windows: list[SequenceWindow]) -> tuple[np.ndarray, np.ndarray]:
    """Window list -> ((n, seq_len, in_dim) tensor, (n,) label array)."""
    if not windows:
        raise ValueError("empty window list")
    X = np.stack([w.inputs for w in windows])
    y = np.asarray([w.label for w in windows], dtype=np.int64)
    return X, y


def rmsprop_step(param: np.ndarray, grad: np.ndarray, state: np.ndarray,
                 lr: float, rho: float, eps: float) -> None:
    """In-place RMSProp: s <- rho s + (1-rho) g^2; p <- p - lr g / (sqrt(s) + eps)."""
    state *= rho
    state += (1.0 - rho) * grad * grad
    param -= lr * grad / (np.sqrt(state) + eps)


class LstmLayer:
    """One LSTM layer with the four gate parameter sets stacked row-wise.

    Wx is (4*units, in_dim), Wh is (4*units, units), b is (4*units,), rows
    ordered input/forget/cell/output so a step is a single matmul. ``rng``
    draws uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights and sets the
    forget bias to 1.0; rng=None leaves everything zero (for hand-set tests).
    """

    def __init__(self, in_dim: int, units: int, rng: np.random.Generator | None = None):
        self.in_dim = in_dim
        self.units = units
        if rng is None:
            self.Wx = np.zeros((4 * units, in_dim))
            self.Wh = np.zeros((4 * units, units))
            self.b = np.zeros(4 * units)
        else:
            sx = 1.0 / np.sqrt(in_dim)
            sh = 1.0 / np.sqrt(units)
            self.Wx = rng.uniform(-sx, sx, size=(4 * units, in_dim))
            self.Wh = rng.uniform(-sh, sh, size=(4 * units, units))
            self.b = np.zeros(4 * units)
            self.b[units: 2 * units] = 1.0  # forget-gate bias

    def _gates(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        u = self.units
        return (
            expit(z[..., :u]),          # input
            expit(z[..., u: 2 * u]),    # forget
            np.tanh(z[..., 2 * u: 3 * u]),  # cell candidate
            expit(z[..., 3 * u:]),      # output
        )

    def step(self, x_t: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray):
        """One time step; returns (h, c, activated gates (n, 4u))."""
        z = x_t @ self.Wx.T + h_prev @ self.Wh.T + self.b
        i, f, g, o = self._gates(z)
        c = f * c_prev + i * g
        h = o * np.tanh(c)
        return h, c, np.concatenate([i, f, g, o], axis=-1)

    def forward(self, X: np.ndarray):
        """Run the full window; returns (H hidden sequence, cache for backward)."""
        n, T, _ = X.shape
        u = self.units
        H = np.empty((n, T, u))
        C = np.empty((n, T, u))
        G = np.empty((n, T, 4 * u))
        h = np.zeros((n, u))
        c = np.zeros((n, u))
        for t in range(T):
            h, c, G[:, t] = self.step(X[:, t], h, c)
            H[:, t] = h
            C[:, t] = c
        return H, (X, G, C, H)

    def backward(self, dH: np.ndarray, cache):
        """BPTT through the window.

        dH is the loss gradient w.r.t. this layer's hidden outputs (n, T, u).
        Returns ((dWx, dWh, db), dX). Weight gradients are accumulated with
        two end-of-window matmuls over the cached pre-nonlinearity deltas.
        """
        X, G, C, H = cache
        n, T, _ = X.shape
        u = self.units
        TC = np.tanh(C)
        dZ = np.empty_like(G)
        dh_next = np.zeros((n, u))
        dc_next = np.zeros((n, u))
        for t in range(T - 1, -1, -1):
            i, f, g, o = G[:, t, :u], G[:, t, u:2 * u], G[:, t, 2 * u:3 * u], G[:, t, 3 * u:]
            dh = dH[:, t] + dh_next
            do = dh * TC[:, t]
            dc = dh * o * (1.0 - TC[:, t] ** 2) + dc_next
            c_prev = C[:, t - 1] if t > 0 else 0.0
            dZ[:, t, :u] = dc * g * i * (1.0 - i)
            dZ[:, t, u:2 * u] = dc * c_prev * f * (1.0 - f)
            dZ[:, t, 2 * u:3 * u] = dc * i * (1.0 - g * g)
            dZ[:, t, 3 * u:] = do * o * (1.0 - o)
            dc_next = dc * f
            dh_next = dZ[:, t] @ self.Wh
        H_prev = np.concatenate([np.zeros((n, 1, u)), H[:, :-1]], axis=1)
        flat = dZ.reshape(n * T, 4 * u)
        dWx = flat.T @ X.reshape(n * T, -1)
        dWh = flat.T @ H_prev.reshape(n * T, u)
        db = flat.sum(axis=0)
        dX = dZ @ self.Wx
        return (dWx, dWh, db), dX


def cell_forward(layer: LstmLayer, x_t: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray):
    """Single-step cell update for one vector; returns (h_t, c_t)."""
    h, c, _ = layer.step(
        np.atleast_2d(np.asarray(x_t, dtype=np.float64)),
        np.atleast_2d(np.asarray(h_prev, dtype=np.float64)),
        np.atleast_2d(np.asarray(c_prev, dtype=np.float64)),
    )
    return h[0], c[0]


class StackedLstmClassifier(BaseEstimator, ClassifierMixin):
    """Stacked LSTM with a softmax head over the last layer's final state.

    Trains for ``epochs`` passes of shuffled ``batch_size`` mini-batches under
    mean cross-entropy with RMSProp, retaining the parameters of the epoch
    with the best monitored accuracy (validation if provided, else training).
    Deterministic given ``random_state``.
    """

    def __init__(
        self,
        hidden_units: tuple[int, ...] = (128, 64, 32),
        n_classes: int = N_STAGES,
        seq_len: int = 5,
        epochs: int = 100,
        batch_size: int = 500,
        learning_rate: float = 0.001,
        rho: float = 0.9,
        eps: float = 1e-8,
        random_state: int = 0,
    ):
        self.hidden_units = hidden_units
        self.n_classes = n_classes
        self.seq_len = seq_len
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.rho = rho
        self.eps = eps
        self.random_state = random_state

    def init_params(self, in_dim: int) -> "StackedLstmClassifier":
        """Seeded parameter initialization (called by fit; exposed for tests)."""
        rng = np.random.default_rng(self.random_state)
        self.in_dim_ = in_dim
        self.layers_ = []
        d = in_dim
        for u in self.hidden_units:
            self.layers_.append(LstmLayer(d, int(u), rng))
            d = int(u)
        s = 1.0 / np.sqrt(d)
        self.head_W_ = rng.uniform(-s, s, size=(self.n_classes, d))
        self.head_b_ = np.zeros(self.n_classes)
        self._train_rng_ = rng
        return self

    def parameters(self) -> list[np.ndarray]:
        """All parameter arrays, in the fixed order used by bptt_gradients."""
        out: list[np.ndarray] = []
        for layer in self.layers_:
            out += [layer.Wx, layer.Wh, layer.b]
        out += [self.head_W_, self.head_b_]
        return out

    def _forward_cached(self, X: np.ndarray):
        caches = []
        H = X
        for layer in self.layers_:
            H, cache = layer.forward(H)
            caches.append(cache)
        logits = H[:, -1] @ self.head_W_.T + self.head_b_
        return logits, H, caches

    def decision_function(self, X) -> np.ndarray:
        """Head logits, computed in memory-bounded chunks."""
        check_is_fitted(self, "layers_")
        X = as_window_tensor(X, self.in_dim_, self.seq_len)
        chunks = []
        for start in range(0, len(X), 2048):
            logits, _, _ = self._forward_cached(X[start: start + 2048])
            chunks.append(logits)
        return np.concatenate(chunks) if chunks else np.empty((0, self.n_classes))

    def predict_proba(self, X) -> np.ndarray:
        return softmax(self.decision_function(X))

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.decision_function(X), axis=1)

    def loss(self, X, y) -> float:
        """Mean cross-entropy of a batch (the quantity bptt_gradients differentiates)."""
        X = as_window_tensor(X, self.in_dim_, None)
        y = as_labels(y, len(X))
        logits, _, _ = self._forward_cached(X)
        return cross_entropy_from_logits(logits, y)

    def bptt_gradients(self, X, y) -> list[np.ndarray]:
        """Exact mean-cross-entropy gradients for every parameter array.

        Output order matches parameters(): per layer Wx, Wh, b, then head W, b.
        """
        X = as_window_tensor(X, self.in_dim_, None)
        y = as_labels(y, len(X))
        n = len(X)
        logits, H_last, caches = self._forward_cached(X)
        delta = softmax(logits)
        delta[np.arange(n), y] -= 1.0
        delta /= n
        g_head_W = delta.T @ H_last[:, -1]
        g_head_b = delta.sum(axis=0)
        dH = np.zeros_like(H_last)
        dH[:, -1] = delta @ self.head_W_
        layer_grads: list[list[np.ndarray]] = []
        for layer, cache in zip(reversed(self.layers_), reversed(caches)):
            (dWx, dWh, db), dH = layer.backward(dH, cache)
            layer_grads.append([dWx, dWh, db])
        grads: list[np.ndarray] = []
        for triple in reversed(layer_grads):
            grads += triple
        grads += [g_head_W, g_head_b]
        return grads

    def _accuracy(self, X: np.ndarray, y: np.ndarray) -> float:
        return float(np.mean(self.predict(X) == y))

    def fit(self, X, y, validation_data=None) -> "StackedLstmClassifier":
        X = as_window_tensor(X, seq_len=self.seq_len)
        y = as_labels(y, len(X))
        if len(X) == 0:
            raise ValueError("empty training set")
        if validation_data is not None:
            X_val = as_window_tensor(validation_data[0], X.shape[2], self.seq_len)
            y_val = as_labels(validation_data[1], len(X_val))
        self.init_params(X.shape[2])
        params = self.parameters()
        state = [np.zeros_like(p) for p in params]
        rng = self._train_rng_
        best_acc = -np.inf
        best = [p.copy() for p in params]
        for epoch in range(self.epochs):
            perm = rng.permutation(len(X))
            for start in range(0, len(X), self.batch_size):
                idx = perm[start: start + self.batch_size]
                grads = self.bptt_gradients(X[idx], y[idx])
                for p, g, s in zip(params, grads, state):
                    rmsprop_step(p, g, s, self.learning_rate, self.rho, self.eps)
            if validation_data is not None:
                acc = self._accuracy(X_val, y_val)
            else:
                acc = self._accuracy(X, y)
            if acc > best_acc:
                best_acc = acc
                best = [p.copy() for p in params]
        for p, bp in zip(params, best):
            p[...] = bp
        logger.info("LSTM training done; best monitored accuracy %.4f", best_acc)
        self.classes_ = np.arange(self.n_classes)
        return self


def predict_epoch_sequence(model: StackedLstmClassifier, vectors: np.ndarray):
    """Score every epoch of one recording with a window model.

    Epochs from seq_len-1 on get their own window's prediction; the leading
    seq_len-1 epochs have no complete history and receive the first window's
    prediction, marked True in the returned ``padded`` mask so accuracy
    denominators still cover the whole recording.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    n = len(vectors)
    L = model.seq_len
    if n < L:
        raise ValueError(f"recording has {n} epochs, fewer than seq_len={L}; cannot score")
    X = np.stack([vectors[t - L + 1: t + 1] for t in range(L - 1, n)])
    wpreds = model.predict(X)
    preds = np.empty(n, dtype=np.int64)
    preds[L - 1:] = wpreds
    preds[: L - 1] = wpreds[0]
    padded = np.zeros(n, dtype=bool)
    padded[: L - 1] = True
    return preds, padded
