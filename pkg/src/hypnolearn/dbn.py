"""Belief-network stage classifier: stacked RBMs plus a softmax head.

Two Bernoulli RBMs (28->200->200 by default) are pretrained greedily with
single-step contrastive divergence on [0,1]-scaled feature vectors, then the
stack plus a 5-unit softmax head is fine-tuned with plain backpropagation
(deterministic sigmoid mean-field forward) under 5-class cross-entropy.
The fine-tuned softmax output is the 5-dim stage posterior consumed by the
downstream sequence decoders.
"""

from __future__ import annotations

import logging

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .data import N_STAGES
from .validation import as_labels, as_unit_matrix

logger = logging.getLogger(__name__)

INIT_STD = 0.01  # weights ~ Normal(0, 0.01), biases 0


def softmax(z: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax."""
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy_from_logits(logits: np.ndarray, y: np.ndarray) -> float:
    """Mean 5-class cross-entropy, computed via log-sum-exp for stability."""
    m = logits.max(axis=1)
    lse = m + np.log(np.exp(logits - m[:, None]).sum(axis=1))
    return float(np.mean(lse - logits[np.arange(len(y)), y]))


def mlp_forward(params: list[tuple[np.ndarray, np.ndarray]], X: np.ndarray):
    """Mean-field forward pass: sigmoid hidden layers, affine head.

    ``params`` is [(W1, b1), ..., (Wk, bk), (W_head, b_head)] with W of shape
    (out, in). Returns (activations, logits) where activations[0] is X.
    """
    acts = [X]
    for W, b in params[:-1]:
        acts.append(expit(acts[-1] @ W.T + b))
    W, b = params[-1]
    return acts, acts[-1] @ W.T + b


def mlp_loss(params, X, y) -> float:
    _, logits = mlp_forward(params, X)
    return cross_entropy_from_logits(logits, y)


def mlp_gradients(params, X, y) -> list[tuple[np.ndarray, np.ndarray]]:
    """Exact gradient of mean cross-entropy w.r.t. every (W, b).

    No weight decay here; regularization belongs to the update step so this
    matches finite differences of mlp_loss directly.
    """
    n = len(X)
    acts, logits = mlp_forward(params, X)
    delta = softmax(logits)
    delta[np.arange(n), y] -= 1.0
    delta /= n
    grads: list[tuple[np.ndarray, np.ndarray]] = []
    for k in range(len(params) - 1, -1, -1):
        grads.append((delta.T @ acts[k], delta.sum(axis=0)))
        if k > 0:
            a = acts[k]
            delta = (delta @ params[k][0]) * a * (1.0 - a)
    grads.reverse()
    return grads


def _check_finite(arrays, context: str) -> None:
    # training invariant: no NaN/Inf may survive a parameter update
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise FloatingPointError(f"non-finite parameters after {context}")


class Rbm:
    """Bernoulli-Bernoulli restricted Boltzmann machine with CD-1 updates.

    W has shape (n_hidden, n_visible); update velocities live on the instance
    so momentum carries across batches.
    """

    def __init__(self, n_visible: int, n_hidden: int, rng: np.random.Generator):
        self.n_visible = n_visible
        self.n_hidden = n_hidden
        self.W = rng.normal(0.0, INIT_STD, size=(n_hidden, n_visible))
        self.b_vis = np.zeros(n_visible)
        self.b_hid = np.zeros(n_hidden)
        self._vel = [np.zeros_like(self.W), np.zeros_like(self.b_vis), np.zeros_like(self.b_hid)]

    def hidden_probs(self, v: np.ndarray) -> np.ndarray:
        """P(h=1 | v) = sigmoid(W v + b_hid); accepts a vector or a batch."""
        return expit(np.asarray(v, dtype=np.float64) @ self.W.T + self.b_hid)

    def visible_probs(self, h: np.ndarray) -> np.ndarray:
        """P(v=1 | h) = sigmoid(W^T h + b_vis)."""
        return expit(np.asarray(h, dtype=np.float64) @ self.W + self.b_vis)

    def cd_update(
        self,
        batch: np.ndarray,
        learning_rate: float,
        momentum: float,
        weight_decay: float,
        rng: np.random.Generator,
    ) -> None:
        """One CD-1 step: sampled h0, mean-field v1 and h1, momentum update.

        Gradient estimate per example is h0 v0^T - h1 v1^T (positive phase
        uses the sampled hidden state, negative phase the reconstruction
        probabilities); weight decay applies to W only.
        """
        v0 = batch
        ph0 = self.hidden_probs(v0)
        h0 = (rng.random(ph0.shape) < ph0).astype(np.float64)
        v1 = self.visible_probs(h0)
        ph1 = self.hidden_probs(v1)
        n = len(batch)
        grads = [
            (h0.T @ v0 - ph1.T @ v1) / n - weight_decay * self.W,
            (v0 - v1).mean(axis=0),
            (ph0 - ph1).mean(axis=0),
        ]
        for vel, grad, param in zip(self._vel, grads, (self.W, self.b_vis, self.b_hid)):
            vel *= momentum
            vel += learning_rate * grad
            param += vel
        _check_finite((self.W, self.b_vis, self.b_hid), "CD-1 update")

    def reconstruction_cross_entropy(self, batch: np.ndarray) -> float:
        """Mean per-unit cross-entropy of the mean-field reconstruction."""
        v1 = np.clip(self.visible_probs(self.hidden_probs(batch)), 1e-12, 1.0 - 1e-12)
        return float(-np.mean(batch * np.log(v1) + (1.0 - batch) * np.log(1.0 - v1)))


class DeepBeliefNetwork(BaseEstimator, ClassifierMixin):
    """Greedy-pretrained sigmoid stack with a fine-tuned 5-class softmax head.

    fit = pretrain + finetune; both phases are deterministic given
    ``random_state``. ``transform`` exposes the stage posteriors used as the
    sequence-decoder input; ``predict`` is their argmax.

    Momentum follows the classic schedule: ``momentum`` for the first
    ``momentum_switch`` epochs of each phase, ``momentum_late`` afterwards.
    """

    def __init__(
        self,
        hidden_units: tuple[int, ...] = (200, 200),
        n_classes: int = N_STAGES,
        learning_rate: float = 0.05,
        momentum: float = 0.5,
        momentum_late: float = 0.9,
        momentum_switch: int = 5,
        weight_decay: float = 2e-4,
        batch_size: int = 1000,
        pretrain_epochs: int = 50,
        finetune_epochs: int = 200,
        patience: int = 10,
        random_state: int = 0,
    ):
        self.hidden_units = hidden_units
        self.n_classes = n_classes
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.momentum_late = momentum_late
        self.momentum_switch = momentum_switch
        self.weight_decay = weight_decay
        self.batch_size = batch_size
        self.pretrain_epochs = pretrain_epochs
        self.finetune_epochs = finetune_epochs
        self.patience = patience
        self.random_state = random_state

    def _momentum_at(self, epoch: int) -> float:
        return self.momentum if epoch < self.momentum_switch else self.momentum_late

    def _batches(self, n: int, rng: np.random.Generator):
        perm = rng.permutation(n)
        for start in range(0, n, self.batch_size):
            yield perm[start: start + self.batch_size]

    def pretrain(self, X) -> "DeepBeliefNetwork":
        """Greedy layer-wise CD-1: each RBM trains on the previous layer's
        deterministic hidden probabilities."""
        X = as_unit_matrix(X)
        if len(X) == 0:
            raise ValueError("pretrain needs a nonempty training set")
        self._rng_ = np.random.default_rng(self.random_state)
        self.n_features_in_ = X.shape[1]
        self.rbms_ = []
        layer_input = X
        n_vis = X.shape[1]
        for li, n_hid in enumerate(self.hidden_units):
            rbm = Rbm(n_vis, int(n_hid), self._rng_)
            for epoch in range(self.pretrain_epochs):
                m = self._momentum_at(epoch)
                for idx in self._batches(len(layer_input), self._rng_):
                    rbm.cd_update(
                        layer_input[idx], self.learning_rate, m, self.weight_decay, self._rng_
                    )
            logger.info(
                "pretrained RBM layer %d (%d->%d), reconstruction CE %.4f",
                li + 1, n_vis, n_hid, rbm.reconstruction_cross_entropy(layer_input),
            )
            self.rbms_.append(rbm)
            layer_input = rbm.hidden_probs(layer_input)
            n_vis = int(n_hid)
        # placeholder head (uniform posteriors) until finetune replaces it;
        # keeps pretrain-only models persistable
        self.head_W_ = np.zeros((self.n_classes, n_vis))
        self.head_b_ = np.zeros(self.n_classes)
        self.classes_ = np.arange(self.n_classes)
        return self

    def _params(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return [(rbm.W, rbm.b_hid) for rbm in self.rbms_] + [(self.head_W_, self.head_b_)]

    def finetune(self, X, y, validation_data=None) -> "DeepBeliefNetwork":
        """Backprop through head and both layers under mean cross-entropy.

        Early-stops when the monitored cross-entropy (validation if given,
        else training) fails to improve for ``patience`` consecutive epochs;
        the best-scoring parameters are restored.
        """
        if not hasattr(self, "rbms_"):
            raise ValueError("finetune requires a pretrained model; call pretrain first")
        X = as_unit_matrix(X, self.n_features_in_)
        y = as_labels(y, len(X))
        if validation_data is not None:
            X_val = as_unit_matrix(validation_data[0], self.n_features_in_)
            y_val = as_labels(validation_data[1], len(X_val))
        rng = self._rng_
        self.head_W_ = rng.normal(0.0, INIT_STD, size=(self.n_classes, self.hidden_units[-1]))
        self.head_b_ = np.zeros(self.n_classes)

        params = self._params()
        vel = [(np.zeros_like(W), np.zeros_like(b)) for W, b in params]
        best_monitor = np.inf
        best_params = [(W.copy(), b.copy()) for W, b in params]
        stale = 0
        for epoch in range(self.finetune_epochs):
            m = self._momentum_at(epoch)
            for idx in self._batches(len(X), rng):
                grads = mlp_gradients(params, X[idx], y[idx])
                for (W, b), (gW, gb), (vW, vb) in zip(params, grads, vel):
                    vW *= m
                    vW += self.learning_rate * (gW + self.weight_decay * W)
                    W -= vW
                    vb *= m
                    vb += self.learning_rate * gb
                    b -= vb
                _check_finite([p for pair in params for p in pair], "fine-tune update")
            if validation_data is not None:
                monitor = mlp_loss(params, X_val, y_val)
            else:
                monitor = mlp_loss(params, X, y)
            if monitor < best_monitor:
                best_monitor = monitor
                best_params = [(W.copy(), b.copy()) for W, b in params]
                stale = 0
            else:
                stale += 1
                if stale >= self.patience:
                    logger.info("fine-tune early stop at epoch %d (best CE %.4f)", epoch, best_monitor)
                    break
        for (W, b), (bW, bb) in zip(params, best_params):
            W[...] = bW
            b[...] = bb
        self.classes_ = np.arange(self.n_classes)
        return self

    def fit(self, X, y, validation_data=None) -> "DeepBeliefNetwork":
        self.pretrain(X)
        return self.finetune(X, y, validation_data=validation_data)

    def transform(self, X, pre_softmax: bool = False) -> np.ndarray:
        """Stage posteriors (n, 5); ``pre_softmax`` returns raw head logits."""
        check_is_fitted(self, "head_W_")
        X = as_unit_matrix(X, self.n_features_in_)
        _, logits = mlp_forward(self._params(), X)
        return logits if pre_softmax else softmax(logits)

    def predict_proba(self, X) -> np.ndarray:
        return self.transform(X)

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.transform(X), axis=1)
