"""Versioned plain-text model persistence.

Every file starts with a header line naming the format, its version, and the
shape, followed by whitespace-separated parameter blocks in a fixed order,
one matrix row per line, printed with 17 significant digits so float64
values round-trip exactly.

Formats:
  ``dbn v1 <n_vis> <h1> ... <n_out>``    per RBM: W, b_vis, b_hid; then head W, b
  ``lstm v1 <in> <h1> <h2> <h3> <n_cls> <seq_len>``  per layer: Wx, Wh, b
                                         (gate rows ordered input/forget/cell/output);
                                         then head W, b
  ``hmm v1 <n_states>``                  pi, transition rows, class priors
  ``scaler v1 <n_features>``             low bounds, high bounds
"""

from __future__ import annotations

import numpy as np

from .dbn import DeepBeliefNetwork, Rbm
from .features import RobustRangeScaler
from .hmm import SleepHmm
from .lstm import LstmLayer, StackedLstmClassifier

FORMAT_VERSIONS = {"dbn": 1, "lstm": 1, "hmm": 1, "scaler": 1}
_FMT = "%.17g"


class PersistenceError(ValueError):
    """Malformed or mismatched model file."""


def _write_block(fh, arr: np.ndarray) -> None:
    arr = np.atleast_2d(arr)
    for row in arr:
        fh.write(" ".join(_FMT % v for v in row) + "\n")


class _TokenReader:
    """Sequential float reader over the post-header body of a model file."""

    def __init__(self, text: str, path):
        self.tokens = text.split()
        self.pos = 0
        self.path = path

    def take(self, shape) -> np.ndarray:
        n = int(np.prod(shape))
        if self.pos + n > len(self.tokens):
            raise PersistenceError(
                f"{self.path}: truncated file, needed {n} more values, "
                f"found {len(self.tokens) - self.pos}"
            )
        try:
            flat = np.array([float(t) for t in self.tokens[self.pos: self.pos + n]])
        except ValueError as exc:
            raise PersistenceError(f"{self.path}: non-numeric parameter value ({exc})") from None
        self.pos += n
        return flat.reshape(shape)

    def finish(self) -> None:
        if self.pos != len(self.tokens):
            raise PersistenceError(
                f"{self.path}: {len(self.tokens) - self.pos} unexpected trailing values"
            )


def _read_header(path, expected_kind: str) -> tuple[list[int], str]:
    with open(path) as fh:
        header = fh.readline().split()
        body = fh.read()
    if len(header) < 3 or header[0] != expected_kind:
        raise PersistenceError(f"{path}: not a {expected_kind!r} model file (header {header[:2]})")
    if header[1] != f"v{FORMAT_VERSIONS[expected_kind]}":
        raise PersistenceError(f"{path}: unsupported {expected_kind} format version {header[1]}")
    try:
        dims = [int(t) for t in header[2:]]
    except ValueError:
        raise PersistenceError(f"{path}: malformed header dimensions {header[2:]}") from None
    return dims, body


def save_dbn(model: DeepBeliefNetwork, path) -> None:
    dims = [model.n_features_in_, *(r.n_hidden for r in model.rbms_), model.n_classes]
    with open(path, "w") as fh:
        fh.write("dbn v1 " + " ".join(str(d) for d in dims) + "\n")
        for rbm in model.rbms_:
            _write_block(fh, rbm.W)
            _write_block(fh, rbm.b_vis)
            _write_block(fh, rbm.b_hid)
        _write_block(fh, model.head_W_)
        _write_block(fh, model.head_b_)


def load_dbn(path) -> DeepBeliefNetwork:
    dims, body = _read_header(path, "dbn")
    if len(dims) < 3:
        raise PersistenceError(f"{path}: dbn header needs at least 3 dimensions")
    reader = _TokenReader(body, path)
    hidden = tuple(dims[1:-1])
    model = DeepBeliefNetwork(hidden_units=hidden, n_classes=dims[-1])
    model.n_features_in_ = dims[0]
    model.rbms_ = []
    n_vis = dims[0]
    for n_hid in hidden:
        rbm = Rbm(n_vis, n_hid, np.random.default_rng(0))
        rbm.W = reader.take((n_hid, n_vis))
        rbm.b_vis = reader.take(n_vis)
        rbm.b_hid = reader.take(n_hid)
        model.rbms_.append(rbm)
        n_vis = n_hid
    model.head_W_ = reader.take((dims[-1], hidden[-1]))
    model.head_b_ = reader.take(dims[-1])
    reader.finish()
    model.classes_ = np.arange(dims[-1])
    return model


def save_lstm(model: StackedLstmClassifier, path) -> None:
    dims = [model.in_dim_, *(l.units for l in model.layers_), model.n_classes, model.seq_len]
    with open(path, "w") as fh:
        fh.write("lstm v1 " + " ".join(str(d) for d in dims) + "\n")
        for layer in model.layers_:
            _write_block(fh, layer.Wx)
            _write_block(fh, layer.Wh)
            _write_block(fh, layer.b)
        _write_block(fh, model.head_W_)
        _write_block(fh, model.head_b_)


def load_lstm(path) -> StackedLstmClassifier:
    dims, body = _read_header(path, "lstm")
    if len(dims) < 4:
        raise PersistenceError(f"{path}: lstm header needs in_dim, layer sizes, classes, seq_len")
    in_dim, hidden, n_classes, seq_len = dims[0], tuple(dims[1:-2]), dims[-2], dims[-1]
    reader = _TokenReader(body, path)
    model = StackedLstmClassifier(hidden_units=hidden, n_classes=n_classes, seq_len=seq_len)
    model.in_dim_ = in_dim
    model.layers_ = []
    d = in_dim
    for u in hidden:
        layer = LstmLayer(d, u)
        layer.Wx = reader.take((4 * u, d))
        layer.Wh = reader.take((4 * u, u))
        layer.b = reader.take(4 * u)
        model.layers_.append(layer)
        d = u
    model.head_W_ = reader.take((n_classes, d))
    model.head_b_ = reader.take(n_classes)
    reader.finish()
    model.classes_ = np.arange(n_classes)
    return model


def save_hmm(model: SleepHmm, path) -> None:
    n = len(model.pi_)
    with open(path, "w") as fh:
        fh.write(f"hmm v1 {n}\n")
        _write_block(fh, model.pi_)
        _write_block(fh, model.trans_)
        _write_block(fh, model.class_priors_)


def load_hmm(path) -> SleepHmm:
    dims, body = _read_header(path, "hmm")
    n = dims[0]
    reader = _TokenReader(body, path)
    model = SleepHmm()
    model.pi_ = reader.take(n)
    model.trans_ = reader.take((n, n))
    model.class_priors_ = reader.take(n)
    reader.finish()
    return model


def save_scaler(scaler: RobustRangeScaler, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"scaler v1 {scaler.n_features_in_}\n")
        _write_block(fh, scaler.low_)
        _write_block(fh, scaler.high_)


def load_scaler(path) -> RobustRangeScaler:
    dims, body = _read_header(path, "scaler")
    n = dims[0]
    reader = _TokenReader(body, path)
    scaler = RobustRangeScaler()
    scaler.n_features_in_ = n
    scaler.low_ = reader.take(n)
    scaler.high_ = reader.take(n)
    reader.finish()
    return scaler


def load_model(path):
    """Dispatch on a model file's header kind."""
    with open(path) as fh:
        kind = fh.readline().split()[:1]
    loaders = {"dbn": load_dbn, "lstm": load_lstm, "hmm": load_hmm, "scaler": load_scaler}
    if not kind or kind[0] not in loaders:
        raise PersistenceError(f"{path}: unknown model format {kind}")
    return loaders[kind[0]](path)
