"""Line-oriented ``key = value`` run configuration with typed defaults.

Sections are dotted key prefixes (data/run/synth/dbn/lstm/hmm). Precedence:
command-line overrides beat the config file, which beats the defaults below.
Unknown keys and unparsable values are errors that name the key (and line,
when it came from a file). The fully resolved configuration is echoed to
``<out>/resolved.cfg`` in a canonical re-parseable form, so identical echo
files imply identical runs.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from .experiment import MODELS, ExperimentConfig


class ConfigError(ValueError):
    """Unknown key or unparsable value; the message names the offender."""


def _parse_int(text: str) -> int:
    return int(text)


def _parse_float(text: str) -> float:
    return float(text)


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "1", "yes", "on"):
        return True
    if t in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"expected true/false, got {text!r}")


def _parse_int_list(text: str) -> tuple[int, ...]:
    items = tuple(int(t.strip()) for t in text.split(",") if t.strip())
    if not items:
        raise ValueError("empty list")
    return items


def _choice(*options: str) -> Callable[[str], str]:
    def parse(text: str) -> str:
        t = text.strip()
        if t not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {text!r}")
        return t
    return parse


def _parse_models(text: str) -> tuple[str, ...]:
    items = tuple(t.strip() for t in text.split(",") if t.strip())
    unknown = set(items) - set(MODELS)
    if not items or unknown:
        raise ValueError(f"models must be a comma list from {{{','.join(MODELS)}}}, got {text!r}")
    return items


@dataclass(frozen=True)
class _Key:
    default: object
    parse: Callable[[str], object]
    doc: str


REGISTRY: dict[str, _Key] = {
    "data.sample_rate": _Key(100.0, _parse_float, "sample rate of recording CSVs (Hz)"),
    "data.epoch_len": _Key(30.0, _parse_float, "scoring epoch length (s)"),
    "run.seed": _Key(0, _parse_int, "master seed; all randomness derives from it"),
    "run.jobs": _Key(1, _parse_int, "fold-level worker processes (1 = inline)"),
    "run.models": _Key(MODELS, _parse_models, "models to evaluate"),
    "run.seq": _Key((5,), _parse_int_list, "window lengths swept by loocv/train"),
    "run.reps": _Key(1, _parse_int, "repeated measurements per fold"),
    "run.transition_removal": _Key(True, _parse_bool, "drop model-building epochs at stage switches"),
    "run.removal_margin": _Key(1, _parse_int, "epochs dropped on each side of a switch"),
    "run.f1": _Key("macro", _choice("macro", "weighted"), "F-score averaging"),
    "run.lstm_input": _Key("posterior", _choice("posterior", "logit"),
                           "belief-network output fed to the sequence model"),
    "synth.recordings": _Key(5, _parse_int, "synthetic recordings to generate"),
    "synth.epochs": _Key(800, _parse_int, "epochs per synthetic recording"),
    "dbn.hidden": _Key((200, 200), _parse_int_list,
                       "hidden layer sizes; a single value applies to both layers"),
    "dbn.lr": _Key(0.05, _parse_float, "learning rate for CD and fine-tune"),
    "dbn.momentum": _Key(0.5, _parse_float, "momentum for the first epochs"),
    "dbn.momentum_late": _Key(0.9, _parse_float, "momentum after the switch epoch"),
    "dbn.momentum_switch": _Key(5, _parse_int, "epoch at which momentum switches"),
    "dbn.weight_decay": _Key(2e-4, _parse_float, "L2 decay on weight matrices"),
    "dbn.batch": _Key(1000, _parse_int, "mini-batch size (CD and fine-tune)"),
    "dbn.pretrain_epochs": _Key(50, _parse_int, "CD epochs per layer"),
    "dbn.finetune_epochs": _Key(200, _parse_int, "max supervised epochs"),
    "dbn.patience": _Key(10, _parse_int, "early-stop patience on validation CE"),
    "lstm.hidden": _Key((128, 64, 32), _parse_int_list, "stacked layer sizes"),
    "lstm.seq_len": _Key(5, _parse_int, "window length for single-model train"),
    "lstm.epochs": _Key(100, _parse_int, "training epochs"),
    "lstm.batch": _Key(500, _parse_int, "mini-batch size"),
    "lstm.lr": _Key(0.001, _parse_float, "RMSProp learning rate"),
    "lstm.rho": _Key(0.9, _parse_float, "RMSProp decay"),
    "lstm.eps": _Key(1e-8, _parse_float, "RMSProp epsilon"),
    "hmm.alpha": _Key(1.0, _parse_float, "Laplace smoothing for transition counts"),
    "hmm.emissions": _Key("scaled", _choice("scaled", "raw"),
                          "posterior scoring: divide by class priors, or raw"),
}


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


class RunConfig:
    """Resolved configuration: a validated mapping over the key registry."""

    def __init__(self, values: dict):
        self.values = values

    def __getitem__(self, key: str):
        return self.values[key]

    def resolved_text(self) -> str:
        """Canonical echo: every key, sorted, in re-parseable form."""
        return "".join(f"{k} = {_format_value(self.values[k])}\n" for k in sorted(self.values))

    def write_resolved(self, out_dir) -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / "resolved.cfg"
        path.write_text(self.resolved_text())
        return path

    def dbn_params(self) -> dict:
        hidden = self.values["dbn.hidden"]
        if len(hidden) == 1:
            hidden = hidden * 2
        return {
            "hidden_units": hidden,
            "learning_rate": self.values["dbn.lr"],
            "momentum": self.values["dbn.momentum"],
            "momentum_late": self.values["dbn.momentum_late"],
            "momentum_switch": self.values["dbn.momentum_switch"],
            "weight_decay": self.values["dbn.weight_decay"],
            "batch_size": self.values["dbn.batch"],
            "pretrain_epochs": self.values["dbn.pretrain_epochs"],
            "finetune_epochs": self.values["dbn.finetune_epochs"],
            "patience": self.values["dbn.patience"],
        }

    def lstm_params(self) -> dict:
        return {
            "hidden_units": self.values["lstm.hidden"],
            "epochs": self.values["lstm.epochs"],
            "batch_size": self.values["lstm.batch"],
            "learning_rate": self.values["lstm.lr"],
            "rho": self.values["lstm.rho"],
            "eps": self.values["lstm.eps"],
        }

    def hmm_params(self) -> dict:
        return {"alpha": self.values["hmm.alpha"], "emissions": self.values["hmm.emissions"]}

    def experiment_config(self, out_dir=None) -> ExperimentConfig:
        return ExperimentConfig(
            models=self.values["run.models"],
            seq_lens=self.values["run.seq"],
            reps=self.values["run.reps"],
            transition_removal=self.values["run.transition_removal"],
            removal_margin=self.values["run.removal_margin"],
            seed=self.values["run.seed"],
            f1_average=self.values["run.f1"],
            jobs=self.values["run.jobs"],
            lstm_input=self.values["run.lstm_input"],
            dbn_params=self.dbn_params(),
            lstm_params=self.lstm_params(),
            hmm_params=self.hmm_params(),
            out_dir=Path(out_dir) if out_dir is not None else None,
        )


def _set(values: dict, key: str, raw: str, where: str) -> None:
    if key not in REGISTRY:
        raise ConfigError(f"{where}: unknown key {key!r}")
    try:
        values[key] = REGISTRY[key].parse(raw)
    except ValueError as exc:
        raise ConfigError(f"{where}: bad value for {key!r}: {exc}") from None


def parse_config(path=None, overrides: list[tuple[str, str]] | None = None) -> RunConfig:
    """Defaults, then the config file (if given), then flag overrides."""
    values = {k: spec.default for k, spec in REGISTRY.items()}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        for lineno, line in enumerate(path.read_text().splitlines(), start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path.name} line {lineno}: expected 'key = value'")
            key, _, raw = stripped.partition("=")
            _set(values, key.strip(), raw.strip(), f"{path.name} line {lineno}")
    for key, raw in overrides or []:
        _set(values, key, raw, f"flag --{key}")
    return RunConfig(values)
