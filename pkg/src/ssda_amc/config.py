"""Experiment configuration as flat ``key=value`` text.

Lines starting with ``#`` are comments. Unknown keys are rejected. Epoch
counts refer to the full-size dataset; ``scale`` shrinks dataset sizes and
layer widths and stretches the epoch counts so that a scaled run performs
about as many parameter updates as a full one.
"""

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .modelio import parse_kv
from .siggen import GenConfig
from .stack import FinetuneSettings, PretrainSettings, preset
from .whiten import DEFAULT_EPSILON


class ConfigFileError(ValueError):
    pass


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional_tuple(conv):
    def parse(text):
        text = str(text).strip()
        if text in ("", "default"):
            return None
        return tuple(conv(v) for v in text.replace(",", "/").split("/"))

    return parse


def _target(v):
    return None if v.strip() in ("-", "none") else float(v)


def parse_snr_grid(text):
    """``"20:-20:-2.5"`` (start:stop:step, stop included) or ``"20,10,0"``."""
    text = str(text).strip()
    if ":" in text:
        parts = [float(p) for p in text.split(":")]
        if len(parts) != 3 or parts[2] == 0:
            raise ValueError(f"bad SNR range {text!r}; use start:stop:step")
        start, stop, step = parts
        n = math.floor((stop - start) / step + 1e-9) + 1
        if n < 1:
            raise ValueError(f"empty SNR range {text!r}")
        return tuple(float(v) for v in np.round(start + step * np.arange(n), 10))
    return tuple(float(v) for v in text.split(","))


def format_snr_grid(grid):
    return ",".join(repr(float(v)) for v in grid)


@dataclass(frozen=True)
class ExperimentConfig:
    # dataset
    samples_per_symbol: int = 10
    samples_per_vector: int = 100
    train_vectors_per_mod: int = 10000
    test_vectors_total: int = 10000
    random_phase: bool = True
    timing_jitter: int = 20
    normalize_power: bool = True
    seed: int = 0
    scale: float = 1.0
    # whitening (relative to the mean covariance eigenvalue)
    whiten_epsilon: float = DEFAULT_EPSILON
    # architecture; the tuple fields override the preset when set
    arch: str = "D"
    hidden_sizes: tuple = None
    sparsity_targets: tuple = None
    corruption: tuple = None
    l2: float = None
    dropout: float = None
    width_floor: int = 128
    # pretraining
    pretrain_epochs: int = PretrainSettings.epochs
    pretrain_batch_size: int = PretrainSettings.batch_size
    pretrain_lr: float = PretrainSettings.lr
    adagrad_eps: float = PretrainSettings.eps
    sparsity_weight: float = PretrainSettings.sparsity_weight
    corruption_mode: str = PretrainSettings.corruption_mode
    # fine-tuning; the L2 coefficient is arch l2 * l2_unit (default 1 / training vectors)
    finetune_epochs: int = FinetuneSettings.epochs
    finetune_batch_size: int = FinetuneSettings.batch_size
    finetune_lr: float = FinetuneSettings.lr
    l2_unit: float = FinetuneSettings.l2_unit
    max_epoch_stretch: float = 10.0
    # evaluation
    snr: float = math.inf
    snr_grid: tuple = parse_snr_grid("20:-20:-2.5")
    noise_seed: int = 0
    # paths
    out: str = "."

    def gen_config(self):
        cfg = GenConfig(
            samples_per_symbol=self.samples_per_symbol,
            samples_per_vector=self.samples_per_vector,
            train_vectors_per_mod=self.train_vectors_per_mod,
            test_vectors_total=self.test_vectors_total,
            seed=self.seed,
            random_phase=self.random_phase,
            timing_jitter=self.timing_jitter,
            normalize_power=self.normalize_power,
        )
        if self.scale != 1.0:
            cfg = cfg.scaled(self.scale)
        return cfg.validate()

    def architecture(self):
        spec = preset(self.arch)
        if self.scale < 1.0:
            spec = spec.scaled(self.scale, self.width_floor)
        overrides = {
            k: getattr(self, k)
            for k in ("hidden_sizes", "sparsity_targets", "corruption", "l2", "dropout")
            if getattr(self, k) is not None
        }
        return dataclasses.replace(spec, **overrides) if overrides else spec

    def epoch_stretch(self):
        """Epoch multiplier that keeps the update count of a full-size run."""
        return min(1.0 / self.scale, self.max_epoch_stretch) if self.scale < 1.0 else 1.0

    def pretrain_settings(self):
        return PretrainSettings(
            epochs=max(1, round(self.pretrain_epochs * self.epoch_stretch())),
            batch_size=self.pretrain_batch_size,
            lr=self.pretrain_lr,
            eps=self.adagrad_eps,
            sparsity_weight=self.sparsity_weight,
            corruption_mode=self.corruption_mode,
        )

    def finetune_settings(self):
        return FinetuneSettings(
            epochs=max(1, round(self.finetune_epochs * self.epoch_stretch())),
            batch_size=self.finetune_batch_size,
            lr=self.finetune_lr,
            l2_unit=self.l2_unit,
        )

    def validate(self):
        if self.scale <= 0:
            raise ConfigFileError("scale must be positive")
        if self.whiten_epsilon <= 0:
            raise ConfigFileError("whiten_epsilon must be positive")
        if self.corruption_mode not in ("mask", "flip"):
            raise ConfigFileError("corruption_mode must be 'mask' or 'flip'")
        for key in ("pretrain_epochs", "finetune_epochs", "pretrain_batch_size", "finetune_batch_size"):
            if getattr(self, key) < 1:
                raise ConfigFileError(f"{key} must be >= 1")
        if not self.snr_grid:
            raise ConfigFileError("snr_grid is empty")
        try:
            self.gen_config()
            self.architecture()
        except (ValueError, KeyError) as exc:
            raise ConfigFileError(str(exc)) from exc
        return self

    def with_updates(self, values):
        """Copy with ``values`` (strings or typed) applied; unknown keys raise."""
        fields = {f.name: f for f in dataclasses.fields(self)}
        typed = {}
        for key, raw in values.items():
            if key not in fields:
                raise ConfigFileError(f"unknown config key {key!r}")
            try:
                typed[key] = _PARSERS[key](raw) if isinstance(raw, str) else raw
            except ValueError as exc:
                raise ConfigFileError(f"{key}: {exc}") from exc
        return dataclasses.replace(self, **typed)

    def to_items(self):
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.name == "snr_grid":
                out[f.name] = format_snr_grid(v)
            elif v is None:
                out[f.name] = "default"
            elif isinstance(v, tuple):
                out[f.name] = "/".join("-" if t is None else str(t) for t in v)
            elif isinstance(v, bool):
                out[f.name] = str(v).lower()
            else:
                out[f.name] = repr(v) if isinstance(v, float) else str(v)
        return out

    def dumps(self):
        return "".join(f"{k}={v}\n" for k, v in self.to_items().items())


def _opt(conv):
    def parse(text):
        return None if str(text).strip() in ("", "default") else conv(text)

    return parse


_PARSERS = {
    "samples_per_symbol": int,
    "samples_per_vector": int,
    "train_vectors_per_mod": int,
    "test_vectors_total": int,
    "random_phase": _bool,
    "timing_jitter": int,
    "normalize_power": _bool,
    "seed": int,
    "scale": float,
    "whiten_epsilon": float,
    "arch": str,
    "hidden_sizes": _optional_tuple(int),
    "sparsity_targets": _optional_tuple(_target),
    "corruption": _optional_tuple(float),
    "l2": _opt(float),
    "dropout": _opt(float),
    "width_floor": int,
    "pretrain_epochs": int,
    "pretrain_batch_size": int,
    "pretrain_lr": float,
    "adagrad_eps": float,
    "sparsity_weight": float,
    "corruption_mode": str,
    "finetune_epochs": int,
    "finetune_batch_size": int,
    "finetune_lr": float,
    "l2_unit": _opt(float),
    "max_epoch_stretch": float,
    "snr": float,
    "snr_grid": parse_snr_grid,
    "noise_seed": int,
    "out": str,
}


def parse_config_text(text, base=None):
    try:
        values = parse_kv(text)
    except ValueError as exc:
        raise ConfigFileError(str(exc)) from exc
    return (base or ExperimentConfig()).with_updates(values)


def load_config(path, base=None):
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read(), base)
