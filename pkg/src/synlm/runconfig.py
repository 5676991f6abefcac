"""Experiment configuration: sectioned key=value files plus CLI overrides.

Keys are unique across sections, so a command-line `--key value` override
needs no section prefix. The resolved configuration echoes back as a complete
config file that parses to the same values.
"""

from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, field, fields

from synlm.model import ModelConfig
from synlm.optim import TrainSchedule


class ConfigError(ValueError):
    pass


SECTIONS = {
    "model": ["n_layers", "d_model", "n_heads", "d_ff", "vocab_size", "max_len",
              "dist_classes", "alpha_init", "activation", "dropout", "ln_eps",
              "syntax_bias", "per_layer_alpha", "dtype"],
    "tasks": ["enable_syntax_layer", "enable_alpha", "enable_dp", "enable_hp",
              "mlm_rate", "dp_rate", "dp_mask_policy"],
    "distance": ["distance_mode", "intra_word_edges"],
    "schedule": ["total_steps", "warmup_steps", "peak_lr", "batch_size", "seed",
                 "checkpoint_every"],
    "finetune": ["ft_lr", "ft_epochs", "ft_batch_size", "ft_classes", "freeze_alpha"],
    "paths": ["conllu_path", "vocab_path", "corpus_path", "checkpoint_path",
              "task_path", "dev_task_path", "out_dir"],
    "run": ["sentence_id", "workers", "vocab_target", "gradcheck_samples",
            "gradcheck_epsilon", "gradcheck_threshold"],
}


@dataclass
class RunConfig:
    # model
    n_layers: int = 4
    d_model: int = 128
    n_heads: int = 4
    d_ff: int = 512
    vocab_size: int = 1024
    max_len: int = 128
    dist_classes: int = 16
    alpha_init: float = 0.1
    activation: str = "gelu"
    dropout: float = 0.1
    ln_eps: float = 1e-12
    syntax_bias: bool = True
    per_layer_alpha: bool = False
    dtype: str = "float64"
    # tasks
    enable_syntax_layer: bool = True
    enable_alpha: bool = True
    enable_dp: bool = True
    enable_hp: bool = True
    mlm_rate: float = 0.15
    dp_rate: float = 0.15
    dp_mask_policy: str = "as_distance_one"
    # distance
    distance_mode: str = "directed"
    intra_word_edges: bool = True
    # schedule
    total_steps: int = 2000
    warmup_steps: int = 120
    peak_lr: float = 3e-4
    batch_size: int = 16
    seed: int = 42
    checkpoint_every: int = 500
    # finetune
    ft_lr: float = 1e-4
    ft_epochs: int = 5
    ft_batch_size: int = 16
    ft_classes: int = 4
    freeze_alpha: bool = False
    # paths
    conllu_path: str = ""
    vocab_path: str = ""
    corpus_path: str = ""
    checkpoint_path: str = ""
    task_path: str = ""
    dev_task_path: str = ""
    out_dir: str = ""
    # run
    sentence_id: str = ""
    workers: int = 1
    vocab_target: int = 1024
    gradcheck_samples: int = 500
    gradcheck_epsilon: float = 2e-4
    gradcheck_threshold: float = 1e-4

    def validate(self) -> "RunConfig":
        if self.enable_alpha and not self.enable_syntax_layer:
            raise ConfigError("enable_alpha requires enable_syntax_layer")
        if self.distance_mode not in ("directed", "undirected"):
            raise ConfigError(f"distance_mode must be directed|undirected, "
                              f"got {self.distance_mode!r}")
        if self.dp_mask_policy not in ("as_distance_one", "drop"):
            raise ConfigError(f"dp_mask_policy must be as_distance_one|drop, "
                              f"got {self.dp_mask_policy!r}")
        for key in ("mlm_rate", "dp_rate"):
            if not 0.0 < getattr(self, key) < 1.0:
                raise ConfigError(f"{key} must be in (0, 1)")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        try:
            self.model_config()
            self.schedule()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return self

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            n_layers=self.n_layers, d_model=self.d_model, n_heads=self.n_heads,
            d_ff=self.d_ff, vocab_size=self.vocab_size, max_len=self.max_len,
            dist_classes=self.dist_classes, alpha_init=self.alpha_init,
            alpha_enabled=self.enable_alpha, syntax_enabled=self.enable_syntax_layer,
            per_layer_alpha=self.per_layer_alpha, syntax_bias=self.syntax_bias,
            activation=self.activation, dropout=self.dropout, ln_eps=self.ln_eps,
            dtype=self.dtype,
        )

    def schedule(self) -> TrainSchedule:
        return TrainSchedule(total_steps=self.total_steps,
                             warmup_steps=self.warmup_steps,
                             peak_lr=self.peak_lr, batch_size=self.batch_size,
                             seed=self.seed)

    def to_text(self) -> str:
        out = io.StringIO()
        for section, keys in SECTIONS.items():
            out.write(f"[{section}]\n")
            for key in keys:
                out.write(f"{key} = {getattr(self, key)}\n")
            out.write("\n")
        return out.getvalue()

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:8]


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, value: str):
    kind = _FIELD_TYPES[key]
    value = value.strip()
    if kind == "bool":
        if value in ("True", "true", "1", "yes", "on"):
            return True
        if value in ("False", "false", "0", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {value!r}")
    try:
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
    except ValueError:
        raise ConfigError(f"{key}: expected {kind}, got {value!r}") from None
    return value


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"bad config syntax: {exc}") from None
    cfg = RunConfig()
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        for key, value in parser.items(section):
            if key not in SECTIONS[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            setattr(cfg, key, _coerce(key, value))
    return cfg


def load_config(path: str | None, overrides: dict[str, str]) -> RunConfig:
    """File values (when a path is given) updated by --key value overrides."""
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                cfg = parse_config(fh.read())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
    else:
        cfg = RunConfig()
    for key, value in overrides.items():
        if key not in _FIELD_TYPES:
            raise KeyError(key)
        setattr(cfg, key, _coerce(key, value))
    return cfg.validate()
