"""Run configuration files: line-oriented `key = value` text.

Blank lines and lines starting with # are ignored. Every other line must
set a known key; unknown keys, duplicate keys, unreadable values and
out-of-range values are rejected with the offending line number, so a
typo never silently falls back to a default.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .data import ORACLE_KINDS
from .trainer import TrainingConfig, VARIANTS


class ConfigError(ValueError):
    """A run config file is missing, malformed or out of range."""


@dataclass
class RunConfig:
    """A parsed run file: training hyperparameters plus data and output."""

    train: TrainingConfig
    output_dir: str = "runs"
    data_x: str | None = None
    data_y: str | None = None
    synthetic: str | None = None
    synthetic_count: int = 64
    eval_count: int = 16
    checkpoint: str | None = None
    workers: int = 1


# key -> (coercion, requirement text, predicate, help text)
_SCHEMA = {
    "lam": ("float", "must be >= 0", lambda v: v >= 0,
            "cycle reconstruction weight"),
    "lam_idt": ("float", "must be >= 0", lambda v: v >= 0,
                "identity term weight, as a multiple of lam; 0 disables"),
    "lr0": ("float", "must be > 0", lambda v: v > 0,
            "initial learning rate"),
    "epochs_constant": ("int", "must be >= 0", lambda v: v >= 0,
                        "epochs at the initial learning rate"),
    "epochs_decay": ("int", "must be >= 0", lambda v: v >= 0,
                     "epochs over which the rate ramps linearly to zero"),
    "buffer_capacity": ("int", "must be >= 0", lambda v: v >= 0,
                        "history pool size per discriminator; 0 disables"),
    "adam_beta1": ("float", "must be in [0, 1)", lambda v: 0 <= v < 1,
                   "Adam first-moment decay"),
    "adam_beta2": ("float", "must be in [0, 1)", lambda v: 0 <= v < 1,
                   "Adam second-moment decay"),
    "adam_eps": ("float", "must be > 0", lambda v: v > 0,
                 "Adam denominator floor"),
    "seed": ("int", "must be >= 0", lambda v: v >= 0,
             "master seed; every stochastic choice derives from it"),
    "variant": ("str", f"must be one of {', '.join(VARIANTS)}", lambda v: v in VARIANTS,
                "which objective terms are active"),
    "resolution": ("int", "must be a positive multiple of 4", lambda v: v >= 4 and v % 4 == 0,
                   "square image side in pixels"),
    "residual_blocks": ("optint", "must be >= 0 or none", lambda v: v is None or v >= 0,
                        "generator depth override; none picks by resolution"),
    "gen_filters": ("int", "must be >= 1", lambda v: v >= 1,
                    "generator first-layer width"),
    "disc_filters": ("int", "must be >= 1", lambda v: v >= 1,
                     "discriminator first-layer width"),
    "checkpoint_every": ("int", "must be >= 0", lambda v: v >= 0,
                         "epochs between checkpoints; 0 means final only"),
    "output_dir": ("str", None, None,
                   "directory for checkpoints, CSVs and reports"),
    "data_x": ("str", None, None,
               "directory of domain-X images (with data_y)"),
    "data_y": ("str", None, None,
               "directory of domain-Y images (with data_x)"),
    "synthetic": ("str", f"must be one of {', '.join(ORACLE_KINDS)}", lambda v: v in ORACLE_KINDS,
                  "generate paired synthetic domains with this ground-truth map"),
    "synthetic_count": ("int", "must be >= 1", lambda v: v >= 1,
                        "training images per synthetic domain"),
    "eval_count": ("int", "must be >= 1", lambda v: v >= 1,
                   "held-out images per synthetic domain"),
    "checkpoint": ("str", None, None,
                   "checkpoint file to start from (resume or eval)"),
    "workers": ("int", "must be >= 1", lambda v: v >= 1,
                "concurrent variant runs during ablation"),
}

_TRAIN_FIELDS = {f.name for f in dataclasses.fields(TrainingConfig)}

_KIND_NOUN = {"int": "an integer", "float": "a number", "optint": "an integer or none", "str": "text"}


def describe_keys() -> str:
    """One line per config key with its default, for --help output."""
    defaults = dataclasses.asdict(TrainingConfig())
    run_defaults = {f.name: f.default for f in dataclasses.fields(RunConfig) if f.name != "train"}
    lines = []
    for key, (_, _, _, doc) in _SCHEMA.items():
        if key in defaults:
            d = defaults[key]
        else:
            d = run_defaults[key]
        shown = "none" if d is None else d
        lines.append(f"  {key} = {shown}".ljust(30) + f" {doc}")
    return "\n".join(lines)


def parse_run_config(path) -> RunConfig:
    """Read and validate one run file; raises ConfigError with the line
    number of the first offending entry."""
    try:
        with open(path, encoding="utf-8") as f:
            lines = f.read().splitlines()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None

    seen: dict[str, int] = {}
    values: dict = {}
    for i, raw_line in enumerate(lines, start=1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, raw = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{i}: expected 'key = value', got {line!r}")
        key, raw = key.strip(), raw.strip()
        if key not in _SCHEMA:
            raise ConfigError(f"{path}:{i}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"{path}:{i}: duplicate key {key!r} (first set on line {seen[key]})")
        seen[key] = i
        kind, requirement, ok, _ = _SCHEMA[key]
        try:
            if kind == "int":
                v = int(raw)
            elif kind == "float":
                v = float(raw)
            elif kind == "optint":
                v = None if raw.lower() == "none" else int(raw)
            else:
                v = raw
        except ValueError:
            raise ConfigError(f"{path}:{i}: {key} expects {_KIND_NOUN[kind]}, got {raw!r}") from None
        if ok is not None and not ok(v):
            raise ConfigError(f"{path}:{i}: {key} {requirement}, got {raw}")
        values[key] = v

    has_dirs = "data_x" in values or "data_y" in values
    if "synthetic" in values and has_dirs:
        raise ConfigError(f"{path}: synthetic and data_x/data_y are mutually exclusive")
    if ("data_x" in values) != ("data_y" in values):
        raise ConfigError(f"{path}: data_x and data_y must be given together")
    if "synthetic" not in values and not has_dirs:
        raise ConfigError(f"{path}: provide either synthetic = <kind> or data_x and data_y")

    train_kw = {k: values.pop(k) for k in list(values) if k in _TRAIN_FIELDS}
    try:
        train = TrainingConfig(**train_kw)
    except ValueError as e:
        raise ConfigError(f"{path}: {e}") from None
    return RunConfig(train=train, **values)
