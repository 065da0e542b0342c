"""Experiment configuration: a strict sectioned key-value file.

The format is INI-style: `[section]` headers over `key = value` lines
(`#` comments allowed).  Every key has a typed default below; unknown
sections or keys are hard errors, since a silently ignored hyperparameter
typo is the main reproducibility hazard.  CLI flags mirror keys as
`--section.key value` and override the file.  The only environment
override is EAUCAL_OUTPUT_DIR for the output directory.
"""

from __future__ import annotations

import configparser
import dataclasses
import os
from dataclasses import dataclass
from pathlib import Path

from .eau import EaucConfig
from .metrics import EvalConfig


@dataclass(frozen=True)
class ExperimentSection:
    task: str = "trajectory"
    seed: int = 0
    output_dir: str = "runs"

    def __post_init__(self):
        if self.task not in ("trajectory", "regression"):
            raise ValueError(f"experiment.task must be trajectory or regression, got {self.task!r}")


@dataclass(frozen=True)
class DataSection:
    path: str = ""
    target_column: str = ""
    split_seed: int = 0
    train_ratio: float = 0.8
    val_ratio: float = 0.1
    test_ratio: float = 0.1

    def __post_init__(self):
        total = self.train_ratio + self.val_ratio + self.test_ratio
        if abs(total - 1.0) > 1e-9:
            raise ValueError("data ratios must sum to 1")


@dataclass(frozen=True)
class SynthSection:
    n_scenes: int = 2000
    n_shifted: int = 400
    context_steps: int = 5
    horizon_steps: int = 25
    timestep: float = 0.2
    p_cv: float = 0.6
    p_turn: float = 0.25
    p_stop: float = 0.15
    noise_scale: float = 0.05
    shift_p_cv: float = 0.2
    shift_p_turn: float = 0.4
    shift_p_stop: float = 0.4
    shift_noise_scale: float = 0.15
    seed: int = 0


@dataclass(frozen=True)
class ModelSection:
    hidden: int = 64
    dropout: float = 0.5        # regression only
    mc_train_samples: int = 5   # regression only


@dataclass(frozen=True)
class OptimizerSection:
    algorithm: str = "adamw"
    lr: float = 1e-4
    epochs: int = 100
    batch_size: int = 64
    warmup_epochs: int = 1
    clip_norm: float = 1.0
    weight_decay: float = 0.01
    schedule: str = "cosine"

    def __post_init__(self):
        if self.algorithm not in ("adamw", "sgd"):
            raise ValueError(f"optimizer.algorithm must be adamw or sgd, got {self.algorithm!r}")
        if self.schedule not in ("cosine", "constant"):
            raise ValueError(f"optimizer.schedule must be cosine or constant, got {self.schedule!r}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("optimizer.epochs and batch_size must be >= 1")


@dataclass(frozen=True)
class CalibrationSection:
    ade_th: float = 0.8
    c_th: float = 0.6
    beta: float = 200.0
    gamma: float = 3.0
    epsilon: float = 1e-8
    ade_scale: float = 0.5
    c_clip_lo: float = 0.0
    c_clip_hi: float = 100.0
    var_clip_lo: float = 0.0
    var_clip_hi: float = 1.0
    start_epoch: int = 0  # first epoch (0-based) with the calibration loss active

    def eauc_config(self):
        return EaucConfig(self.ade_th, self.c_th, self.beta, self.gamma, self.epsilon,
                          self.ade_scale, self.c_clip_lo, self.c_clip_hi,
                          self.var_clip_lo, self.var_clip_hi)


@dataclass(frozen=True)
class EvaluationSection:
    accuracy_threshold: float = 1.6
    retention_grid: int = 101
    samples_g: int = 10
    top_d: int = 5
    ensemble_k: int = 1
    mc_eval_samples: int = 20

    def eval_config(self):
        return EvalConfig(self.accuracy_threshold, self.retention_grid)

    def __post_init__(self):
        if self.top_d > self.samples_g:
            raise ValueError("evaluation.top_d cannot exceed evaluation.samples_g")


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: ExperimentSection = ExperimentSection()
    data: DataSection = DataSection()
    synth: SynthSection = SynthSection()
    model: ModelSection = ModelSection()
    optimizer: OptimizerSection = OptimizerSection()
    calibration: CalibrationSection = CalibrationSection()
    evaluation: EvaluationSection = EvaluationSection()


SCHEMA = {
    "experiment": ExperimentSection,
    "data": DataSection,
    "synth": SynthSection,
    "model": ModelSection,
    "optimizer": OptimizerSection,
    "calibration": CalibrationSection,
    "evaluation": EvaluationSection,
}


def iter_schema():
    """Yield (section, key, type, default) for every config key."""
    for section, cls in SCHEMA.items():
        for f in dataclasses.fields(cls):
            yield section, f.name, f.type, f.default


def _coerce(section, key, ftype, raw):
    raw = raw.strip()
    try:
        if ftype in (int, "int"):
            return int(raw)
        if ftype in (float, "float"):
            return float(raw)
        if ftype in (bool, "bool"):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return raw
    except ValueError:
        raise ValueError(f"config {section}.{key}: cannot parse {raw!r} as {ftype}") from None


def _field_types(cls):
    hints = {}
    for f in dataclasses.fields(cls):
        hints[f.name] = type(f.default)
    return hints


def load_config(path=None, overrides=()):
    """Build an ExperimentConfig from an optional file plus overrides.

    `overrides` are ("section.key", "value") pairs, applied after the file.
    Unknown sections/keys and malformed values raise ValueError.
    """
    raw = {name: {} for name in SCHEMA}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ValueError(f"config file not found: {path}")
        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
        with path.open() as fh:
            parser.read_file(fh)
        for section in parser.sections():
            if section not in SCHEMA:
                raise ValueError(f"config {path}: unknown section [{section}] "
                                 f"(known: {', '.join(SCHEMA)})")
            types = _field_types(SCHEMA[section])
            for key, value in parser.items(section):
                if key not in types:
                    raise ValueError(f"config {path}: unknown key {section}.{key} "
                                     f"(known: {', '.join(types)})")
                raw[section][key] = _coerce(section, key, types[key], value)
    for dotted, value in overrides:
        section, _, key = dotted.partition(".")
        if section not in SCHEMA:
            raise ValueError(f"override: unknown section {section!r}")
        types = _field_types(SCHEMA[section])
        if key not in types:
            raise ValueError(f"override: unknown key {section}.{key}")
        raw[section][key] = _coerce(section, key, types[key], str(value))

    env_out = os.environ.get("EAUCAL_OUTPUT_DIR")
    if env_out:
        raw["experiment"]["output_dir"] = env_out

    sections = {name: cls(**raw[name]) for name, cls in SCHEMA.items()}
    return ExperimentConfig(**sections)


def require_data_path(config):
    """Error unless data.path is set and exists (train/evaluate preflight)."""
    if not config.data.path:
        raise ValueError("data.path is required for this command")
    if not Path(config.data.path).exists():
        raise ValueError(f"data file not found: {config.data.path}")


def dump_config(config):
    """Render the effective config back to file syntax (for run provenance)."""
    lines = []
    for section, cls in SCHEMA.items():
        lines.append(f"[{section}]")
        values = getattr(config, section)
        for f in dataclasses.fields(cls):
            value = getattr(values, f.name)
            lines.append(f"{f.name} = {value!r}" if isinstance(value, float)
                         else f"{f.name} = {value}")
        lines.append("")
    return "\n".join(lines)
