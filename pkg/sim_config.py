"""
Active learning simulator configuration: YAML loading, validation and hashing.

Defaults come from config.py. Every invalid field raises ConfigError whose
message starts with the dotted field path (for example training.step).
"""

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

import config
from errors import ConfigError

logger = logging.getLogger(__name__)

STRATEGIES = ("random", "hinge_ll", "llpp")
TARGETS = ("sin", "linear", "constant")


@dataclass(frozen=True)
class TaskConfig:
    input_dim: int = config.TASK_INPUT_DIM
    target: str = config.TASK_TARGET
    frequency: float = config.TASK_FREQUENCY
    slope: float = config.TASK_SLOPE
    constant: float = config.TASK_CONSTANT
    noise_low: float = config.TASK_NOISE_LOW
    noise_high: float = config.TASK_NOISE_HIGH
    noise_boundary: float = config.TASK_NOISE_BOUNDARY


@dataclass(frozen=True)
class ModelConfig:
    hidden: int = config.MODEL_HIDDEN
    init_scale: float = config.MODEL_INIT_SCALE


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = config.TRAIN_EPOCHS
    minibatch: int = config.TRAIN_MINIBATCH
    step: float = config.TRAIN_STEP
    loss_step: float = config.TRAIN_LOSS_STEP
    rank_weight: float = config.TRAIN_RANK_WEIGHT
    backflow: float = config.TRAIN_BACKFLOW
    hinge_margin: float = config.TRAIN_HINGE_MARGIN


@dataclass(frozen=True)
class SimConfig:
    seed: int = config.SIM_SEED
    strategies: tuple = tuple(config.SIM_STRATEGIES)
    cycles: int = config.SIM_CYCLES
    pool_size: int = config.SIM_POOL_SIZE
    holdout_size: int = config.SIM_HOLDOUT_SIZE
    init_labeled: int = config.SIM_INIT_LABELED
    batch: int = config.SIM_BATCH
    repeats: int = config.SIM_REPEATS
    task: TaskConfig = field(default_factory=TaskConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)


def _integer(path, value, minimum):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(path, f"expected an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(path, f"must be >= {minimum}, got {value}")
    return value


def _real(path, value, minimum=None, positive=False, maximum=None):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(path, f"must be finite, got {value}")
    if positive and value <= 0:
        raise ConfigError(path, f"must be > 0, got {value}")
    if minimum is not None and value < minimum:
        raise ConfigError(path, f"must be >= {minimum}, got {value}")
    if maximum is not None and value > maximum:
        raise ConfigError(path, f"must be <= {maximum}, got {value}")
    return value


def _choice(path, value, options):
    if value not in options:
        raise ConfigError(path, f"must be one of {', '.join(options)}, got {value!r}")
    return value


def _strategies(path, value):
    if isinstance(value, str) or not isinstance(value, (list, tuple)) or not value:
        raise ConfigError(path, "expected a non-empty list of strategy names")
    for index, name in enumerate(value):
        _choice(f"{path}[{index}]", name, STRATEGIES)
    if len(set(value)) != len(value):
        raise ConfigError(path, f"strategies must be unique, got {list(value)}")
    return tuple(value)


RULES = {
    "seed": lambda p, v: _integer(p, v, 0),
    "strategies": _strategies,
    "cycles": lambda p, v: _integer(p, v, 0),
    "pool_size": lambda p, v: _integer(p, v, 2),
    "holdout_size": lambda p, v: _integer(p, v, 1),
    "init_labeled": lambda p, v: _integer(p, v, 2),
    "batch": lambda p, v: _integer(p, v, 1),
    "repeats": lambda p, v: _integer(p, v, 1),
    "task.input_dim": lambda p, v: _integer(p, v, 1),
    "task.target": lambda p, v: _choice(p, v, TARGETS),
    "task.frequency": lambda p, v: _real(p, v),
    "task.slope": lambda p, v: _real(p, v),
    "task.constant": lambda p, v: _real(p, v),
    "task.noise_low": lambda p, v: _real(p, v, minimum=0.0),
    "task.noise_high": lambda p, v: _real(p, v, minimum=0.0),
    "task.noise_boundary": lambda p, v: _real(p, v),
    "model.hidden": lambda p, v: _integer(p, v, 1),
    "model.init_scale": lambda p, v: _real(p, v, positive=True),
    "training.epochs": lambda p, v: _integer(p, v, 0),
    "training.minibatch": lambda p, v: _integer(p, v, 2),
    "training.step": lambda p, v: _real(p, v, positive=True),
    "training.loss_step": lambda p, v: _real(p, v, positive=True),
    "training.rank_weight": lambda p, v: _real(p, v, minimum=0.0),
    "training.backflow": lambda p, v: _real(p, v, minimum=0.0, maximum=1.0),
    "training.hinge_margin": lambda p, v: _real(p, v, minimum=0.0),
}

SECTIONS = {"task": TaskConfig, "model": ModelConfig, "training": TrainingConfig}


def _parse_section(prefix, document, cls):
    if not isinstance(document, dict):
        raise ConfigError(prefix or "<root>", "expected a mapping")
    known = {f.name for f in fields(cls)}
    values = {}
    for key, value in document.items():
        path = f"{prefix}.{key}" if prefix else str(key)
        if key not in known:
            raise ConfigError(path, "unknown field")
        if key in SECTIONS and not prefix:
            values[key] = _parse_section(key, value, SECTIONS[key])
        else:
            values[key] = RULES[path](path, value)
    return cls(**values)


def parse_sim_config(document):
    """Build a SimConfig from a parsed YAML mapping; missing fields take defaults"""
    sim = _parse_section("", document if document is not None else {}, SimConfig)
    if sim.init_labeled > sim.pool_size:
        raise ConfigError("init_labeled", f"{sim.init_labeled} exceeds pool_size {sim.pool_size}")
    return sim


def load_sim_config(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError("config", f"cannot read {path}: {e}")
    try:
        document = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError("config", f"invalid YAML in {path}: {e}")
    sim = parse_sim_config(document)
    logger.info(f"Loaded simulator config from {path}")
    return sim


def config_to_dict(sim):
    document = asdict(sim)
    document["strategies"] = list(sim.strategies)
    return document


def config_hash(sim):
    """SHA-256 of the canonical JSON form of the resolved config"""
    canonical = json.dumps(config_to_dict(sim), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
