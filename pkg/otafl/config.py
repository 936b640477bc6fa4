"""
Experiment configuration.

Process-wide settings come from the environment (a .env file is loaded by the
entry point); experiment settings come from a `key = value` document parsed by
parse_config.
"""

import logging
import os
from dataclasses import dataclass, field, fields, replace
from typing import Callable, Dict, Optional, Tuple

from .beamforming import SCASettings
from .channel import RoundMode
from .errors import ConfigError
from .flsim.training import TrainingConfig
from .selection import SelectionMethod

LOGGER = logging.getLogger(__name__)

PROFILES = ("full", "desk")
DATASETS = ("synthetic", "mnist")

# Applied by `profile = desk` to every key the document does not set itself.
DESK_OVERRIDES = {"M": 20, "N": 8, "samples_per_device": 40, "T": 30}


def dbm_to_watts(dbm: float) -> float:
    """P[W] = 10^(dBm/10) * 1e-3."""
    return 10.0 ** (dbm / 10.0) * 1e-3


class EnvSettings:
    """Process settings read from environment variables."""

    def __init__(self):
        self.log_level = os.getenv("OTAFL_LOG_LEVEL", "INFO").upper()
        self.workers = int(os.getenv("OTAFL_WORKERS", "4"))
        self.output_dir = os.getenv("OTAFL_OUTPUT_DIR", "results")


def _env_sca(name: str):
    return lambda: getattr(SCASettings.from_env(), name)


@dataclass(frozen=True)
class ExperimentConfig:
    profile: str = "full"
    M: int = 200
    N: int = 16
    P0_dbm: float = 0.0
    noise_dbm: float = -20.0
    r_min_m: float = 10.0
    r_max_m: float = 100.0
    method: Tuple[SelectionMethod, ...] = tuple(SelectionMethod)
    T: int = 100
    lr: float = 0.05
    seeds: Tuple[int, ...] = (0,)
    dataset: str = "synthetic"
    samples_per_device: int = 270
    num_classes: int = 10
    feature_dim: int = 20
    cluster_separation: float = 1.0
    test_samples: int = 2000
    mnist_dir: str = ""
    batch_size: int = 0
    round_mode: RoundMode = RoundMode.STATIC
    sca_max_iters: int = field(default_factory=_env_sca("max_iters"))
    sca_objective_tol: float = field(default_factory=_env_sca("objective_tol"))
    sca_constraint_tol: float = field(default_factory=_env_sca("constraint_tol"))
    adsbf_eps: float = 1e-6
    adsbf_max_iters: int = 10
    output: str = ""
    csv_wall_time: bool = False

    @property
    def power_limit_w(self) -> float:
        return dbm_to_watts(self.P0_dbm)

    @property
    def noise_power_w(self) -> float:
        return dbm_to_watts(self.noise_dbm)

    def sca_settings(self) -> SCASettings:
        return SCASettings(self.sca_max_iters, self.sca_objective_tol, self.sca_constraint_tol)

    def training_config(self, method: SelectionMethod) -> TrainingConfig:
        return TrainingConfig(
            learning_rate=self.lr,
            rounds=self.T,
            batch_size=self.batch_size,
            method=method,
            round_mode=self.round_mode,
            sca=self.sca_settings(),
            adsbf_eps=self.adsbf_eps,
            adsbf_max_iters=self.adsbf_max_iters,
        )


# --- value codecs ---


def _parse_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_choice(choices):
    def parse(text: str) -> str:
        if text not in choices:
            raise ValueError(f"expected one of {', '.join(choices)}, got {text!r}")
        return text
    return parse


def _parse_methods(text: str) -> Tuple[SelectionMethod, ...]:
    names = [part.strip() for part in text.split(",") if part.strip()]
    return tuple(SelectionMethod(name) for name in names)


def _parse_seeds(text: str) -> Tuple[int, ...]:
    return tuple(int(part) for part in text.split(",") if part.strip())


_PARSERS: Dict[str, Callable[[str], object]] = {
    "profile": _parse_choice(PROFILES),
    "M": int,
    "N": int,
    "P0_dbm": float,
    "noise_dbm": float,
    "r_min_m": float,
    "r_max_m": float,
    "method": _parse_methods,
    "T": int,
    "lr": float,
    "seeds": _parse_seeds,
    "dataset": _parse_choice(DATASETS),
    "samples_per_device": int,
    "num_classes": int,
    "feature_dim": int,
    "cluster_separation": float,
    "test_samples": int,
    "mnist_dir": str,
    "batch_size": int,
    "round_mode": RoundMode,
    "sca_max_iters": int,
    "sca_objective_tol": float,
    "sca_constraint_tol": float,
    "adsbf_eps": float,
    "adsbf_max_iters": int,
    "output": str,
    "csv_wall_time": _parse_bool,
}


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (RoundMode, SelectionMethod)):
        return value.value
    if isinstance(value, tuple):
        return ",".join(_format_value(v) for v in value)
    return str(value)


# --- validation ---


def validate_field(config: ExperimentConfig, key: str) -> Tuple[bool, Optional[str]]:
    """Checks one key of a config.

    Returns:
        Tuple of (is_valid, error_message). If valid, error_message is None.
    """
    value = getattr(config, key)
    positive_ints = ("M", "N", "T", "samples_per_device", "feature_dim", "test_samples",
                     "sca_max_iters", "adsbf_max_iters")
    positive_reals = ("lr", "cluster_separation", "sca_objective_tol", "sca_constraint_tol", "adsbf_eps")

    if key in positive_ints and value < 1:
        return False, f"must be >= 1, got {value}"
    if key in positive_reals and not value > 0:
        return False, f"must be > 0, got {value}"
    if key == "num_classes" and value < 2:
        return False, f"must be >= 2, got {value}"
    if key == "batch_size" and value < 0:
        return False, f"must be >= 0, got {value}"
    if key == "r_min_m" and not value > 0:
        return False, f"must be > 0, got {value}"
    if key == "r_max_m" and value < config.r_min_m:
        return False, f"must be >= r_min_m ({config.r_min_m}), got {value}"
    if key in ("seeds", "method") and not value:
        return False, "must not be empty"
    if key == "mnist_dir" and config.dataset == "mnist" and not value:
        return False, "required when dataset = mnist"
    return True, None


def validate_config(config: ExperimentConfig, lines: Optional[Dict[str, int]] = None):
    """Raises ConfigError naming the first invalid key (and its line, if known)."""
    lines = lines or {}
    for spec in fields(ExperimentConfig):
        is_valid, error = validate_field(config, spec.name)
        if not is_valid:
            raise ConfigError(error, key=spec.name, line=lines.get(spec.name))


# --- documents ---


def parse_config(text: str) -> ExperimentConfig:
    """Parses a `key = value` document into a validated ExperimentConfig.

    Blank lines and `#` comments are ignored. With `profile = desk` the desk
    defaults replace the full-scale defaults for keys the document leaves unset.

    Raises:
        ConfigError: on unknown or repeated keys, unparsable values or values
            violating an invariant.
    """
    values: Dict[str, object] = {}
    lines: Dict[str, int] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        content = raw.split("#", 1)[0].strip()
        if not content:
            continue
        if "=" not in content:
            raise ConfigError("expected 'key = value'", line=number)
        key, value = (part.strip() for part in content.split("=", 1))
        if key not in _PARSERS:
            raise ConfigError("unknown key", key=key, line=number)
        if key in values:
            raise ConfigError("key given twice", key=key, line=number)
        try:
            values[key] = _PARSERS[key](value)
        except ValueError as e:
            raise ConfigError(f"cannot parse {value!r}: {e}", key=key, line=number) from e
        lines[key] = number

    if values.get("profile") == "desk":
        for key, default in DESK_OVERRIDES.items():
            values.setdefault(key, default)

    config = ExperimentConfig(**values)
    validate_config(config, lines)
    return config


def serialize_config(config: ExperimentConfig) -> str:
    """Writes every key in declaration order; parse_config reads it back equal."""
    return "".join(
        f"{spec.name} = {_format_value(getattr(config, spec.name))}\n" for spec in fields(ExperimentConfig)
    )


def load_config(path: str) -> ExperimentConfig:
    with open(path, encoding="utf-8") as f:
        return parse_config(f.read())


def with_overrides(config: ExperimentConfig, **overrides) -> ExperimentConfig:
    """Returns a validated copy with CLI overrides applied."""
    updated = replace(config, **{k: v for k, v in overrides.items() if v is not None})
    validate_config(updated)
    return updated
