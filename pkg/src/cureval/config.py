"""Run configuration: a JSON file of key-value settings shared by all
subcommands, validated completely before any input is read.

Unknown keys are rejected so typos fail loudly instead of silently
falling back to defaults.  Command-line flags override file keys.  The
scorer endpoint and credential are deliberately NOT config keys; they
come from environment variables (see cureval.reward).
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .errors import ConfigError
from .metrics import MULTI_REF_MODES, SMOOTHING_MODES
from .pii import PATTERN_NAMES
from .tokenization import DEFAULT_POLICY, POLICIES

STAGE_NAMES = ("normalize", "pii", "length", "score", "quality")
DEFAULT_STAGES = STAGE_NAMES
SCORER_KINDS = ("stub", "remote")
FAILURE_MODES = ("discard", "abort")
MALFORMED_MODES = ("raise", "skip")


@dataclass
class RunConfig:
    # shared
    policy: str = DEFAULT_POLICY
    workers: int = 1
    on_malformed: str = "raise"
    strict_ids: bool = False
    # curation
    stages: tuple[str, ...] = DEFAULT_STAGES
    min_tokens: int = 200
    score_threshold: float = 0.5
    pii_patterns: dict[str, bool] = field(default_factory=dict)
    scorer: str = "stub"
    on_scorer_failure: str = "discard"
    max_inflight: int = 4
    chunk_size: int = 512
    assume_prescored: bool = False
    # evaluation
    model: str = "model"
    coverage_floor: float = 1.0
    multi_ref: str = "max"
    smoothing: str = "none"
    max_n: int = 4
    with_reward: bool = False
    report_table: str | None = None
    report_json: str | None = None
    report_csv: str | None = None
    per_example: str | None = None


def _need(value, kind, key):
    # bool is an int subclass; keep the two apart for config clarity
    if kind is int and isinstance(value, bool) or not isinstance(value, kind):
        raise ConfigError(f"config key {key!r} must be {kind.__name__}, "
                          f"got {value!r}")
    return value


def _choice(value, options, key):
    if value not in options:
        raise ConfigError(f"config key {key!r} must be one of {list(options)}, "
                          f"got {value!r}")
    return value


def _positive_int(value, key):
    _need(value, int, key)
    if value < 1:
        raise ConfigError(f"config key {key!r} must be >= 1, got {value}")
    return value


def _nonneg_int(value, key):
    _need(value, int, key)
    if value < 0:
        raise ConfigError(f"config key {key!r} must be >= 0, got {value}")
    return value


def _unit_float(value, key):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"config key {key!r} must be a number, got {value!r}")
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ConfigError(f"config key {key!r} must lie in [0, 1], got {value}")
    return value


def _optional_path(value, key):
    if value is None:
        return None
    return _need(value, str, key)


def _stages(value, key):
    if not isinstance(value, list) or not all(isinstance(s, str) for s in value):
        raise ConfigError(f"config key {key!r} must be a list of stage names")
    unknown = [s for s in value if s not in STAGE_NAMES]
    if unknown:
        raise ConfigError(f"unknown stage names {unknown}; valid: {list(STAGE_NAMES)}")
    if len(set(value)) != len(value):
        raise ConfigError(f"config key {key!r} repeats a stage")
    return tuple(value)


def _pii_toggles(value, key):
    if not isinstance(value, dict):
        raise ConfigError(f"config key {key!r} must map pattern name -> bool")
    unknown = sorted(set(value) - set(PATTERN_NAMES))
    if unknown:
        raise ConfigError(f"unknown PII pattern names {unknown}; "
                          f"valid: {list(PATTERN_NAMES)}")
    for name, flag in value.items():
        _need(flag, bool, f"{key}.{name}")
    return dict(value)


_VALIDATORS = {
    "policy": lambda v: _choice(v, POLICIES, "policy"),
    "workers": lambda v: _positive_int(v, "workers"),
    "on_malformed": lambda v: _choice(v, MALFORMED_MODES, "on_malformed"),
    "strict_ids": lambda v: _need(v, bool, "strict_ids"),
    "stages": lambda v: _stages(v, "stages"),
    "min_tokens": lambda v: _nonneg_int(v, "min_tokens"),
    "score_threshold": lambda v: _unit_float(v, "score_threshold"),
    "pii_patterns": lambda v: _pii_toggles(v, "pii_patterns"),
    "scorer": lambda v: _choice(v, SCORER_KINDS, "scorer"),
    "on_scorer_failure": lambda v: _choice(v, FAILURE_MODES, "on_scorer_failure"),
    "max_inflight": lambda v: _positive_int(v, "max_inflight"),
    "chunk_size": lambda v: _positive_int(v, "chunk_size"),
    "assume_prescored": lambda v: _need(v, bool, "assume_prescored"),
    "model": lambda v: _need(v, str, "model"),
    "coverage_floor": lambda v: _unit_float(v, "coverage_floor"),
    "multi_ref": lambda v: _choice(v, MULTI_REF_MODES, "multi_ref"),
    "smoothing": lambda v: _choice(v, SMOOTHING_MODES, "smoothing"),
    "max_n": lambda v: _positive_int(v, "max_n"),
    "with_reward": lambda v: _need(v, bool, "with_reward"),
    "report_table": lambda v: _optional_path(v, "report_table"),
    "report_json": lambda v: _optional_path(v, "report_json"),
    "report_csv": lambda v: _optional_path(v, "report_csv"),
    "per_example": lambda v: _optional_path(v, "per_example"),
}


def config_from_obj(obj: dict) -> RunConfig:
    """Build a validated RunConfig from a parsed JSON object."""
    if not isinstance(obj, dict):
        raise ConfigError("config must be a JSON object of key-value settings")
    unknown = sorted(set(obj) - set(_VALIDATORS))
    if unknown:
        raise ConfigError(f"unknown config keys {unknown}; "
                          f"valid: {sorted(_VALIDATORS)}")
    kwargs = {key: _VALIDATORS[key](value) for key, value in obj.items()}
    return RunConfig(**kwargs)


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return config_from_obj(obj)


def apply_overrides(config: RunConfig, overrides: dict) -> RunConfig:
    """Overlay non-None command-line values onto a config (flags win)."""
    updates = {}
    for key, value in overrides.items():
        if value is None:
            continue
        if key not in _VALIDATORS:
            raise ConfigError(f"unknown config key {key!r}")
        updates[key] = _VALIDATORS[key](value)
    return dataclasses.replace(config, **updates)
