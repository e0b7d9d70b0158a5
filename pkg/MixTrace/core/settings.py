"""PipelineConfig assembly.

Precedence is CLI flag > config file > environment > built-in default. The
last two already live in config.py and reach us as dataclass defaults, so
only the file and the flags are merged here.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, Optional, Tuple

import yaml

import config
from MixTrace.attacks.linkage import ASSIGNMENTS
from MixTrace.attacks.staypoints import AttackParams
from MixTrace.mechanisms.mixzone import MixZoneParams
from MixTrace.mechanisms.smoothing import SmoothingParams
from MixTrace.utils.exceptions import ConfigError
from MixTrace.utils.synthgen import SynthConfig


def _bool(value) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


def _area(value) -> Tuple[float, float, float, float]:
    if isinstance(value, str):
        value = value.split(",")
    area = tuple(float(v) for v in value)
    if len(area) != 4:
        raise ValueError("area needs lat_min,lat_max,lon_min,lon_max")
    return area


def _duration(value) -> float:
    return float(config.time_to_seconds(value))


# dotted key -> (section, field, parser); section None is a top-level field
KEYS: Dict[str, Tuple[Optional[str], str, Callable[[Any], Any]]] = {
    "seed": (None, "seed", int),
    "input": (None, "input", str),
    "output-dir": (None, "output_dir", str),
    "truth": (None, "truth", str),
    "smooth": (None, "smooth", _bool),
    "swap": (None, "swap", _bool),
    "workers": (None, "workers", int),
    "smoothing.output-mode": ("smoothing", "output_mode", str),
    "smoothing.n": ("smoothing", "n", int),
    "smoothing.interval-s": ("smoothing", "interval_s", _duration),
    "smoothing.zero-length-policy": ("smoothing", "zero_length_policy", str),
    "mixzone.proximity-m": ("mixzone", "proximity_m", float),
    "mixzone.radius-m": ("mixzone", "radius_m", float),
    "mixzone.min-copresence-s": ("mixzone", "min_copresence_s", _duration),
    "mixzone.sample-step-s": ("mixzone", "sample_step_s", _duration),
    "attack.d-max-m": ("attack", "d_max_m", float),
    "attack.t-min-s": ("attack", "t_min_s", _duration),
    "attack.match-radius-m": ("attack", "match_radius_m", float),
    "attack.assignment": (None, "assignment", str),
    "synth.n-users": ("synth", "n_users", int),
    "synth.area": ("synth", "area", _area),
    "synth.n-pois-per-user": ("synth", "n_pois_per_user", int),
    "synth.dwell-s": ("synth", "dwell_s", _duration),
    "synth.travel-speed-mps": ("synth", "travel_speed_mps", float),
    "synth.sample-period-s": ("synth", "sample_period_s", _duration),
    "synth.jitter-m": ("synth", "jitter_m", float),
    "synth.n-planted-meetings": ("synth", "n_planted_meetings", int),
    "synth.start-s": ("synth", "start_s", float),
    "synth.start-spread-s": ("synth", "start_spread_s", _duration),
    "synth.meeting-s": ("synth", "meeting_s", _duration),
    "synth.dwell-radius-m": ("synth", "dwell_radius_m", float),
    "synth.min-leg-m": ("synth", "min_leg_m", float),
}


@dataclass(frozen=True)
class PipelineConfig:
    smoothing: SmoothingParams = field(default_factory=SmoothingParams)
    mixzone: MixZoneParams = field(default_factory=MixZoneParams)
    attack: AttackParams = field(default_factory=AttackParams)
    synth: SynthConfig = field(default_factory=SynthConfig)
    seed: int = config.SEED
    input: Optional[str] = None
    output_dir: str = config.OUTPUT_DIR
    truth: Optional[str] = None
    smooth: bool = True
    swap: bool = True
    workers: int = config.WORKERS
    assignment: str = "greedy"

    def __post_init__(self):
        if self.assignment not in ASSIGNMENTS:
            raise ConfigError(f"attack.assignment must be one of {ASSIGNMENTS}, got {self.assignment!r}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        # one seed for every random stream
        if self.mixzone.seed != self.seed:
            object.__setattr__(self, "mixzone", replace(self.mixzone, seed=self.seed))
        if self.synth.seed != self.seed:
            object.__setattr__(self, "synth", replace(self.synth, seed=self.seed))

    def path(self, *parts: str) -> str:
        return os.path.join(self.output_dir, *parts)

    def truth_path(self) -> str:
        return self.truth or self.path("truth_pois.csv")


def read_config_file(path: str) -> Dict[str, Any]:
    try:
        with open(path, encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except OSError as e:
        raise ConfigError(f"Cannot read config file {path}: {e}")
    except yaml.YAMLError as e:
        raise ConfigError(f"Config file {path} is not valid YAML: {e}")
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"Config file {path} must hold a flat mapping of keys")
    return {str(k): v for k, v in data.items()}


def load_config(path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> PipelineConfig:
    values: Dict[str, Any] = {}
    if path:
        values.update(read_config_file(path))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})

    sections: Dict[str, Dict[str, Any]] = {"smoothing": {}, "mixzone": {}, "attack": {}, "synth": {}}
    top: Dict[str, Any] = {}
    for key, value in values.items():
        if key not in KEYS:
            raise ConfigError(f"Unknown config key {key!r}")
        section, name, parse = KEYS[key]
        try:
            parsed = parse(value)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Bad value for {key}: {value!r} ({e})")
        (sections[section] if section else top)[name] = parsed

    seed = top.get("seed", config.SEED)
    try:
        return PipelineConfig(
            smoothing=SmoothingParams(**sections["smoothing"]),
            mixzone=MixZoneParams(seed=seed, **sections["mixzone"]),
            attack=AttackParams(**sections["attack"]),
            synth=SynthConfig(
                seed=seed,
                d_max_m=sections["attack"].get("d_max_m", config.D_MAX_M),
                t_min_s=sections["attack"].get("t_min_s", config.T_MIN_S),
                **sections["synth"],
            ),
            **top,
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Invalid configuration: {e}")
