"""
Run configuration: built-in defaults, YAML overrides, validation.
"""

import copy
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Union

import yaml

from .errors import ConfigError

logger = logging.getLogger(__name__)


def _get_default_config() -> Dict:
    """Built-in defaults, mirrored by config/dpmc.yaml."""
    return {
        "engine": {
            "mode": "prop-on",
            "max_frames": 1000,
            "max_refinements": 10000,
            "generalize": True,
        },
        "propagation": {
            "bound": 20,
            "cache_shapes": True,
            "debug_cross_check": False,
        },
        "solver": {
            "sat_backend": "glucose3",
            "euf_max_iterations": 100000,
            "bv_conflict_budget": 0,
            "minimize_cores": False,
            "dump_queries": None,
        },
        "oracle": {
            "max_bits": 24,
            "bfs_max_bits": 20,
            "rule_widths": [1, 2, 3, 4],
        },
        "logging": {
            "level": "WARNING",
        },
    }


def _deep_merge(base: Dict, override: Dict) -> Dict:
    merged = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def validate_config(config: Dict) -> Dict:
    """Check ranges; raises ConfigError on the first violation."""
    engine = config["engine"]
    if engine["mode"] not in ("prop-on", "prop-off"):
        raise ConfigError("engine.mode", f"expected prop-on or prop-off, got {engine['mode']!r}")
    for key in ("max_frames", "max_refinements"):
        if not isinstance(engine[key], int) or engine[key] < 1:
            raise ConfigError(f"engine.{key}", "must be a positive integer")

    bound = config["propagation"]["bound"]
    if not isinstance(bound, int) or bound < 1:
        raise ConfigError("propagation.bound", "must be a positive integer")

    solver = config["solver"]
    if not solver["sat_backend"]:
        raise ConfigError("solver.sat_backend", "must name a pysat solver")
    if not isinstance(solver["euf_max_iterations"], int) or solver["euf_max_iterations"] < 1:
        raise ConfigError("solver.euf_max_iterations", "must be a positive integer")
    if not isinstance(solver["bv_conflict_budget"], int) or solver["bv_conflict_budget"] < 0:
        raise ConfigError("solver.bv_conflict_budget", "must be zero (unlimited) or positive")

    oracle = config["oracle"]
    if oracle["bfs_max_bits"] > oracle["max_bits"]:
        raise ConfigError("oracle.bfs_max_bits", "cannot exceed oracle.max_bits")
    return config


def load_config(
    path: Optional[Union[str, Path]] = None, overrides: Optional[Dict[str, Any]] = None
) -> Dict:
    """Defaults, then the YAML file (if any), then explicit overrides."""
    config = _get_default_config()
    if path is not None:
        path = Path(path)
        try:
            with open(path, "r", encoding="utf-8") as f:
                loaded = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            logger.error(f"Failed to parse config {path}: {e}")
            raise ConfigError(str(path), "not valid YAML") from e
        if not isinstance(loaded, dict):
            raise ConfigError(str(path), "top level must be a mapping")
        config = _deep_merge(config, loaded)
        logger.info(f"Loaded configuration from {path}")
    if overrides:
        config = _deep_merge(config, overrides)
    return validate_config(config)
