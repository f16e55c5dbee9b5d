"""Delay and sparse-gain co-design for H2 control under a bandwidth budget."""

import json
import os

from ._core import (
    DomainError,
    NumericalError,
    PreconditionError,
    ValidationError,
    evaluate,
    format_double,
    generate_random_model,
    lqr_gain,
    spectral_abscissa,
)
from . import _core

__all__ = [
    "DomainError",
    "NumericalError",
    "PreconditionError",
    "ValidationError",
    "check",
    "evaluate",
    "format_double",
    "gen_model",
    "generate_random_model",
    "lqr_gain",
    "run",
    "spectral_abscissa",
]


def _config_text(config):
    """Returns (json_text, base_dir) for a dict, a JSON string or a path."""
    if isinstance(config, dict):
        return json.dumps(config), "."
    config = os.fspath(config)
    if os.path.isfile(config):
        with open(config) as f:
            return f.read(), os.path.dirname(os.path.abspath(config))
    return config, "."


def run(config, out_dir=None):
    """Runs the co-design loop. With out_dir the report files are written too."""
    text, base = _config_text(config)
    if out_dir is None:
        return _core.run_json(text, base)
    return _core.run_to_dir(text, os.fspath(out_dir), base)


def check(config):
    """Validates the config and returns the (possibly halved) feasible start."""
    text, base = _config_text(config)
    return _core.check_json(text, base)


def gen_model(seed, n, shift=0.1):
    """Config dict for a seeded random model with explicit matrices."""
    return json.loads(_core.model_config_json(seed, n, shift))
