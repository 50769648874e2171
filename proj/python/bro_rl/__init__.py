"""Python bindings for the BRO actor-critic core."""

import json

from . import _core
from ._core import *  # noqa: F401,F403


def default_config() -> dict:
    """Default run configuration as a dict (see run_training)."""
    return json.loads(_core.default_config_json())


def train(config: dict) -> list:
    """Run training from a config dict; returns the per-evaluation records."""
    merged = default_config()
    merged.update(config)
    return _core.run_training(json.dumps(merged))
