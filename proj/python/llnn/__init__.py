"""Columnar lifelong learning networks."""

import json

from ._core import (
    ConfigError,
    ContractError,
    DimensionError,
    Error,
    FormatError,
    IoError,
    Network,
    auc,
    csv_header,
    expansion_size,
    experiment_ids,
    normalize_strategy,
    synthetic_images,
)
from . import _core

__all__ = [
    "ConfigError",
    "ContractError",
    "DimensionError",
    "Error",
    "FormatError",
    "IoError",
    "Network",
    "auc",
    "csv_header",
    "default_config",
    "expansion_size",
    "experiment_ids",
    "normalize_strategy",
    "parse_config",
    "run_experiment",
    "synthetic_images",
]


def default_config(experiment):
    """Default configuration of an experiment as a dict."""
    return json.loads(_core.default_config_json(experiment))


def parse_config(config):
    """Validates a config dict and returns it with every default filled in."""
    return json.loads(_core.parse_config_json(json.dumps(config)))


def run_experiment(config, write_files=False):
    """Runs every seed of an experiment.

    Returns one dict per seed with ``seed``, ``rows`` (tuples of phase, epoch,
    task, metric, value) and the ``csv`` text.
    """
    return _core.run_experiment_json(json.dumps(config), write_files)
