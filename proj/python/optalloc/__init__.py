"""Python access to the optalloc estimators.

Structured results come back from the extension as JSON and are decoded here.
"""

import json

from ._optalloc import (
    OptallocError,
    argmax_arm,
    dgp_names,
    field_names,
    level_set_integral,
    linear_area,
    population_gamma,
    sample_dgp,
    subgradient,
    threshold_search,
    welfare_potential,
)
from . import _optalloc

__all__ = [
    "OptallocError",
    "argmax_arm",
    "dgp_names",
    "dml",
    "field_names",
    "level_set_integral",
    "linear_area",
    "population_gamma",
    "roc_curve",
    "run",
    "sample_dgp",
    "subgradient",
    "threshold_search",
    "welfare_potential",
]


def roc_curve(y, p_hat, alpha_grid, boot=0, seed=0, level=0.95):
    return json.loads(_optalloc.roc_curve_json(list(y), list(p_hat), list(alpha_grid), boot, seed, level))


def dml(x, arm, y, lam, num_arms=2, folds=5, seed=0):
    return json.loads(_optalloc.dml_json(x, list(arm), list(y), num_arms, list(lam), folds, seed))


def run(config):
    """Runs one harness task from a flat mapping of config keys to values."""
    return json.loads(_optalloc.run_json({str(k): str(v) for k, v in config.items()}))
