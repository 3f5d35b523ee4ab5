"""Heterogeneous-feature sequential recommender (native core plus thin helpers)."""

import json

from ._core import (
    ConfigError,
    ContractError,
    Data,
    DataError,
    DimensionError,
    NumericError,
    QuantileCodebook,
    fit_quantile_codebook,
    ndcg_at_n,
    recall_at_n,
    score_catalog,
    time_gap_bucket,
    token_mask,
)
from . import _core

__all__ = [
    "ConfigError", "ContractError", "Data", "DataError", "DimensionError", "NumericError",
    "QuantileCodebook", "Trainer", "fit_quantile_codebook", "generate_synthetic", "gradient_suite",
    "ndcg_at_n", "recall_at_n", "run_experiment", "score_catalog", "time_gap_bucket", "token_mask",
]


def generate_synthetic(out_dir, **spec):
    """Write a planted-rule corpus to out_dir; returns the rule table."""
    return json.loads(_core.generate_synthetic(json.dumps(spec), str(out_dir)))


def run_experiment(data, config=None, out_dir=None):
    """Train and evaluate; returns the report as a dict."""
    return json.loads(_core.run_experiment(json.dumps(config or {}), data,
                                           None if out_dir is None else str(out_dir)))


def gradient_suite(seed=0, corrupt_op=""):
    return [dict(check=n, max_rel_error=e, passed=p) for n, e, p in _core.gradient_suite(seed, corrupt_op)]


class Trainer:
    def __init__(self, data, config=None):
        self._t = _core.Trainer(data, json.dumps(config or {}))

    def train_epoch(self):
        return json.loads(self._t.train_epoch_json())

    def train_step(self, user_indices):
        return self._t.train_step(list(user_indices))

    def evaluate(self):
        return json.loads(self._t.evaluate_json())

    def item_embeddings(self):
        return self._t.item_embeddings()

    def user_embeddings(self):
        return self._t.user_embeddings()

    def save(self, manifest):
        self._t.save(str(manifest))

    def load(self, manifest):
        self._t.load(str(manifest))

    @property
    def epochs_completed(self):
        return self._t.epochs_completed

    @property
    def parameter_count(self):
        return self._t.parameter_count
