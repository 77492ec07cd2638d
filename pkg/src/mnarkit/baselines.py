"""Reference imputers: feature-mean fill, the alpha=0 degenerate model
(mask decoder switched off, MAR-style), and the serial selection variant."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .errors import DegenerateFeatureError, DomainError
from .masking import IncompleteMatrix
from . import model as core

BASELINE_KINDS = ("mean", "mar_alpha0", "serial_selection")


def mean_impute(data: IncompleteMatrix) -> np.ndarray:
    """Missing entries replaced by the per-feature observed mean."""
    out = np.array(data.values, dtype=np.float64)
    for j in range(data.shape[1]):
        obs = data.mask[:, j] == 1
        if not obs.any():
            raise DegenerateFeatureError(f"feature {j} has no observed entries")
        out[~obs, j] = data.values[obs, j].mean()
    return out


def train_serial_selection(dataset: IncompleteMatrix, config: core.ModelConfig):
    """Same encoder/data decoder as the parallel model; mask probabilities
    come from one dense+sigmoid layer on the decoded data mean.

    The mask-likelihood temperature alpha is pinned to 1: the temperature is
    a knob of the parallel model, and the reference selection model is the
    standard untempered factorization.
    """
    return core.train(dataset, replace(config, structure="serial", alpha=1.0))


def run_baseline(kind: str, dataset: IncompleteMatrix, config: core.ModelConfig) -> core.ImputationResult:
    """Train (where needed) and impute with the named baseline."""
    if kind == "mean":
        completed = mean_impute(dataset)
        return core.ImputationResult(completed=completed,
                                     prob_mask=np.full(dataset.shape, 0.5))
    if kind == "mar_alpha0":
        cfg = replace(config, alpha=0.0)
        params, _ = core.train(dataset, cfg)
        result = core.impute(dataset, params, cfg)
        # the mask decoder carries no training signal at alpha=0; report an
        # uninformative probabilistic mask
        return core.ImputationResult(completed=result.completed,
                                     prob_mask=np.full(dataset.shape, 0.5))
    if kind == "serial_selection":
        params, _ = train_serial_selection(dataset, config)
        return core.impute(dataset, params,
                           replace(config, structure="serial", alpha=1.0))
    raise DomainError(f"unknown baseline kind {kind!r}")
