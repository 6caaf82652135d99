"""Python interface to the convstruct C++ core.

Corpora travel as canonical JSONL text; structured results come back as
plain Python objects.
"""

from __future__ import annotations

import json

from ._convstruct import (
    ConvstructError,
    Model,
    ancestor_mask,
    ancestors,
    bce_loss,
    depth_limited_mask,
    full_mask,
    generate_corpus,
    graph_accuracy,
    one_to_one,
    rank_loss,
    run_cli,
    scaled_vi,
    temporal_mask,
)
from . import _convstruct

__all__ = [
    "ConvstructError",
    "Model",
    "ancestor_mask",
    "ancestors",
    "bce_loss",
    "depth_limited_mask",
    "evaluate",
    "full_mask",
    "generate_corpus",
    "graph_accuracy",
    "one_to_one",
    "rank_loss",
    "run_cli",
    "scaled_vi",
    "temporal_mask",
    "train",
]


def evaluate(pred_jsonl: str, gold_jsonl: str) -> dict:
    """Metrics report for predicted vs gold corpora (JSONL text)."""
    return json.loads(_convstruct.evaluate_json(pred_jsonl, gold_jsonl))


def train(train_jsonl: str, dev_jsonl: str = "", preset: str = "desk",
          model_config: dict | None = None, train_config: dict | None = None):
    """Two-stage training. Config dicts override keys of the preset.

    Returns (Model, info) where info holds the loss curve CSV, the best dev
    accuracy and the encoder checksums.
    """
    model, info = _convstruct.train_json(
        train_jsonl, dev_jsonl, preset,
        json.dumps(model_config or {}), json.dumps(train_config or {}))
    return model, json.loads(info)
