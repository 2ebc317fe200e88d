"""Frequentist point estimators of per-group metrics and their difference.

A group's value is absent (None) exactly when its conditioning event has
zero count; absent values propagate to the delta rather than becoming NaN.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import Dataset, GroupPair, MetricKind


def predictions(scores: np.ndarray) -> np.ndarray:
    """Hard predictions: yhat = 1 iff score >= 0.5 (ties go to class 1)."""
    return scores >= 0.5


def event_counts(labeled: Dataset, metric: MetricKind, group: int) -> tuple[int, int]:
    """(numerator, denominator) counts of the metric's conditional event.

    accuracy: correct / all; TPR: (yhat=1, y=1) / (y=1); FPR: (yhat=1, y=0) / (y=0).
    Only labeled examples of the group are counted.
    """
    in_g = (labeled.groups == group) & labeled.labeled_mask
    y = labeled.labels[in_g]
    yhat = predictions(labeled.scores[in_g])
    if metric is MetricKind.ACCURACY:
        return int((yhat == y).sum()), int(in_g.sum())
    if metric is MetricKind.TPR:
        return int((yhat & (y == 1)).sum()), int((y == 1).sum())
    if metric is MetricKind.FPR:
        return int((yhat & (y == 0)).sum()), int((y == 0).sum())
    raise ValueError(f"unknown metric {metric}")


@dataclass(frozen=True)
class FreqEstimate:
    per_group: dict[int, Optional[float]]
    delta: Optional[float]


def freq_metric(labeled: Dataset, metric: MetricKind, pair: GroupPair) -> FreqEstimate:
    """Per-group frequency estimates and their difference for the pair."""
    pair.validate(labeled)
    per_group: dict[int, Optional[float]] = {}
    for g in (pair.unprivileged, pair.privileged):
        num, den = event_counts(labeled, metric, g)
        per_group[g] = num / den if den > 0 else None
    u, p = per_group[pair.unprivileged], per_group[pair.privileged]
    delta = u - p if (u is not None and p is not None) else None
    return FreqEstimate(per_group=per_group, delta=delta)
