"""Confidence scoring: stable softmax, the score family, selective accuracy.

All scores are computed in float64 regardless of storage dtype so threshold
comparisons are stable. Higher score always means more confident, for every
metric.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


class ConfidenceMetric(enum.Enum):
    """Scalar confidence of a logit vector. MAX_PROB is the default."""

    MAX_PROB = "max-prob"       # max(softmax(x))
    LOGIT_GAP = "logit-gap"     # x_(1) - x_(2)
    PROB_GAP = "prob-gap"       # p_(1) - p_(2)
    NEG_ENTROPY = "neg-entropy"  # sum p ln p  (in [-ln C, 0])

    def __str__(self):
        return self.value


def softmax(logits) -> np.ndarray:
    """Softmax over the last axis, shift-invariant (subtract-max)."""
    x = np.asarray(logits, dtype=np.float64)
    if x.shape[-1] < 1:
        raise ValidationError("softmax needs at least one class")
    if not np.all(np.isfinite(x)):
        raise ValidationError("softmax input must be finite")
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _top2(values: np.ndarray):
    """(largest, second largest) along the last axis."""
    part = np.partition(values, values.shape[-1] - 2, axis=-1)
    return part[..., -1], part[..., -2]


def _entropy_term(p: np.ndarray) -> np.ndarray:
    # 0 * ln 0 := 0
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(p > 0.0, p * np.log(p), 0.0)
    return t.sum(axis=-1)


def confidence_scores(logits, metric: ConfidenceMetric = ConfidenceMetric.MAX_PROB) -> np.ndarray:
    """Vectorized confidence over rows of a (..., C) logit array."""
    x = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValidationError("confidence input must be finite")
    c = x.shape[-1]
    if metric is ConfidenceMetric.MAX_PROB:
        shifted = x - x.max(axis=-1, keepdims=True)
        return 1.0 / np.exp(shifted).sum(axis=-1)
    if c < 2:
        raise ValidationError(f"{metric.value} requires at least 2 classes")
    if metric is ConfidenceMetric.LOGIT_GAP:
        top, second = _top2(x)
        return top - second
    if metric is ConfidenceMetric.PROB_GAP:
        top, second = _top2(softmax(x))
        return top - second
    if metric is ConfidenceMetric.NEG_ENTROPY:
        return _entropy_term(softmax(x))
    raise ValidationError(f"unknown metric {metric!r}")


def prob_confidence_scores(probs, metric: ConfidenceMetric = ConfidenceMetric.MAX_PROB) -> np.ndarray:
    """Confidence of rows that are already probability vectors (no re-softmax).

    Used for mean-of-probabilities aggregates. LOGIT_GAP is rejected: once
    predictions are averaged in probability space there is no logit vector
    to take a gap over.
    """
    p = np.asarray(probs, dtype=np.float64)
    if metric is ConfidenceMetric.MAX_PROB:
        return p.max(axis=-1)
    if p.shape[-1] < 2:
        raise ValidationError(f"{metric.value} requires at least 2 classes")
    if metric is ConfidenceMetric.PROB_GAP:
        top, second = _top2(p)
        return top - second
    if metric is ConfidenceMetric.NEG_ENTROPY:
        return _entropy_term(p)
    if metric is ConfidenceMetric.LOGIT_GAP:
        raise ValidationError("logit-gap is undefined for probability aggregates")
    raise ValidationError(f"unknown metric {metric!r}")


def confidence(logits, metric: ConfidenceMetric = ConfidenceMetric.MAX_PROB) -> float:
    """Scalar confidence of a single logit vector."""
    x = np.asarray(logits, dtype=np.float64)
    if x.ndim != 1:
        raise ValidationError("confidence expects a single logit vector")
    return float(confidence_scores(x, metric))


def validate_thresholds(thresholds, metric: ConfidenceMetric, num_classes: int):
    """Check each threshold lies in the metric's score range (plus sentinels).

    MAX_PROB / PROB_GAP: [0, 1]. LOGIT_GAP: [0, inf). NEG_ENTROPY scores are
    in [-ln C, 0]; thresholds up to the sentinel 1 are allowed so a grid's
    "never exit" point is expressible.
    """
    for t in thresholds:
        if not np.isfinite(t):
            raise ValidationError(f"threshold {t} is not finite")
        if metric in (ConfidenceMetric.MAX_PROB, ConfidenceMetric.PROB_GAP):
            if not (0.0 <= t <= 1.0):
                raise ValidationError(f"threshold {t} outside [0, 1] for {metric.value}")
        elif metric is ConfidenceMetric.LOGIT_GAP:
            if t < 0.0:
                raise ValidationError(f"threshold {t} negative for {metric.value}")
        elif metric is ConfidenceMetric.NEG_ENTROPY:
            if t > 1.0:
                raise ValidationError(f"threshold {t} above sentinel 1 for {metric.value}")


@dataclass(frozen=True)
class SelectiveAccuracyCurve:
    """Accuracy over the top-k% most confident examples, per k."""

    points: tuple[tuple[float, float], ...]  # (k percent, accuracy), k ascending

    def accuracy_at(self, k: float) -> float:
        for kk, acc in self.points:
            if kk == k:
                return acc
        raise KeyError(f"no curve point at k={k}")


def selective_accuracy(preds, labels, metric: ConfidenceMetric, ks) -> SelectiveAccuracyCurve:
    """Accuracy within the ceil(k*N/100) highest-confidence examples.

    Ties at the selection boundary are broken by ascending example index so
    the curve is deterministic across platforms.
    """
    ks = sorted(set(float(k) for k in ks))
    if not ks:
        raise ValidationError("ks must be non-empty")
    for k in ks:
        if not (0.0 < k <= 100.0):
            raise ValidationError(f"k={k} outside (0, 100]")
    scores = confidence_scores(preds.logits, metric)
    n = scores.shape[0]
    if labels.num_examples != n:
        raise ValidationError("labels do not match prediction set size")
    order = np.lexsort((np.arange(n), -scores))
    correct = preds.logits.argmax(axis=1) == labels.labels
    cum_correct = np.cumsum(correct[order])
    points = []
    for k in ks:
        take = int(np.ceil(k * n / 100.0))
        take = min(take, n)
        points.append((k, float(cum_correct[take - 1] / take)))
    return SelectiveAccuracyCurve(points=tuple(points))
