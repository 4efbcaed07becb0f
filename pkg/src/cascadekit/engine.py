"""Cascade and ensemble simulation over a prediction pool.

A cascade applies models in order, keeps the running mean of their outputs,
and lets an example exit at stage k < n once the aggregate's confidence
clears threshold t_k (>= comparison; the last stage has no gate). An
ensemble is the degenerate cascade in which nothing exits early.

The per-(sequence, metric, aggregation) stage table is precomputed once and
reused across threshold vectors, which is what makes grid search over
thresholds cheap: evaluating one vector is a single pass of the exit kernel.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .confidence import (
    ConfidenceMetric,
    confidence_scores,
    prob_confidence_scores,
    softmax,
    validate_thresholds,
)
from .errors import ValidationError
from .pool import ModelPool


class AggregationMode(enum.Enum):
    """How stage outputs are combined. MEAN_LOGITS is the default."""

    MEAN_LOGITS = "mean-logits"
    MEAN_PROBS = "mean-probs"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class CascadeSpec:
    """Ordered model sequence with its n-1 exit thresholds."""

    model_ids: tuple[str, ...]
    thresholds: tuple[float, ...] = ()
    metric: ConfidenceMetric = ConfidenceMetric.MAX_PROB
    aggregation: AggregationMode = AggregationMode.MEAN_LOGITS

    def __post_init__(self):
        object.__setattr__(self, "model_ids", tuple(self.model_ids))
        object.__setattr__(self, "thresholds", tuple(float(t) for t in self.thresholds))

    @property
    def num_models(self) -> int:
        return len(self.model_ids)

    def validate(self, pool: ModelPool):
        n = self.num_models
        if n < 1:
            raise ValidationError("cascade needs at least one model")
        if len(self.thresholds) != n - 1:
            raise ValidationError(
                f"expected {n - 1} thresholds for {n} models, got {len(self.thresholds)}"
            )
        if len(set(self.model_ids)) != n:
            raise ValidationError("a pool entry may be used only once per cascade")
        for mid in self.model_ids:
            pool.entry(mid)
        if self.aggregation is AggregationMode.MEAN_PROBS and self.metric is ConfidenceMetric.LOGIT_GAP:
            raise ValidationError("logit-gap cannot gate a mean-of-probabilities cascade")
        validate_thresholds(self.thresholds, self.metric, pool.num_classes)


@dataclass(frozen=True)
class CascadeEvaluation:
    """Outcome of simulating a cascade over every example in a pool."""

    accuracy: float
    avg_cost: float
    worst_case_cost: float
    exit_ratios: tuple[float, ...]
    exit_counts: tuple[int, ...]
    exit_stage: np.ndarray = field(repr=False)        # (N,), 1-based
    predicted_labels: np.ndarray = field(repr=False)  # (N,)
    confidence_at_exit: np.ndarray = field(repr=False)  # (N,)

    @property
    def num_stages(self) -> int:
        return len(self.exit_ratios)


class CascadeTable:
    """Per-stage aggregates for one model sequence over one pool.

    Holds, for each stage k, the confidence, argmax, and correctness of the
    running aggregate as if every example reached stage k, plus cumulative
    costs. Building the table is O(n*N*C); evaluating a threshold vector
    against it is O(n*N) worst case.
    """

    def __init__(self, pool: ModelPool, model_ids, metric: ConfidenceMetric,
                 aggregation: AggregationMode):
        model_ids = tuple(model_ids)
        if not model_ids:
            raise ValidationError("cascade needs at least one model")
        if aggregation is AggregationMode.MEAN_PROBS and metric is ConfidenceMetric.LOGIT_GAP:
            raise ValidationError("logit-gap cannot gate a mean-of-probabilities cascade")
        entries = [pool.entry(mid) for mid in model_ids]
        if len(set(model_ids)) != len(model_ids):
            raise ValidationError("a pool entry may be used only once per cascade")
        n = len(entries)
        n_examples = pool.num_examples
        labels = pool.labels.labels

        self.pool = pool
        self.model_ids = model_ids
        self.metric = metric
        self.aggregation = aggregation
        self.num_stages = n
        self.num_examples = n_examples
        self.conf = np.empty((n, n_examples), dtype=np.float64)
        self.pred = np.empty((n, n_examples), dtype=np.int64)
        self.correct = np.empty((n, n_examples), dtype=np.bool_)
        self.cumcost = np.cumsum([e.cost for e in entries]).astype(np.float64)

        running = np.zeros((n_examples, pool.num_classes), dtype=np.float64)
        for k, e in enumerate(entries):
            stage_out = (
                softmax(e.logits)
                if aggregation is AggregationMode.MEAN_PROBS
                else e.logits.astype(np.float64)
            )
            running += stage_out
            agg = running / (k + 1)
            if aggregation is AggregationMode.MEAN_PROBS:
                self.conf[k] = prob_confidence_scores(agg, metric)
            else:
                self.conf[k] = confidence_scores(agg, metric)
            self.pred[k] = agg.argmax(axis=1)
            self.correct[k] = self.pred[k] == labels
        self._gate_conf = np.ascontiguousarray(self.conf[: n - 1])

    def outcome(self, thresholds) -> tuple[float, float, np.ndarray]:
        """(accuracy, avg_cost, exit_counts) for one threshold vector."""
        t = np.asarray(thresholds, dtype=np.float64)
        if t.shape[0] != self.num_stages - 1:
            raise ValidationError(
                f"expected {self.num_stages - 1} thresholds, got {t.shape[0]}"
            )
        n_correct, counts = _kernels.cascade_outcome(
            self._gate_conf, self.correct, self.cumcost, t
        )
        avg_cost = _kernels.avg_cost_from_counts(counts, self.cumcost, self.num_examples)
        return n_correct / self.num_examples, avg_cost, counts

    def evaluate(self, thresholds) -> CascadeEvaluation:
        """Full evaluation, including the per-example exit trace."""
        t = np.asarray(thresholds, dtype=np.float64)
        if t.shape[0] != self.num_stages - 1:
            raise ValidationError(
                f"expected {self.num_stages - 1} thresholds, got {t.shape[0]}"
            )
        stages = _kernels.exit_stages(self._gate_conf, t)
        idx = stages - 1
        rows = np.arange(self.num_examples)
        counts = np.bincount(idx, minlength=self.num_stages).astype(np.int64)
        predicted = self.pred[idx, rows]
        accuracy = float(self.correct[idx, rows].sum() / self.num_examples)
        avg_cost = _kernels.avg_cost_from_counts(counts, self.cumcost, self.num_examples)
        return CascadeEvaluation(
            accuracy=accuracy,
            avg_cost=avg_cost,
            worst_case_cost=float(self.cumcost[-1]),
            exit_ratios=tuple(float(v) for v in counts / self.num_examples),
            exit_counts=tuple(int(v) for v in counts),
            exit_stage=stages,
            predicted_labels=predicted,
            confidence_at_exit=self.conf[idx, rows],
        )

    def evaluate_ensemble(self) -> CascadeEvaluation:
        """All models applied, no early exit; exit_ratios = (0, ..., 0, 1)."""
        n = self.num_stages
        rows = np.arange(self.num_examples)
        last = np.full(self.num_examples, n, dtype=np.int64)
        counts = np.zeros(n, dtype=np.int64)
        counts[-1] = self.num_examples
        return CascadeEvaluation(
            accuracy=float(self.correct[n - 1].sum() / self.num_examples),
            avg_cost=_kernels.avg_cost_from_counts(counts, self.cumcost, self.num_examples),
            worst_case_cost=float(self.cumcost[-1]),
            exit_ratios=tuple(float(v) for v in counts / self.num_examples),
            exit_counts=tuple(int(v) for v in counts),
            exit_stage=last,
            predicted_labels=self.pred[n - 1].copy(),
            confidence_at_exit=self.conf[n - 1, rows],
        )


def evaluate_cascade(spec: CascadeSpec, pool: ModelPool) -> CascadeEvaluation:
    """Simulate the cascade over every example in the pool."""
    spec.validate(pool)
    table = CascadeTable(pool, spec.model_ids, spec.metric, spec.aggregation)
    return table.evaluate(spec.thresholds)


def evaluate_ensemble(model_ids, pool: ModelPool,
                      aggregation: AggregationMode = AggregationMode.MEAN_LOGITS,
                      metric: ConfidenceMetric = ConfidenceMetric.MAX_PROB) -> CascadeEvaluation:
    """Mean-aggregate all models, argmax once; cost is the full stack.

    `metric` only affects the reported per-example confidence trace.
    """
    table = CascadeTable(pool, model_ids, metric, aggregation)
    return table.evaluate_ensemble()


def cost_from_exit_ratios(costs, exit_ratios) -> float:
    """Average cost implied by per-stage exit fractions.

    Stage-k exits pay the cumulative cost of stages 1..k, so this is
    sum_k ratio_k * cumsum(costs)_k.
    """
    costs = np.asarray(costs, dtype=np.float64)
    ratios = np.asarray(exit_ratios, dtype=np.float64)
    if costs.shape != ratios.shape or costs.ndim != 1:
        raise ValidationError(
            f"costs and exit_ratios must be 1-D and equal length, got {costs.shape} vs {ratios.shape}"
        )
    if np.any(ratios < 0):
        raise ValidationError("exit ratios must be non-negative")
    if abs(ratios.sum() - 1.0) > 1e-6:
        raise ValidationError(f"exit ratios must sum to 1, got {ratios.sum()}")
    return float(np.dot(ratios, np.cumsum(costs)))
