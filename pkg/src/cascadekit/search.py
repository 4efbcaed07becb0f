"""Threshold selection for a fixed model sequence.

Candidate thresholds are the percentiles of each gated stage's confidence
distribution (computed as if every example reached that stage), plus the
sentinels 0 and 1. The search enumerates the candidate grid depth-first and
prunes subtrees whose cheapest completion already violates the cost budget
or cannot beat the incumbent; only cost is monotone in the thresholds, so
accuracy is never used to prune.

Tie-breaking is a total order, so results are deterministic and independent
of evaluation schedule:
  cost budget:    max accuracy, then min avg_cost, then smallest thresholds
  accuracy floor: min avg_cost, then max accuracy, then smallest thresholds
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .confidence import ConfidenceMetric
from .engine import AggregationMode, CascadeEvaluation, CascadeSpec, CascadeTable
from .errors import InfeasibleTargetError, ValidationError

DEFAULT_GRID_RESOLUTION = 100
DEFAULT_ENSEMBLE_SLACK = 0.001  # accuracy fraction (0.1 percentage points)


@dataclass(frozen=True)
class CostBudget:
    """Maximize accuracy subject to avg_cost <= limit."""

    limit: float

    def __post_init__(self):
        if not (self.limit > 0):
            raise ValidationError(f"cost budget must be positive, got {self.limit}")


@dataclass(frozen=True)
class AccuracyFloor:
    """Minimize avg_cost subject to accuracy >= floor."""

    floor: float

    def __post_init__(self):
        if not (0.0 <= self.floor <= 1.0):
            raise ValidationError(f"accuracy floor must be in [0, 1], got {self.floor}")


@dataclass(frozen=True)
class MatchEnsemble:
    """Minimize avg_cost while staying within `slack` of the full-ensemble accuracy."""

    slack: float = DEFAULT_ENSEMBLE_SLACK

    def __post_init__(self):
        if self.slack < 0:
            raise ValidationError(f"slack must be >= 0, got {self.slack}")


ThresholdTarget = CostBudget | AccuracyFloor | MatchEnsemble


@dataclass(frozen=True)
class ThresholdGrid:
    """Per-gate sorted candidate thresholds (percentiles plus sentinels)."""

    stages: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        for cands in self.stages:
            if len(cands) == 0:
                raise ValidationError("grid stage has no candidates")
            if list(cands) != sorted(cands):
                raise ValidationError("grid candidates must be sorted ascending")

    @property
    def num_gates(self) -> int:
        return len(self.stages)


def build_threshold_grid(model_ids, pool, metric: ConfidenceMetric = ConfidenceMetric.MAX_PROB,
                         aggregation: AggregationMode = AggregationMode.MEAN_LOGITS,
                         grid_resolution: int = DEFAULT_GRID_RESOLUTION,
                         table: CascadeTable | None = None) -> ThresholdGrid:
    """Percentile grid of each gated stage's aggregate-confidence scores.

    Stage-k scores are unconditional (no earlier threshold applied), which
    keeps the grid independent of the search state. With resolution g the
    candidates are the g+1 percentiles {0, 100/g, ..., 100} plus sentinels
    {0, 1}, deduplicated: at most g+3 per stage. For the unbounded
    logit-gap metric the sentinel 1 can be an attainable score, so a
    just-above-max candidate is added to keep "never exit" expressible.
    """
    if grid_resolution < 2:
        raise ValidationError(f"grid_resolution must be >= 2, got {grid_resolution}")
    if table is None:
        table = CascadeTable(pool, model_ids, metric, aggregation)
    qs = np.linspace(0.0, 100.0, grid_resolution + 1)
    stages = []
    for k in range(table.num_stages - 1):
        cands = np.percentile(table.conf[k], qs)
        cands = np.concatenate([cands, [0.0, 1.0]])
        if metric is ConfidenceMetric.LOGIT_GAP:
            top = float(table.conf[k].max())
            if top >= 1.0:
                cands = np.concatenate([cands, [np.nextafter(top, np.inf)]])
        stages.append(tuple(float(v) for v in np.unique(cands)))
    return ThresholdGrid(stages=tuple(stages))


def _better(key, best_key) -> bool:
    return best_key is None or key < best_key


def _search_on_table(table: CascadeTable, target: ThresholdTarget,
                     grid: ThresholdGrid) -> tuple[tuple[float, ...], CascadeEvaluation]:
    n = table.num_stages
    if isinstance(target, MatchEnsemble):
        ens = table.evaluate_ensemble()
        target = AccuracyFloor(max(ens.accuracy - target.slack, 0.0))

    if n == 1:
        ev = table.evaluate(())
        if isinstance(target, CostBudget) and ev.avg_cost > target.limit:
            raise InfeasibleTargetError(
                f"solitary model costs {ev.avg_cost:.6g}, above budget {target.limit:.6g}",
                best_achievable=ev.avg_cost,
            )
        if isinstance(target, AccuracyFloor) and ev.accuracy < target.floor:
            raise InfeasibleTargetError(
                f"solitary model accuracy {ev.accuracy:.6g} below floor {target.floor:.6g}",
                best_achievable=ev.accuracy,
            )
        return (), ev

    if grid.num_gates != n - 1:
        raise ValidationError(f"grid has {grid.num_gates} gate lists, cascade needs {n - 1}")

    mins = [cands[0] for cands in grid.stages]
    budget = target.limit if isinstance(target, CostBudget) else None
    floor = target.floor if isinstance(target, AccuracyFloor) else None

    best_key = None
    best = None           # (thresholds, accuracy, avg_cost)
    best_reject = None    # nearest-miss: max accuracy (floor) / min cost (budget)
    current = list(mins)

    def leaf(thresholds: tuple[float, ...]):
        nonlocal best_key, best, best_reject
        acc, cost, _ = table.outcome(thresholds)
        if budget is not None:
            if cost > budget:
                best_reject = cost if best_reject is None else min(best_reject, cost)
                return
            key = (-acc, cost, thresholds)
        else:
            if acc < floor:
                best_reject = acc if best_reject is None else max(best_reject, acc)
                return
            key = (cost, -acc, thresholds)
        if _better(key, best_key):
            best_key = key
            best = (thresholds, acc, cost)

    def descend(gate: int):
        nonlocal best_reject
        if gate == n - 1:
            leaf(tuple(current))
            return
        for cand in grid.stages[gate]:
            current[gate] = cand
            # cheapest completion: every remaining gate at its smallest
            # candidate, where everything still alive exits immediately
            tail = mins[gate + 1:]
            _, min_cost, _ = table.outcome(tuple(current[: gate + 1]) + tuple(tail))
            if budget is not None and min_cost > budget:
                # cost is monotone in this gate; larger candidates only cost more
                best_reject = min_cost if best_reject is None else min(best_reject, min_cost)
                break
            if floor is not None and best_key is not None and min_cost > best_key[0]:
                break
            descend(gate + 1)
        current[gate] = mins[gate]

    descend(0)

    if best is None:
        if budget is not None:
            raise InfeasibleTargetError(
                f"no grid point meets budget {budget:.6g}; cheapest achievable avg_cost "
                f"is {best_reject:.6g}",
                best_achievable=best_reject,
            )
        raise InfeasibleTargetError(
            f"no grid point reaches accuracy {floor:.6g}; best achievable accuracy "
            f"is {best_reject:.6g}",
            best_achievable=best_reject,
        )
    thresholds = best[0]
    return thresholds, table.evaluate(thresholds)


def search_thresholds(model_ids, pool, target: ThresholdTarget,
                      metric: ConfidenceMetric = ConfidenceMetric.MAX_PROB,
                      aggregation: AggregationMode = AggregationMode.MEAN_LOGITS,
                      grid: ThresholdGrid | None = None,
                      grid_resolution: int = DEFAULT_GRID_RESOLUTION,
                      ) -> tuple[tuple[float, ...], CascadeEvaluation]:
    """Pick thresholds for the given sequence to meet `target` on `pool`.

    The pool passed here is the selection split; evaluate the returned spec
    on a held-out split for honest reporting.
    """
    table = CascadeTable(pool, model_ids, metric, aggregation)
    if grid is None:
        grid = build_threshold_grid(model_ids, pool, metric, aggregation,
                                    grid_resolution, table=table)
    return _search_on_table(table, target, grid)


def threshold_sweep(model_ids, pool,
                    metric: ConfidenceMetric = ConfidenceMetric.MAX_PROB,
                    aggregation: AggregationMode = AggregationMode.MEAN_LOGITS,
                    stage: int = 1,
                    grid: ThresholdGrid | None = None,
                    grid_resolution: int = DEFAULT_GRID_RESOLUTION,
                    base_thresholds=None) -> list[tuple[float, float, float]]:
    """Evaluate every grid candidate for one gate, other gates fixed.

    Returns (threshold, accuracy, avg_cost) per candidate. For a 2-model
    cascade this traces the solitary-to-ensemble curve; its endpoints are
    the solitary model (t=0) and the full ensemble (t at the top sentinel).
    Unswept gates default to 1.0 (no early exit for probability metrics).
    """
    table = CascadeTable(pool, model_ids, metric, aggregation)
    n = table.num_stages
    if not (1 <= stage <= n - 1):
        raise ValidationError(f"stage {stage} out of range for {n}-model cascade")
    if grid is None:
        grid = build_threshold_grid(model_ids, pool, metric, aggregation,
                                    grid_resolution, table=table)
    if base_thresholds is None:
        base = [1.0] * (n - 1)
    else:
        base = [float(t) for t in base_thresholds]
        if len(base) != n - 1:
            raise ValidationError(f"expected {n - 1} base thresholds, got {len(base)}")
    rows = []
    for t in grid.stages[stage - 1]:
        vec = list(base)
        vec[stage - 1] = t
        acc, cost, _ = table.outcome(tuple(vec))
        rows.append((float(t), acc, cost))
    return rows


def make_spec(model_ids, thresholds, metric: ConfidenceMetric,
              aggregation: AggregationMode) -> CascadeSpec:
    return CascadeSpec(model_ids=tuple(model_ids), thresholds=tuple(thresholds),
                       metric=metric, aggregation=aggregation)
