"""Outer search: which models should form the committee.

Candidates are ordered tuples of model *types* (lengths 2..n_max, with
repetition), instantiated with distinct trained replicates: a type used at
several positions takes replicate 0, 1, ... in position order, so
interchangeable replicates are never double-counted. Each candidate gets
its own percentile threshold search; the best candidate wins under a total
tie-break order (objective, fewer models, lower worst-case cost, lexical
ids), which makes the reduction schedule-independent and safe to fan out
over worker threads.
"""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .confidence import ConfidenceMetric
from .engine import AggregationMode, CascadeEvaluation, CascadeSpec, CascadeTable
from .errors import InfeasibleTargetError, ValidationError
from .pool import ModelPool, PredictionSet
from .search import (
    DEFAULT_ENSEMBLE_SLACK,
    DEFAULT_GRID_RESOLUTION,
    AccuracyFloor,
    CostBudget,
    MatchEnsemble,
    ThresholdTarget,
    _search_on_table,
    build_threshold_grid,
)
import enum


class OrderPolicy(enum.Enum):
    ALL_ORDERS = "all-orders"
    NON_DECREASING_COST = "non-decreasing-cost"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class MaxAccuracy:
    """Best accuracy with avg_cost <= budget."""

    budget: float


@dataclass(frozen=True)
class MinCost:
    """Cheapest cascade with accuracy >= floor."""

    floor: float


Objective = MaxAccuracy | MinCost


@dataclass(frozen=True)
class SelectionProblem:
    pool: ModelPool
    objective: Objective
    n_max: int = 4
    worst_case_bound: float | None = None
    metric: ConfidenceMetric = ConfidenceMetric.MAX_PROB
    aggregation: AggregationMode = AggregationMode.MEAN_LOGITS
    grid_resolution: int = DEFAULT_GRID_RESOLUTION
    order_policy: OrderPolicy = OrderPolicy.ALL_ORDERS

    def __post_init__(self):
        if self.n_max < 1:
            raise ValidationError(f"n_max must be >= 1, got {self.n_max}")
        if self.worst_case_bound is not None and not (self.worst_case_bound > 0):
            raise ValidationError("worst_case_bound must be positive")
        if isinstance(self.objective, MaxAccuracy) and not (self.objective.budget > 0):
            raise ValidationError("cost budget must be positive")
        if isinstance(self.objective, MinCost) and not (0.0 <= self.objective.floor <= 1.0):
            raise ValidationError("accuracy floor must be in [0, 1]")


@dataclass(frozen=True)
class CandidateEnumeration:
    """Instantiated candidate tuples plus bookkeeping on what was dropped."""

    candidates: tuple[tuple[str, ...], ...]
    skipped_replicates: int
    filtered_order: int
    filtered_worst_case: int


def _replicates_by_type(pool: ModelPool) -> dict[str, list[PredictionSet]]:
    by_type: dict[str, list[PredictionSet]] = {}
    for e in pool.entries:
        by_type.setdefault(e.model_type, []).append(e)
    for entries in by_type.values():
        entries.sort(key=lambda e: e.replicate_index)
    return by_type


def _instantiate(type_tuple, by_type):
    """Assign replicate 0, 1, ... to repeated types in position order."""
    used: dict[str, int] = {}
    ids = []
    for t in type_tuple:
        idx = used.get(t, 0)
        replicates = by_type[t]
        if idx >= len(replicates):
            return None
        ids.append(replicates[idx].model_id)
        used[t] = idx + 1
    return tuple(ids)


def enumerate_candidates(problem: SelectionProblem) -> CandidateEnumeration:
    """Ordered type tuples of length 2..n_max, instantiated with replicates.

    Tuples needing more replicates of a type than the pool holds are skipped
    (and counted); the order policy and worst-case bound filter the rest.
    """
    by_type = _replicates_by_type(problem.pool)
    types = sorted(by_type)
    cost_of = {mid: e.cost for mid, e in
               ((e.model_id, e) for entries in by_type.values() for e in entries)}
    candidates = []
    skipped = 0
    filtered_order = 0
    filtered_worst = 0
    for length in range(2, problem.n_max + 1):
        for type_tuple in itertools.product(types, repeat=length):
            ids = _instantiate(type_tuple, by_type)
            if ids is None:
                skipped += 1
                continue
            costs = [cost_of[mid] for mid in ids]
            if problem.order_policy is OrderPolicy.NON_DECREASING_COST:
                if any(a > b for a, b in zip(costs, costs[1:])):
                    filtered_order += 1
                    continue
            if problem.worst_case_bound is not None and sum(costs) > problem.worst_case_bound:
                filtered_worst += 1
                continue
            candidates.append(ids)
    return CandidateEnumeration(
        candidates=tuple(candidates),
        skipped_replicates=skipped,
        filtered_order=filtered_order,
        filtered_worst_case=filtered_worst,
    )


@dataclass(frozen=True)
class SelectionResult:
    spec: CascadeSpec
    evaluation: CascadeEvaluation
    candidates_searched: int
    candidates_infeasible: int


def _solitary_candidates(problem: SelectionProblem):
    by_type = _replicates_by_type(problem.pool)
    out = []
    for t in sorted(by_type):
        e = by_type[t][0]
        if problem.worst_case_bound is not None and e.cost > problem.worst_case_bound:
            continue
        out.append((e.model_id,))
    return out


def _search_candidate(problem: SelectionProblem, ids):
    table = CascadeTable(problem.pool, ids, problem.metric, problem.aggregation)
    grid = build_threshold_grid(ids, problem.pool, problem.metric, problem.aggregation,
                                problem.grid_resolution, table=table)
    if isinstance(problem.objective, MaxAccuracy):
        target: ThresholdTarget = CostBudget(problem.objective.budget)
    else:
        target = AccuracyFloor(problem.objective.floor)
    try:
        thresholds, ev = _search_on_table(table, target, grid)
    except InfeasibleTargetError as err:
        return ids, None, err.best_achievable
    return ids, (thresholds, ev), None


def select_cascade(problem: SelectionProblem, jobs: int = 1) -> SelectionResult:
    """Exhaustive search over candidate tuples, each with threshold search.

    Solitary models are always included as candidates, so the result is
    never worse than the best single model meeting the constraints. Raises
    InfeasibleTargetError with a nearest-miss diagnostic when nothing
    qualifies.
    """
    enum_result = enumerate_candidates(problem)
    candidates = _solitary_candidates(problem) + list(enum_result.candidates)
    if not candidates:
        raise InfeasibleTargetError(
            "no candidate cascades to search (check worst-case bound and pool)"
        )

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool_exec:
            results = list(pool_exec.map(lambda ids: _search_candidate(problem, ids), candidates))
    else:
        results = [_search_candidate(problem, ids) for ids in candidates]

    maximize_acc = isinstance(problem.objective, MaxAccuracy)
    best_key = None
    best = None
    nearest_miss = None
    n_infeasible = 0
    for ids, found, miss in results:
        if found is None:
            n_infeasible += 1
            if miss is not None:
                if nearest_miss is None:
                    nearest_miss = miss
                elif maximize_acc:
                    nearest_miss = min(nearest_miss, miss)  # closest cost to the budget
                else:
                    nearest_miss = max(nearest_miss, miss)  # closest accuracy to the floor
            continue
        thresholds, ev = found
        worst = ev.worst_case_cost
        objective = -ev.accuracy if maximize_acc else ev.avg_cost
        key = (objective, len(ids), worst, ids)
        if best_key is None or key < best_key:
            best_key = key
            best = (ids, thresholds, ev)
    if best is None:
        what = "budget" if maximize_acc else "accuracy floor"
        raise InfeasibleTargetError(
            f"no candidate satisfies the {what}; nearest miss: {nearest_miss}",
            best_achievable=nearest_miss,
        )
    ids, thresholds, ev = best
    spec = CascadeSpec(model_ids=ids, thresholds=thresholds,
                       metric=problem.metric, aggregation=problem.aggregation)
    return SelectionResult(
        spec=spec,
        evaluation=ev,
        candidates_searched=len(candidates),
        candidates_infeasible=n_infeasible,
    )


@dataclass(frozen=True)
class ParetoFrontier:
    """Non-dominated (avg_cost, accuracy) points, sorted by cost ascending."""

    points: tuple[tuple[CascadeSpec, CascadeEvaluation], ...]


def pareto_frontier(evaluations) -> ParetoFrontier:
    """Exactly the non-dominated subset of (spec, evaluation) pairs.

    A point is dominated if another has avg_cost <= and accuracy >= with at
    least one strict. Duplicate (cost, accuracy) points keep the
    lexicographically smallest spec.
    """
    items = list(evaluations)
    if not items:
        raise ValidationError("pareto_frontier needs at least one evaluation")
    def spec_key(spec: CascadeSpec):
        return (spec.model_ids, spec.thresholds)
    items.sort(key=lambda se: (se[1].avg_cost, -se[1].accuracy, spec_key(se[0])))
    kept = []
    best_acc = -1.0
    for spec, ev in items:
        if ev.accuracy > best_acc:
            kept.append((spec, ev))
            best_acc = ev.accuracy
    return ParetoFrontier(points=tuple(kept))


def evaluate_candidate_committees(pool: ModelPool, n_max: int = 3, mode: str = "ensemble",
                                  metric: ConfidenceMetric = ConfidenceMetric.MAX_PROB,
                                  aggregation: AggregationMode = AggregationMode.MEAN_LOGITS,
                                  grid_resolution: int = 20,
                                  slack: float = DEFAULT_ENSEMBLE_SLACK):
    """(spec, evaluation) for every committee of 1..n_max models.

    "ensemble" evaluates each candidate with no early exit; "cascade" tunes
    each candidate's thresholds to match its own ensemble accuracy within
    `slack` at minimal cost. Feeds pareto_frontier.
    """
    if mode not in ("ensemble", "cascade"):
        raise ValidationError(f"mode must be 'ensemble' or 'cascade', got {mode!r}")
    probe = SelectionProblem(pool=pool, objective=MaxAccuracy(budget=float("inf")),
                             n_max=n_max, metric=metric, aggregation=aggregation,
                             grid_resolution=grid_resolution)
    candidates = _solitary_candidates(probe) + list(enumerate_candidates(probe).candidates)
    points = []
    for ids in candidates:
        table = CascadeTable(pool, ids, metric, aggregation)
        if mode == "ensemble" or len(ids) == 1:
            ev = table.evaluate_ensemble()
            thresholds = (1.0,) * (len(ids) - 1)
        else:
            grid = build_threshold_grid(ids, pool, metric, aggregation,
                                        grid_resolution, table=table)
            thresholds, ev = _search_on_table(table, MatchEnsemble(slack), grid)
        spec = CascadeSpec(model_ids=ids, thresholds=thresholds,
                           metric=metric, aggregation=aggregation)
        points.append((spec, ev))
    return points


@dataclass(frozen=True)
class SelfCascadeResult:
    """Two-resolution cascade of one model, with its speedup bookkeeping."""

    spec: CascadeSpec
    evaluation: CascadeEvaluation
    cost_ratio_vs_high: float  # high-resolution-alone cost / cascade avg_cost


def assemble_self_cascade(low: PredictionSet, high: PredictionSet,
                          target: ThresholdTarget, pool: ModelPool,
                          metric: ConfidenceMetric = ConfidenceMetric.MAX_PROB,
                          aggregation: AggregationMode = AggregationMode.MEAN_LOGITS,
                          grid_resolution: int = DEFAULT_GRID_RESOLUTION) -> SelfCascadeResult:
    """Cascade the same architecture at a low then a high input resolution."""
    if low.model_type != high.model_type:
        raise ValidationError(
            f"self-cascade stages must share model_type, got "
            f"'{low.model_type}' vs '{high.model_type}'"
        )
    if low.resolution is None or high.resolution is None:
        raise ValidationError("self-cascade entries need resolution metadata")
    if not (low.resolution < high.resolution):
        raise ValidationError(
            f"low resolution {low.resolution} must be below high {high.resolution}"
        )
    if not (low.cost < high.cost):
        raise ValidationError("low-resolution stage must be cheaper than the high one")
    ids = (low.model_id, high.model_id)
    table = CascadeTable(pool, ids, metric, aggregation)
    grid = build_threshold_grid(ids, pool, metric, aggregation, grid_resolution, table=table)
    thresholds, ev = _search_on_table(table, target, grid)
    spec = CascadeSpec(model_ids=ids, thresholds=thresholds,
                       metric=metric, aggregation=aggregation)
    return SelfCascadeResult(spec=spec, evaluation=ev,
                             cost_ratio_vs_high=high.cost / ev.avg_cost)
