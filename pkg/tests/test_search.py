import itertools

import numpy as np
import pytest

from cascadekit import (
    AccuracyFloor,
    AggregationMode,
    CascadeSpec,
    ConfidenceMetric,
    CostBudget,
    InfeasibleTargetError,
    MatchEnsemble,
    ValidationError,
    build_threshold_grid,
    evaluate_cascade,
    evaluate_ensemble,
    search_thresholds,
    threshold_sweep,
)

from conftest import make_synth


def brute_force_thresholds(model_ids, pool, target, grid,
                           metric=ConfidenceMetric.MAX_PROB,
                           aggregation=AggregationMode.MEAN_LOGITS):
    """Exhaustive product enumeration with the documented tie-break order.

    Deliberately goes through evaluate_cascade per grid point, independent of
    the search's incremental path.
    """
    if isinstance(target, MatchEnsemble):
        ens = evaluate_ensemble(model_ids, pool, aggregation)
        target = AccuracyFloor(max(ens.accuracy - target.slack, 0.0))
    best_key = None
    best = None
    for vec in itertools.product(*grid.stages):
        spec = CascadeSpec(model_ids=tuple(model_ids), thresholds=vec,
                           metric=metric, aggregation=aggregation)
        ev = evaluate_cascade(spec, pool)
        if isinstance(target, CostBudget):
            if ev.avg_cost > target.limit:
                continue
            key = (-ev.accuracy, ev.avg_cost, vec)
        else:
            if ev.accuracy < target.floor:
                continue
            key = (ev.avg_cost, -ev.accuracy, vec)
        if best_key is None or key < best_key:
            best_key = key
            best = (vec, ev)
    return best


class TestGrid:
    def test_contains_sentinels_and_order_stats(self, synth_pool):
        grid = build_threshold_grid(["m0", "m1"], synth_pool, grid_resolution=2)
        from cascadekit import CascadeTable
        table = CascadeTable(synth_pool, ("m0", "m1"), ConfidenceMetric.MAX_PROB,
                             AggregationMode.MEAN_LOGITS)
        scores = table.conf[0]
        cands = grid.stages[0]
        for needed in (0.0, float(np.median(scores)), float(scores.max()), 1.0):
            assert any(abs(cand - needed) < 1e-12 for cand in cands)

    def test_identical_confidences_collapse(self):
        import cascadekit as ck
        logits = np.tile(np.array([[1.0, 0.0]], dtype=np.float32), (50, 1))
        entries = [
            ck.PredictionSet(model_id="x", model_type="x", logits=logits, cost=1.0),
            ck.PredictionSet(model_id="y", model_type="y", logits=logits, cost=2.0),
        ]
        pool = ck.ModelPool(entries, ck.LabeledDataset(np.zeros(50, dtype=np.int64)))
        grid = build_threshold_grid(["x", "y"], pool, grid_resolution=50)
        conf = 1 / (1 + np.exp(-1.0))
        assert len(grid.stages[0]) == 3
        assert grid.stages[0][0] == 0.0 and grid.stages[0][2] == 1.0
        assert grid.stages[0][1] == pytest.approx(conf, abs=1e-12)

    def test_candidate_count_cap(self):
        pool = make_synth(n=1000, seed=2)
        grid = build_threshold_grid(["m0", "m1"], pool, grid_resolution=100)
        assert len(grid.stages[0]) <= 103

    def test_resolution_validation(self, synth_pool):
        with pytest.raises(ValidationError):
            build_threshold_grid(["m0", "m1"], synth_pool, grid_resolution=1)


def test_single_model_returns_empty_thresholds(synth_pool):
    thresholds, ev = search_thresholds(["m1"], synth_pool, CostBudget(10.0))
    assert thresholds == ()
    assert ev.avg_cost == 4.0


def test_match_ensemble_beats_ensemble_cost(synth_pool):
    ens = evaluate_ensemble(["m0", "m1"], synth_pool)
    thresholds, ev = search_thresholds(["m0", "m1"], synth_pool, MatchEnsemble(0.0),
                                       grid_resolution=50)
    assert ev.accuracy >= ens.accuracy
    assert ev.avg_cost <= ens.avg_cost


@pytest.mark.parametrize("seed", range(3))
@pytest.mark.parametrize("target_kind", ["budget", "floor"])
def test_search_matches_brute_force_two_models(seed, target_kind):
    pool = make_synth(n=400, seed=seed)
    grid = build_threshold_grid(["m0", "m1"], pool, grid_resolution=12)
    ens = evaluate_ensemble(["m0", "m1"], pool)
    solo = evaluate_cascade(CascadeSpec(model_ids=("m0",)), pool)
    if target_kind == "budget":
        target = CostBudget((solo.avg_cost + ens.avg_cost) / 2)
    else:
        target = AccuracyFloor((solo.accuracy + ens.accuracy) / 2)
    got_t, got_ev = search_thresholds(["m0", "m1"], pool, target, grid=grid)
    want_t, want_ev = brute_force_thresholds(["m0", "m1"], pool, target, grid)
    assert got_t == want_t
    assert got_ev.accuracy == want_ev.accuracy
    assert got_ev.avg_cost == want_ev.avg_cost


@pytest.mark.parametrize("seed", range(2))
def test_search_matches_brute_force_three_models(seed):
    pool = make_synth(num_models=3, n=300, accuracies=(0.6, 0.72, 0.85),
                      costs=(1.0, 3.0, 9.0), seed=seed)
    ids = ["m0", "m1", "m2"]
    grid = build_threshold_grid(ids, pool, grid_resolution=8)
    for target in (CostBudget(6.0), AccuracyFloor(0.8)):
        got_t, got_ev = search_thresholds(ids, pool, target, grid=grid)
        want_t, want_ev = brute_force_thresholds(ids, pool, target, grid)
        assert got_t == want_t
        assert (got_ev.accuracy, got_ev.avg_cost) == (want_ev.accuracy, want_ev.avg_cost)


def test_selected_thresholds_are_grid_members(synth_pool):
    grid = build_threshold_grid(["m0", "m1"], synth_pool, grid_resolution=20)
    thresholds, _ = search_thresholds(["m0", "m1"], synth_pool, CostBudget(3.0), grid=grid)
    assert thresholds[0] in grid.stages[0]


def test_budget_never_violated(synth_pool):
    budget = 2.5
    _, ev = search_thresholds(["m0", "m1"], synth_pool, CostBudget(budget))
    assert ev.avg_cost <= budget


def test_floor_never_violated(synth_pool):
    floor = 0.8
    _, ev = search_thresholds(["m0", "m1"], synth_pool, AccuracyFloor(floor))
    assert ev.accuracy >= floor


def test_infeasible_budget_reports_best(synth_pool):
    with pytest.raises(InfeasibleTargetError) as exc:
        search_thresholds(["m0", "m1"], synth_pool, CostBudget(0.5))
    assert exc.value.best_achievable == pytest.approx(1.0)  # cheapest is model 1 alone


def test_infeasible_floor_reports_best(synth_pool):
    with pytest.raises(InfeasibleTargetError) as exc:
        search_thresholds(["m0", "m1"], synth_pool, AccuracyFloor(0.999))
    assert exc.value.best_achievable is not None
    assert exc.value.best_achievable < 0.999


def test_search_deterministic(synth_pool):
    a = search_thresholds(["m0", "m1"], synth_pool, CostBudget(3.0))
    b = search_thresholds(["m0", "m1"], synth_pool, CostBudget(3.0))
    assert a[0] == b[0]


class TestSweep:
    def test_endpoints(self, synth_pool):
        rows = threshold_sweep(["m0", "m1"], synth_pool, grid_resolution=10)
        solo = evaluate_cascade(CascadeSpec(model_ids=("m0",)), synth_pool)
        ens = evaluate_ensemble(["m0", "m1"], synth_pool)
        t0, acc0, cost0 = rows[0]
        t1, acc1, cost1 = rows[-1]
        assert t0 == 0.0 and acc0 == solo.accuracy and cost0 == solo.avg_cost
        assert t1 == 1.0 and acc1 == ens.accuracy and cost1 == ens.avg_cost

    def test_cost_non_decreasing(self, synth_pool):
        rows = threshold_sweep(["m0", "m1"], synth_pool, grid_resolution=25)
        costs = [cost for _, _, cost in rows]
        assert all(a <= b for a, b in zip(costs, costs[1:]))

    def test_plateau_peak_on_calibrated_pool(self, synth_pool):
        rows = threshold_sweep(["m0", "m1"], synth_pool, grid_resolution=25)
        accs = [acc for _, acc, _ in rows]
        assert max(accs) >= max(accs[0], accs[-1])

    def test_stage_out_of_range(self, synth_pool):
        with pytest.raises(ValidationError, match="out of range"):
            threshold_sweep(["m0", "m1"], synth_pool, stage=2)


def test_logit_gap_grid_has_never_exit_candidate():
    pool = make_synth(n=500, seed=6, accuracies=(0.7, 0.9), costs=(1.0, 3.0))
    ids = ["m0", "m1"]
    grid = build_threshold_grid(ids, pool, metric=ConfidenceMetric.LOGIT_GAP,
                                grid_resolution=10)
    ens = evaluate_ensemble(ids, pool)
    thresholds, ev = search_thresholds(ids, pool, MatchEnsemble(0.0),
                                       metric=ConfidenceMetric.LOGIT_GAP, grid=grid)
    assert ev.accuracy >= ens.accuracy
