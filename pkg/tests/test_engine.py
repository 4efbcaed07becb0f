import numpy as np
import pytest

from cascadekit import (
    AggregationMode,
    CascadeSpec,
    ConfidenceMetric,
    ValidationError,
    cost_from_exit_ratios,
    evaluate_cascade,
    evaluate_ensemble,
)

from conftest import make_synth

# sigmoid confidences for the hand fixture, frozen from mpmath
CONF_EX0_STAGE1 = 0.8807970780
CONF_EX1_STAGE1 = 0.5249791875
CONF_EX2_STAGE1 = 0.7310585786
CONF_EX1_STAGE2 = 0.8249137318


def spec2(t1, **kw):
    return CascadeSpec(model_ids=("a", "b"), thresholds=(t1,), **kw)


class TestHandFixture:
    def test_trace(self, two_model_pool):
        ev = evaluate_cascade(spec2(0.6), two_model_pool)
        assert list(ev.exit_stage) == [1, 2, 1]
        assert list(ev.predicted_labels) == [0, 0, 1]
        assert ev.accuracy == 1.0
        assert ev.exit_ratios == (2 / 3, 1 / 3)
        assert ev.exit_counts == (2, 1)
        assert ev.avg_cost == pytest.approx(7 / 3, abs=1e-12)
        assert ev.worst_case_cost == 5.0

    def test_confidences_at_exit(self, two_model_pool):
        ev = evaluate_cascade(spec2(0.6), two_model_pool)
        assert ev.confidence_at_exit[0] == pytest.approx(CONF_EX0_STAGE1, abs=1e-9)
        assert ev.confidence_at_exit[1] == pytest.approx(CONF_EX1_STAGE2, abs=1e-9)
        assert ev.confidence_at_exit[2] == pytest.approx(CONF_EX2_STAGE1, abs=1e-9)

    def test_threshold_one_reduces_to_ensemble(self, two_model_pool):
        cascade = evaluate_cascade(spec2(1.0), two_model_pool)
        ens = evaluate_ensemble(["a", "b"], two_model_pool)
        assert cascade.accuracy == ens.accuracy
        assert cascade.avg_cost == ens.avg_cost == 5.0
        assert cascade.exit_ratios == ens.exit_ratios == (0.0, 1.0)
        assert np.array_equal(cascade.predicted_labels, ens.predicted_labels)
        assert np.array_equal(cascade.exit_stage, ens.exit_stage)

    def test_threshold_zero_reduces_to_first_model(self, two_model_pool):
        cascade = evaluate_cascade(spec2(0.0), two_model_pool)
        solo = evaluate_cascade(CascadeSpec(model_ids=("a",)), two_model_pool)
        assert cascade.accuracy == solo.accuracy
        assert cascade.avg_cost == solo.avg_cost == 1.0
        assert cascade.exit_ratios == (1.0, 0.0)
        assert np.array_equal(cascade.predicted_labels, solo.predicted_labels)

    def test_ensemble_aggregate(self, two_model_pool):
        ens = evaluate_ensemble(["a", "b"], two_model_pool)
        # mean logits: [1,0], [1.55,0], [0,0.5] -> classes 0, 0, 1
        assert list(ens.predicted_labels) == [0, 0, 1]
        assert ens.accuracy == 1.0


def test_single_model_ensemble_is_solitary(two_model_pool):
    ens = evaluate_ensemble(["b"], two_model_pool)
    solo = evaluate_cascade(CascadeSpec(model_ids=("b",)), two_model_pool)
    assert ens.accuracy == solo.accuracy
    assert ens.avg_cost == solo.avg_cost == 4.0
    assert ens.exit_ratios == (1.0,)


def test_mean_probs_close_to_mean_logits_on_calibrated_pool():
    pool = make_synth(n=2000, seed=8)
    a = evaluate_ensemble(["m0", "m1"], pool, AggregationMode.MEAN_LOGITS)
    b = evaluate_ensemble(["m0", "m1"], pool, AggregationMode.MEAN_PROBS)
    assert abs(a.accuracy - b.accuracy) < 0.01


def test_mean_probs_gates_on_probability_vector(two_model_pool):
    # mean-prob aggregate of example 1 at stage 2: (softmax([.1,0])+softmax([3,0]))/2
    # (logits are stored as float32, so quantize the inputs the same way)
    p1 = 1 / (1 + np.exp(-np.float64(np.float32(0.1))))
    p2 = 1 / (1 + np.exp(-np.float64(np.float32(3.0))))
    want = (p1 + p2) / 2
    spec = spec2(want - 1e-9, aggregation=AggregationMode.MEAN_PROBS)
    ev = evaluate_cascade(spec, two_model_pool)
    assert ev.confidence_at_exit[1] == pytest.approx(want, abs=1e-12)


def test_cost_from_exit_ratios_paper_accounting():
    avg = cost_from_exit_ratios([1.8, 10.3, 10.3, 10.3], [0.673, 0.216, 0.056, 0.055])
    assert avg == pytest.approx(6.8779, abs=1e-9)


def test_cost_from_exit_ratios_degenerate():
    assert cost_from_exit_ratios([2.0, 5.0, 7.0], [1.0, 0.0, 0.0]) == 2.0
    assert cost_from_exit_ratios([2.0, 5.0, 7.0], [0.0, 0.0, 1.0]) == 14.0


def test_cost_from_exit_ratios_validates():
    with pytest.raises(ValidationError, match="equal length"):
        cost_from_exit_ratios([1.0, 2.0], [1.0])
    with pytest.raises(ValidationError, match="sum to 1"):
        cost_from_exit_ratios([1.0, 2.0], [0.5, 0.4])


class TestSpecValidation:
    def test_unknown_model(self, two_model_pool):
        with pytest.raises(ValidationError, match="unknown model_id"):
            evaluate_cascade(CascadeSpec(model_ids=("a", "zzz"), thresholds=(0.5,)),
                             two_model_pool)

    def test_threshold_count(self, two_model_pool):
        with pytest.raises(ValidationError, match="thresholds"):
            evaluate_cascade(CascadeSpec(model_ids=("a", "b")), two_model_pool)

    def test_entry_reuse_rejected(self, two_model_pool):
        with pytest.raises(ValidationError, match="once"):
            evaluate_cascade(CascadeSpec(model_ids=("a", "a"), thresholds=(0.5,)),
                             two_model_pool)

    def test_logit_gap_with_mean_probs_rejected(self, two_model_pool):
        spec = CascadeSpec(model_ids=("a", "b"), thresholds=(0.5,),
                           metric=ConfidenceMetric.LOGIT_GAP,
                           aggregation=AggregationMode.MEAN_PROBS)
        with pytest.raises(ValidationError, match="logit-gap"):
            evaluate_cascade(spec, two_model_pool)

    def test_threshold_range(self, two_model_pool):
        with pytest.raises(ValidationError, match="outside"):
            evaluate_cascade(spec2(1.5), two_model_pool)


def synth_spec(t1):
    return CascadeSpec(model_ids=("m0", "m1"), thresholds=(t1,))


class TestInvariants:
    def test_exit_ratio_conservation(self, synth_pool):
        ev = evaluate_cascade(synth_spec(0.7), synth_pool)
        assert sum(ev.exit_counts) == synth_pool.num_examples
        assert sum(ev.exit_ratios) == pytest.approx(1.0, abs=1e-9)

    def test_cost_bounds(self, synth_pool):
        ev = evaluate_cascade(synth_spec(0.7), synth_pool)
        cost1 = synth_pool.entry("m0").cost
        assert cost1 <= ev.avg_cost <= ev.worst_case_cost

    def test_stage_n_totality(self, synth_pool):
        ev = evaluate_cascade(synth_spec(1.0), synth_pool)
        assert np.all(ev.exit_stage <= 2)
        assert np.all(ev.exit_stage >= 1)

    def test_permutation_stability(self):
        pool = make_synth(n=400, seed=21)
        perm = np.random.default_rng(0).permutation(400)
        shuffled = pool.subset(perm, split_tag="shuffled")
        spec = CascadeSpec(model_ids=("m0", "m1"), thresholds=(0.65,))
        a = evaluate_cascade(spec, pool)
        b = evaluate_cascade(spec, shuffled)
        assert a.accuracy == b.accuracy
        assert a.avg_cost == b.avg_cost
        assert a.exit_ratios == b.exit_ratios

    def test_argmax_invariant_under_positive_scaling(self):
        pool = make_synth(n=300, seed=13)
        scaled_entries = [
            type(e)(model_id=e.model_id, model_type=e.model_type,
                    logits=e.logits * np.float32(3.7), cost=e.cost)
            for e in pool.entries
        ]
        scaled = type(pool)(scaled_entries, pool.labels)
        base = evaluate_ensemble(["m0", "m1"], pool)
        big = evaluate_ensemble(["m0", "m1"], scaled)
        assert np.array_equal(base.predicted_labels, big.predicted_labels)

    def test_cost_monotone_in_threshold(self, synth_pool):
        spec_lo = synth_spec(0.4)
        spec_hi = synth_spec(0.9)
        assert (evaluate_cascade(spec_hi, synth_pool).avg_cost
                >= evaluate_cascade(spec_lo, synth_pool).avg_cost)


def test_cascade_spec_model_ids_from_spec_example(two_model_pool):
    # spec exposed via spec2(...) keeps order; the engine respects it
    ev = evaluate_cascade(CascadeSpec(model_ids=("b", "a"), thresholds=(0.0,)), two_model_pool)
    assert ev.avg_cost == 4.0  # first stage is the expensive model now
