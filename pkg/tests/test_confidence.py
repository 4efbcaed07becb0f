import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cascadekit import (
    ConfidenceMetric,
    LabeledDataset,
    PredictionSet,
    ValidationError,
    confidence,
    selective_accuracy,
    softmax,
)

# independently computed with mpmath (50 digits), frozen here
SOFTMAX_210 = (0.6652409558, 0.2447284711, 0.0900305732)
NEG_ENTROPY_210 = -0.8323955818

logit_vectors = st.lists(
    st.floats(min_value=-50, max_value=50, allow_nan=False), min_size=2, max_size=8
).map(lambda xs: np.array(xs, dtype=np.float64))

# gaps below ~36 keep exp() above float64 eps, so the strict bounds of the
# probability metrics are not blurred by underflow
moderate_logits = st.lists(
    st.floats(min_value=-15, max_value=15, allow_nan=False), min_size=2, max_size=8
).map(lambda xs: np.array(xs, dtype=np.float64))


def test_softmax_uniform():
    assert np.allclose(softmax([0.0, 0.0, 0.0]), [1 / 3] * 3)


def test_softmax_reference_values():
    assert np.allclose(softmax([2.0, 1.0, 0.0]), SOFTMAX_210, atol=1e-4)


def test_softmax_no_overflow():
    p = softmax([1000.0, 0.0])
    assert np.all(np.isfinite(p))
    assert p[0] == pytest.approx(1.0)
    assert abs(p.sum() - 1.0) < 1e-6


@given(logit_vectors, st.floats(min_value=-1e4, max_value=1e4))
@settings(max_examples=100, deadline=None)
def test_softmax_shift_invariance(v, c):
    assert np.allclose(softmax(v), softmax(v + c), atol=1e-6)


@given(logit_vectors)
@settings(max_examples=100, deadline=None)
def test_softmax_argmax_preserved(v):
    # differences below float64 resolution vanish inside exp(), so assert the
    # picked class is a float-tie with the true max rather than index equality
    picked = int(np.argmax(softmax(v)))
    assert v[picked] == pytest.approx(v.max(), abs=1e-9)


def test_maxprob_uniform_is_chance():
    for c in (2, 3, 10):
        assert confidence(np.zeros(c), ConfidenceMetric.MAX_PROB) == pytest.approx(1 / c)


def test_logit_gap_value():
    assert confidence([2.0, 1.0, 0.0], ConfidenceMetric.LOGIT_GAP) == pytest.approx(1.0)


def test_neg_entropy_value():
    got = confidence([2.0, 1.0, 0.0], ConfidenceMetric.NEG_ENTROPY)
    assert got == pytest.approx(NEG_ENTROPY_210, abs=1e-3)


@given(moderate_logits)
@settings(max_examples=100, deadline=None)
def test_metric_ranges(v):
    c = len(v)
    assert 0.0 < confidence(v, ConfidenceMetric.MAX_PROB) <= 1.0
    assert 0.0 <= confidence(v, ConfidenceMetric.PROB_GAP) < 1.0
    assert confidence(v, ConfidenceMetric.LOGIT_GAP) >= 0.0
    ne = confidence(v, ConfidenceMetric.NEG_ENTROPY)
    assert -np.log(c) - 1e-9 <= ne <= 1e-12


@given(logit_vectors, st.randoms())
@settings(max_examples=100, deadline=None)
def test_metric_permutation_invariance(v, rnd):
    perm = list(range(len(v)))
    rnd.shuffle(perm)
    for metric in ConfidenceMetric:
        assert confidence(v[perm], metric) == pytest.approx(confidence(v, metric), abs=1e-9)


def test_gap_metric_single_class_rejected():
    with pytest.raises(ValidationError):
        confidence(np.array([1.0]), ConfidenceMetric.LOGIT_GAP)


def make_ranked_fixture(n=1000, accuracy=0.771):
    """Correctness is a non-increasing function of confidence rank."""
    n_correct = int(round(accuracy * n))
    margins = np.linspace(6.0, 0.2, n)
    logits = np.zeros((n, 2), dtype=np.float32)
    labels = np.zeros(n, dtype=np.int64)
    logits[:, 0] = margins
    labels[n_correct:] = 1  # prediction stays class 0, so these are wrong
    return PredictionSet(model_id="f", model_type="f", logits=logits, cost=1.0), \
        LabeledDataset(labels)


def test_selective_accuracy_endpoint_is_overall():
    preds, labels = make_ranked_fixture()
    curve = selective_accuracy(preds, labels, ConfidenceMetric.MAX_PROB, [25, 50, 100])
    assert curve.accuracy_at(100) == pytest.approx(0.771)


def test_selective_accuracy_upper_bound_shape():
    preds, labels = make_ranked_fixture(accuracy=0.771)
    ks = list(range(5, 101, 5))
    curve = selective_accuracy(preds, labels, ConfidenceMetric.MAX_PROB, ks)
    accs = dict(curve.points)
    for k in ks:
        if k <= 77:
            assert accs[k] == 1.0
        else:
            assert accs[k] < 1.0
    values = [accs[k] for k in ks]
    assert all(a >= b for a, b in zip(values, values[1:]))


def test_selective_accuracy_tie_break_by_index():
    logits = np.array([[1.0, 0.0], [1.0, 0.0], [1.0, 0.0]], dtype=np.float32)
    preds = PredictionSet(model_id="t", model_type="t", logits=logits, cost=1.0)
    labels = LabeledDataset(np.array([0, 1, 1]))
    # all confidences tie; ceil(33*3/100) = 1 example, and the tie-break
    # must pick example 0 (the correct one)
    curve = selective_accuracy(preds, labels, ConfidenceMetric.MAX_PROB, [33, 100])
    assert curve.accuracy_at(33) == 1.0
    assert curve.accuracy_at(100) == pytest.approx(1 / 3)


def test_selective_accuracy_empty_ks_rejected():
    preds, labels = make_ranked_fixture(n=10)
    with pytest.raises(ValidationError):
        selective_accuracy(preds, labels, ConfidenceMetric.MAX_PROB, [])


def test_selective_accuracy_out_of_range_k_rejected():
    preds, labels = make_ranked_fixture(n=10)
    with pytest.raises(ValidationError):
        selective_accuracy(preds, labels, ConfidenceMetric.MAX_PROB, [0.0])
