import numpy as np
import pytest

from cascadekit import (
    LabeledDataset,
    ModelPool,
    PredictionSet,
    SynthConfig,
    generate_synthetic_pool,
)


@pytest.fixture
def two_model_pool():
    """Hand-traced 2-model fixture: 3 examples, 2 classes.

    Model a (cost 1) is confident on examples 0 and 2, unsure on example 1;
    model b (cost 4) rescues example 1. With max-prob gating at t=0.6,
    examples 0 and 2 exit at stage 1 and example 1 rides to stage 2.
    """
    a = PredictionSet(
        model_id="a", model_type="a",
        logits=np.array([[2.0, 0.0], [0.1, 0.0], [0.0, 1.0]], dtype=np.float32),
        cost=1.0,
    )
    b = PredictionSet(
        model_id="b", model_type="b",
        logits=np.array([[0.0, 0.0], [3.0, 0.0], [0.0, 0.0]], dtype=np.float32),
        cost=4.0,
    )
    labels = LabeledDataset(np.array([0, 0, 1]))
    return ModelPool([a, b], labels)


def make_synth(num_models=2, n=1000, c=5, accuracies=(0.7, 0.85), costs=(1.0, 4.0),
               correlation=0.5, seed=0):
    return generate_synthetic_pool(SynthConfig(
        num_models=num_models,
        num_examples=n,
        num_classes=c,
        accuracies=tuple(accuracies),
        costs=tuple(costs),
        correlation=correlation,
        seed=seed,
    ))


@pytest.fixture
def synth_pool():
    return make_synth()
