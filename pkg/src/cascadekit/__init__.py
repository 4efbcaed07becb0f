"""cascadekit: build and evaluate committees (ensembles and confidence-gated
cascades) from precomputed model predictions, and search for committees that
hit cost or accuracy targets."""

from .confidence import (
    ConfidenceMetric,
    SelectiveAccuracyCurve,
    confidence,
    confidence_scores,
    prob_confidence_scores,
    selective_accuracy,
    softmax,
)
from .dense import (
    DenseCascadeSpec,
    DenseEvaluation,
    DenseLabelSet,
    DensePool,
    DensePredictionSet,
    dense_confidence,
    evaluate_dense_cascade,
    load_dense_pool,
    mean_iou,
    save_dense_pool,
    search_dense_thresholds,
)
from .engine import (
    AggregationMode,
    CascadeEvaluation,
    CascadeSpec,
    CascadeTable,
    cost_from_exit_ratios,
    evaluate_cascade,
    evaluate_ensemble,
)
from .errors import CascadeKitError, InfeasibleTargetError, ValidationError
from .pool import (
    LabeledDataset,
    ModelPool,
    PoolManifest,
    PredictionSet,
    SynthConfig,
    generate_synthetic_pool,
    load_pool,
    save_pool,
    split_dataset,
)
from .search import (
    AccuracyFloor,
    CostBudget,
    MatchEnsemble,
    ThresholdGrid,
    build_threshold_grid,
    search_thresholds,
    threshold_sweep,
)
from .selection import (
    CandidateEnumeration,
    MaxAccuracy,
    MinCost,
    OrderPolicy,
    ParetoFrontier,
    SelectionProblem,
    SelectionResult,
    SelfCascadeResult,
    assemble_self_cascade,
    enumerate_candidates,
    evaluate_candidate_committees,
    pareto_frontier,
    select_cascade,
)

__version__ = "0.1.0"

__all__ = [
    "AccuracyFloor",
    "AggregationMode",
    "CandidateEnumeration",
    "CascadeEvaluation",
    "CascadeKitError",
    "CascadeSpec",
    "CascadeTable",
    "ConfidenceMetric",
    "CostBudget",
    "DenseCascadeSpec",
    "DenseEvaluation",
    "DenseLabelSet",
    "DensePool",
    "DensePredictionSet",
    "InfeasibleTargetError",
    "LabeledDataset",
    "MatchEnsemble",
    "MaxAccuracy",
    "MinCost",
    "ModelPool",
    "OrderPolicy",
    "ParetoFrontier",
    "PoolManifest",
    "PredictionSet",
    "SelectionProblem",
    "SelectionResult",
    "SelectiveAccuracyCurve",
    "SelfCascadeResult",
    "SynthConfig",
    "ThresholdGrid",
    "ValidationError",
    "assemble_self_cascade",
    "build_threshold_grid",
    "confidence",
    "confidence_scores",
    "cost_from_exit_ratios",
    "dense_confidence",
    "enumerate_candidates",
    "evaluate_candidate_committees",
    "evaluate_cascade",
    "evaluate_dense_cascade",
    "evaluate_ensemble",
    "generate_synthetic_pool",
    "load_dense_pool",
    "load_pool",
    "mean_iou",
    "pareto_frontier",
    "prob_confidence_scores",
    "save_dense_pool",
    "save_pool",
    "search_dense_thresholds",
    "search_thresholds",
    "select_cascade",
    "selective_accuracy",
    "softmax",
    "split_dataset",
    "threshold_sweep",
]
