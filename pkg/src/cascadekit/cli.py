"""Command-line surface. Every subcommand is deterministic given its flags
and input files; all randomness sits behind explicit --seed flags.

Exit codes: 0 success, 1 input/validation error, 2 infeasible target.
"""

from __future__ import annotations

import argparse
import io
import json
import os
import sys
from pathlib import Path

from . import dense as dense_mod
from .confidence import ConfidenceMetric, selective_accuracy
from .engine import (
    AggregationMode,
    CascadeSpec,
    evaluate_cascade,
    evaluate_ensemble,
)
from .errors import InfeasibleTargetError, ValidationError
from .pool import SynthConfig, generate_synthetic_pool, load_pool, save_pool, split_dataset
from .reports import (
    committee_notation,
    evaluation_report,
    format_exit_table,
    write_curve_csv,
    write_frontier_csv,
    write_json,
    write_sweep_csv,
    write_trace_csv,
)
from .search import (
    DEFAULT_ENSEMBLE_SLACK,
    DEFAULT_GRID_RESOLUTION,
    AccuracyFloor,
    CostBudget,
    MatchEnsemble,
    search_thresholds,
    threshold_sweep,
)
from .selection import (
    MaxAccuracy,
    MinCost,
    OrderPolicy,
    SelectionProblem,
    evaluate_candidate_committees,
    pareto_frontier,
    select_cascade,
)

JOBS_ENV_VAR = "CASCADEKIT_JOBS"


class _Parser(argparse.ArgumentParser):
    """argparse maps usage errors to exit code 2; this toolkit reserves 2
    for infeasible targets, so usage errors exit 1 instead."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _metric(value: str) -> ConfidenceMetric:
    return ConfidenceMetric(value)


def _aggregation(value: str) -> AggregationMode:
    return AggregationMode(value)


def _id_list(value: str):
    ids = [v.strip() for v in value.split(",") if v.strip()]
    if not ids:
        raise argparse.ArgumentTypeError("expected a comma-separated model list")
    return tuple(ids)


def _float_list(value: str):
    if not value.strip():
        return ()
    return tuple(float(v) for v in value.split(","))


def _config_of(args) -> dict:
    cfg = {}
    for key, val in sorted(vars(args).items()):
        if key == "func" or callable(val):
            continue
        if isinstance(val, Path):
            val = str(val)
        elif isinstance(val, (ConfidenceMetric, AggregationMode, OrderPolicy)):
            val = val.value
        elif isinstance(val, tuple):
            val = list(val)
        cfg[key] = val
    return cfg


def _emit(payload: dict, out):
    text = json.dumps(payload, indent=2)
    print(text)
    if out is not None:
        write_json(out, payload)


def _emit_csv(write_fn, out, *payload):
    if out is not None:
        write_fn(out, *payload)
        return
    buf = io.StringIO()
    write_fn(buf, *payload)
    sys.stdout.write(buf.getvalue())


def _target_from_args(args):
    chosen = [
        name for name, val in (
            ("--target-flops", args.target_flops),
            ("--target-accuracy", args.target_accuracy),
            ("--match-ensemble", args.match_ensemble),
        ) if val is not None
    ]
    if len(chosen) != 1:
        raise ValidationError(
            f"exactly one of --target-flops / --target-accuracy / --match-ensemble "
            f"is required, got {chosen or 'none'}"
        )
    if args.target_flops is not None:
        return CostBudget(args.target_flops)
    if args.target_accuracy is not None:
        return AccuracyFloor(args.target_accuracy)
    return MatchEnsemble(args.match_ensemble)


def _maybe_split(pool, args):
    """(search pool, held-out pool or None) per the --split-fraction flag."""
    if args.split_fraction is None:
        return pool, None
    return split_dataset(pool, args.split_fraction, args.split_seed)


def _check_writable(*paths):
    """Fail before any work starts if an output location cannot exist."""
    for p in paths:
        if p is None:
            continue
        parent = Path(p).resolve().parent
        if not parent.is_dir():
            raise ValidationError(f"output directory does not exist: {parent}")


def _add_target_flags(p):
    p.add_argument("--target-flops", type=float, default=None,
                   help="cost budget: maximize accuracy with avg cost <= this")
    p.add_argument("--target-accuracy", type=float, default=None,
                   help="accuracy floor: minimize avg cost with accuracy >= this")
    p.add_argument("--match-ensemble", type=float, nargs="?", default=None,
                   const=DEFAULT_ENSEMBLE_SLACK, metavar="SLACK",
                   help="minimize cost while staying within SLACK "
                        f"(default {DEFAULT_ENSEMBLE_SLACK}) of ensemble accuracy")


def _add_common_flags(p, models=True):
    p.add_argument("--manifest", required=True, type=Path, help="pool.json to load")
    if models:
        p.add_argument("--models", required=True, type=_id_list,
                       help="comma-separated model ids, cascade order")
    p.add_argument("--metric", type=_metric, default=ConfidenceMetric.MAX_PROB,
                   choices=list(ConfidenceMetric),
                   help="confidence function (default: max-prob)")
    p.add_argument("--aggregation", type=_aggregation, default=AggregationMode.MEAN_LOGITS,
                   choices=list(AggregationMode),
                   help="how stage outputs combine (default: mean-logits)")


def _add_split_flags(p):
    p.add_argument("--split-fraction", type=float, default=None,
                   help="tune on this fraction of examples, report the rest held out")
    p.add_argument("--split-seed", type=int, default=0,
                   help="seed for the selection/evaluation split (default 0)")


def _cell_size(value: str):
    if value.lower() == "full":
        return None
    return int(value)


def cmd_validate(args) -> int:
    path = Path(args.manifest)
    if path.is_dir():
        path = path / "pool.json"
    if not path.exists():
        raise ValidationError(f"manifest not found: {path}")
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise ValidationError(f"manifest does not parse as JSON: {err}") from None
    entries = manifest.get("entries", [])
    is_dense = bool(entries) and "shape" in entries[0]
    if is_dense:
        pool = dense_mod.load_dense_pool(args.manifest)
        h, w = pool.image_shape
        print(f"valid dense pool: {len(pool.entries)} entries, "
              f"{pool.num_images} images of {h}x{w}, {pool.num_classes} classes")
        for e in pool.entries:
            print(f"  {e.model_id}  type={e.model_type}  cost={e.cost:g}")
    else:
        pool = load_pool(args.manifest)
        print(f"valid pool: {len(pool.entries)} entries, "
              f"{pool.num_examples} examples, {pool.num_classes} classes")
        for e in pool.entries:
            res = f"  res={e.resolution}" if e.resolution is not None else ""
            print(f"  {e.model_id}  type={e.model_type}  cost={e.cost:g}  "
                  f"replicate={e.replicate_index}{res}")
    return 0


def cmd_split(args) -> int:
    pool = load_pool(args.manifest)
    first, second = split_dataset(pool, args.fraction, args.seed)
    out = Path(args.out)
    save_pool(first, out / "selection")
    save_pool(second, out / "evaluation")
    print(f"selection: {first.num_examples} examples -> {out / 'selection'}")
    print(f"evaluation: {second.num_examples} examples -> {out / 'evaluation'}")
    return 0


def cmd_synth(args) -> int:
    config = SynthConfig(
        num_models=len(args.accuracies),
        num_examples=args.examples,
        num_classes=args.classes,
        accuracies=args.accuracies,
        costs=args.costs,
        correlation=args.correlation,
        seed=args.seed,
    )
    pool = generate_synthetic_pool(config)
    manifest = save_pool(pool, args.out)
    print(f"wrote {len(pool.entries)}-model synthetic pool to {manifest.path}")
    return 0


def cmd_evaluate(args) -> int:
    _check_writable(args.out, args.trace)
    pool = load_pool(args.manifest)
    if args.ensemble:
        if args.thresholds:
            raise ValidationError("--ensemble ignores thresholds; omit --thresholds")
        evaluation = evaluate_ensemble(args.models, pool, args.aggregation, args.metric)
        spec = CascadeSpec(model_ids=args.models, thresholds=(1.0,) * (len(args.models) - 1),
                           metric=args.metric, aggregation=args.aggregation)
    else:
        spec = CascadeSpec(model_ids=args.models, thresholds=args.thresholds,
                           metric=args.metric, aggregation=args.aggregation)
        evaluation = evaluate_cascade(spec, pool)
    report = evaluation_report(spec, evaluation, config=_config_of(args))
    _emit(report, args.out)
    if args.trace is not None:
        write_trace_csv(args.trace, evaluation, pool.labels.labels)
    return 0


def cmd_sweep(args) -> int:
    _check_writable(args.out)
    pool = load_pool(args.manifest)
    rows = threshold_sweep(args.models, pool, args.metric, args.aggregation,
                           stage=args.stage, grid_resolution=args.grid_resolution,
                           base_thresholds=args.base_thresholds or None)
    _emit_csv(write_sweep_csv, args.out, rows)
    return 0


def cmd_search_thresholds(args) -> int:
    _check_writable(args.out)
    pool = load_pool(args.manifest)
    target = _target_from_args(args)
    search_pool, heldout = _maybe_split(pool, args)
    thresholds, ev = search_thresholds(args.models, search_pool, target,
                                       args.metric, args.aggregation,
                                       grid_resolution=args.grid_resolution)
    spec = CascadeSpec(model_ids=args.models, thresholds=thresholds,
                       metric=args.metric, aggregation=args.aggregation)
    report = evaluation_report(spec, ev, config=_config_of(args))
    report["split"] = "selection" if heldout is not None else "full"
    if heldout is not None:
        held_ev = evaluate_cascade(spec, heldout)
        report["heldout"] = evaluation_report(spec, held_ev)
    print(format_exit_table(spec, ev))
    _emit(report, args.out)
    return 0


def cmd_select(args) -> int:
    _check_writable(args.out)
    pool = load_pool(args.manifest)
    if args.target_flops is not None and args.target_accuracy is not None:
        raise ValidationError("--target-flops and --target-accuracy are mutually exclusive")
    if args.target_flops is not None:
        objective = MaxAccuracy(args.target_flops)
    elif args.target_accuracy is not None:
        objective = MinCost(args.target_accuracy)
    else:
        raise ValidationError("one of --target-flops / --target-accuracy is required")
    search_pool, heldout = _maybe_split(pool, args)
    problem = SelectionProblem(
        pool=search_pool,
        objective=objective,
        n_max=args.max_models,
        worst_case_bound=args.worst_case,
        metric=args.metric,
        aggregation=args.aggregation,
        grid_resolution=args.grid_resolution,
        order_policy=args.order_policy,
    )
    result = select_cascade(problem, jobs=args.jobs)
    report = evaluation_report(result.spec, result.evaluation, config=_config_of(args))
    report["candidates_searched"] = result.candidates_searched
    report["candidates_infeasible"] = result.candidates_infeasible
    report["split"] = "selection" if heldout is not None else "full"
    if heldout is not None:
        held_ev = evaluate_cascade(result.spec, heldout)
        report["heldout"] = evaluation_report(result.spec, held_ev)
    print(format_exit_table(result.spec, result.evaluation))
    _emit(report, args.out)
    return 0


def cmd_pareto(args) -> int:
    _check_writable(args.out)
    pool = load_pool(args.manifest)
    points = evaluate_candidate_committees(
        pool,
        n_max=args.max_models,
        mode=args.mode,
        metric=args.metric,
        aggregation=args.aggregation,
        grid_resolution=args.grid_resolution,
        slack=args.slack,
    )
    frontier = pareto_frontier(points)
    _emit_csv(write_frontier_csv, args.out, frontier)
    return 0


def cmd_selective_accuracy(args) -> int:
    _check_writable(args.out)
    pool = load_pool(args.manifest)
    preds = pool.entry(args.model)
    curve = selective_accuracy(preds, pool.labels, args.metric, args.ks)
    _emit_csv(write_curve_csv, args.out, curve)
    return 0


def cmd_dense_evaluate(args) -> int:
    _check_writable(args.out)
    pool = dense_mod.load_dense_pool(args.manifest)
    spec = dense_mod.DenseCascadeSpec(
        model_ids=args.models,
        thresholds=args.thresholds,
        t_unlab=args.t_unlab,
        cell_size=args.cell_size,
        aggregation=args.aggregation,
    )
    ev = dense_mod.evaluate_dense_cascade(spec, pool)
    report = {
        "miou": ev.miou,
        "per_class_iou": [None if v != v else v for v in ev.per_class_iou],
        "avg_cost": ev.avg_cost,
        "worst_case_cost": ev.worst_case_cost,
        "cell_exit_ratios": list(ev.cell_exit_ratios),
        "model_ids": list(args.models),
        "thresholds": list(args.thresholds),
        "t_unlab": args.t_unlab,
        "cell_size": args.cell_size,
        "config": _config_of(args),
    }
    _emit(report, args.out)
    return 0


def cmd_dense_search(args) -> int:
    _check_writable(args.out)
    pool = dense_mod.load_dense_pool(args.manifest)
    target = _target_from_args(args)
    thresholds, ev = dense_mod.search_dense_thresholds(
        args.models, pool, target,
        t_unlab=args.t_unlab,
        cell_size=args.cell_size,
        grid_resolution=args.grid_resolution,
        aggregation=args.aggregation,
    )
    report = {
        "miou": ev.miou,
        "avg_cost": ev.avg_cost,
        "worst_case_cost": ev.worst_case_cost,
        "cell_exit_ratios": list(ev.cell_exit_ratios),
        "model_ids": list(args.models),
        "thresholds": list(thresholds),
        "t_unlab": args.t_unlab,
        "cell_size": args.cell_size,
        "config": _config_of(args),
    }
    print(f"dense cascade: {committee_notation(args.models)}  "
          f"thresholds: {', '.join(f'{t:.6g}' for t in thresholds) or '(none)'}  "
          f"mIoU: {ev.miou:.4f}  avg cost: {ev.avg_cost:.6g}")
    _emit(report, args.out)
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="cascadekit",
                     description="Evaluate and optimize ensembles and "
                                 "confidence-gated cascades over precomputed predictions.")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("validate", help="load a pool manifest and check every invariant")
    p.add_argument("manifest", type=Path)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("split", help="deterministic selection/evaluation split")
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--fraction", required=True, type=float,
                   help="fraction of examples in the selection half (floor rule)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, type=Path, help="directory for the two pools")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("synth", help="generate a synthetic pool")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--examples", type=int, default=2000)
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--accuracies", required=True, type=_float_list,
                   help="per-model top-1 targets, e.g. 0.6,0.7,0.8")
    p.add_argument("--costs", required=True, type=_float_list,
                   help="per-model costs, e.g. 1,3,9")
    p.add_argument("--correlation", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("evaluate", help="evaluate a cascade or ensemble spec")
    _add_common_flags(p)
    p.add_argument("--thresholds", type=_float_list, default=(),
                   help='comma-separated exit thresholds; "" for a solitary model')
    p.add_argument("--ensemble", action="store_true",
                   help="aggregate all models with no early exit")
    p.add_argument("--out", type=Path, default=None, help="write the JSON report here")
    p.add_argument("--trace", type=Path, default=None, help="write per-example trace CSV here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="threshold sweep for one gate (plot data)")
    _add_common_flags(p)
    p.add_argument("--stage", type=int, default=1, help="1-based gate to sweep")
    p.add_argument("--grid-resolution", type=int, default=DEFAULT_GRID_RESOLUTION)
    p.add_argument("--base-thresholds", type=_float_list, default=(),
                   help="fixed thresholds for the other gates")
    p.add_argument("--out", type=Path, default=None, help="CSV path (stdout if omitted)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("search-thresholds",
                       help="pick thresholds for a fixed sequence to meet a target")
    _add_common_flags(p)
    _add_target_flags(p)
    _add_split_flags(p)
    p.add_argument("--grid-resolution", type=int, default=DEFAULT_GRID_RESOLUTION)
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_search_thresholds)

    p = sub.add_parser("select", help="search model combinations and thresholds")
    _add_common_flags(p, models=False)
    p.add_argument("--target-flops", type=float, default=None,
                   help="maximize accuracy with avg cost <= this")
    p.add_argument("--target-accuracy", type=float, default=None,
                   help="minimize avg cost with accuracy >= this")
    p.add_argument("--worst-case", type=float, default=None,
                   help="upper bound on the sum of stage costs")
    p.add_argument("--max-models", type=int, default=4)
    p.add_argument("--order-policy", type=OrderPolicy, choices=list(OrderPolicy),
                   default=OrderPolicy.ALL_ORDERS)
    p.add_argument("--grid-resolution", type=int, default=DEFAULT_GRID_RESOLUTION)
    p.add_argument("--jobs", type=int,
                   default=int(os.environ.get(JOBS_ENV_VAR, "1")),
                   help=f"worker threads (default ${JOBS_ENV_VAR} or 1); "
                        "output is identical for any value")
    _add_split_flags(p)
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("pareto", help="cost/accuracy frontier over committees")
    _add_common_flags(p, models=False)
    p.add_argument("--max-models", type=int, default=3)
    p.add_argument("--mode", choices=["ensemble", "cascade"], default="ensemble",
                   help="plain ensembles, or cascades tuned to match each ensemble")
    p.add_argument("--slack", type=float, default=DEFAULT_ENSEMBLE_SLACK,
                   help="accuracy slack for cascade mode")
    p.add_argument("--grid-resolution", type=int, default=20)
    p.add_argument("--out", type=Path, default=None, help="CSV path (stdout if omitted)")
    p.set_defaults(func=cmd_pareto)

    p = sub.add_parser("selective-accuracy",
                       help="accuracy over the top k percent most-confident examples")
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--model", required=True)
    p.add_argument("--metric", type=_metric, default=ConfidenceMetric.MAX_PROB,
                   choices=list(ConfidenceMetric))
    p.add_argument("--ks", type=_float_list, default=tuple(range(5, 101, 5)),
                   help="percents in (0, 100], e.g. 10,25,50,100")
    p.add_argument("--out", type=Path, default=None, help="CSV path (stdout if omitted)")
    p.set_defaults(func=cmd_selective_accuracy)

    p = sub.add_parser("dense-evaluate", help="evaluate a dense (per-pixel) cascade")
    _add_common_flags(p)
    p.add_argument("--thresholds", type=_float_list, default=())
    p.add_argument("--cell-size", type=_cell_size, default=None,
                   help='routing grid cell size, or "full" (default)')
    p.add_argument("--t-unlab", type=float, default=dense_mod.DEFAULT_UNLABELED_FILTER)
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_dense_evaluate)

    p = sub.add_parser("dense-search", help="tune dense cascade thresholds to a target")
    _add_common_flags(p)
    _add_target_flags(p)
    p.add_argument("--cell-size", type=_cell_size, default=None)
    p.add_argument("--t-unlab", type=float, default=dense_mod.DEFAULT_UNLABELED_FILTER)
    p.add_argument("--grid-resolution", type=int, default=20)
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_dense_search)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return args.func(args)
    except InfeasibleTargetError as err:
        print(f"infeasible target: {err}", file=sys.stderr)
        return 2
    except ValidationError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except OSError as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return 1


def entrypoint():
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
