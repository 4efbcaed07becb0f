"""Cascades for per-pixel prediction (semantic segmentation style).

Images are split into grid cells; each cell is routed through the cascade
independently. A cell's confidence is the mean per-pixel max-probability
over pixels that clear the unlabeled-pixel filter (strictly above t_unlab);
a cell with no surviving pixels scores 0 so it is always routed onward.
Routed cells aggregate per-pixel logits as a running mean, mirroring the
classification engine. Cell cost is the stage cost scaled by the cell's
share of the image area (fully-convolutional FLOPS scale with area; this
accounting ignores halo context and is the toolkit's own convention).
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .confidence import ConfidenceMetric
from .engine import AggregationMode
from .errors import InfeasibleTargetError, ValidationError
from .pool import MANIFEST_NAME, MANIFEST_VERSION, _read_values

DEFAULT_UNLABELED_FILTER = 0.5
DEFAULT_IGNORE_LABEL = 255


@dataclass(frozen=True)
class DensePredictionSet:
    """One model's per-pixel logits over N images, cost per full image."""

    model_id: str
    model_type: str
    logits: np.ndarray  # (N, H, W, C) float32
    cost: float

    def __post_init__(self):
        logits = np.asarray(self.logits, dtype=np.float32)
        if logits.ndim != 4:
            raise ValidationError(
                f"entry '{self.model_id}': dense logits must be (N, H, W, C), got {logits.shape}"
            )
        if not np.all(np.isfinite(logits)):
            raise ValidationError(f"entry '{self.model_id}': non-finite dense logit")
        if not (self.cost > 0):
            raise ValidationError(f"entry '{self.model_id}': cost must be > 0")
        logits.setflags(write=False)
        object.__setattr__(self, "logits", logits)

    @property
    def shape(self):
        return self.logits.shape


@dataclass(frozen=True)
class DenseLabelSet:
    """Per-pixel class indices; ignore_label marks unlabeled pixels."""

    labels: np.ndarray  # (N, H, W)
    ignore_label: int = DEFAULT_IGNORE_LABEL

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.ndim != 3:
            raise ValidationError(f"dense labels must be (N, H, W), got {labels.shape}")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)


class DensePool:
    """Validated dense prediction sets sharing one label volume."""

    def __init__(self, entries, labels: DenseLabelSet):
        entries = list(entries)
        if not entries:
            raise ValidationError("dense pool must contain at least one entry")
        shape = entries[0].shape
        for e in entries:
            if e.shape != shape:
                raise ValidationError(
                    f"entry '{e.model_id}': shape {e.shape} disagrees with pool shape {shape}"
                )
        if labels.labels.shape != shape[:3]:
            raise ValidationError(
                f"labels shape {labels.labels.shape} disagrees with logits {shape[:3]}"
            )
        valid = labels.labels != labels.ignore_label
        c = shape[3]
        bad = valid & ((labels.labels < 0) | (labels.labels >= c))
        if bad.any():
            raise ValidationError(f"dense label out of range (num_classes={c})")
        seen = set()
        for e in entries:
            if e.model_id in seen:
                raise ValidationError(f"duplicate model_id '{e.model_id}'")
            seen.add(e.model_id)
        self.entries = entries
        self.labels = labels
        self._by_id = {e.model_id: e for e in entries}

    @property
    def num_images(self) -> int:
        return self.entries[0].shape[0]

    @property
    def image_shape(self):
        return self.entries[0].shape[1:3]

    @property
    def num_classes(self) -> int:
        return self.entries[0].shape[3]

    def entry(self, model_id: str) -> DensePredictionSet:
        try:
            return self._by_id[model_id]
        except KeyError:
            raise ValidationError(f"unknown model_id '{model_id}'") from None


@dataclass(frozen=True)
class DenseCascadeSpec:
    """Dense cascade: cell routing with an unlabeled-pixel filter."""

    model_ids: tuple[str, ...]
    thresholds: tuple[float, ...] = ()
    t_unlab: float = DEFAULT_UNLABELED_FILTER
    cell_size: int | None = None  # None routes the full image as one cell
    metric: ConfidenceMetric = ConfidenceMetric.MAX_PROB
    aggregation: AggregationMode = AggregationMode.MEAN_LOGITS

    def __post_init__(self):
        object.__setattr__(self, "model_ids", tuple(self.model_ids))
        object.__setattr__(self, "thresholds", tuple(float(t) for t in self.thresholds))
        if self.metric is not ConfidenceMetric.MAX_PROB:
            raise ValidationError("dense cascades support the max-prob metric only")
        if not (0.0 <= self.t_unlab <= 1.0):
            raise ValidationError(f"t_unlab must be in [0, 1], got {self.t_unlab}")

    def validate(self, pool: DensePool):
        n = len(self.model_ids)
        if n < 1:
            raise ValidationError("dense cascade needs at least one model")
        if len(self.thresholds) != n - 1:
            raise ValidationError(
                f"expected {n - 1} thresholds for {n} models, got {len(self.thresholds)}"
            )
        for mid in self.model_ids:
            pool.entry(mid)
        if len(set(self.model_ids)) != n:
            raise ValidationError("a dense entry may be used only once per cascade")
        h, w = pool.image_shape
        if self.cell_size is not None:
            r = self.cell_size
            if r <= 0 or h % r != 0 or w % r != 0:
                raise ValidationError(
                    f"cell size {r} must evenly divide the {h}x{w} image"
                )
        for t in self.thresholds:
            if not (0.0 <= t <= 1.0):
                raise ValidationError(f"dense threshold {t} outside [0, 1]")


@dataclass(frozen=True)
class DenseEvaluation:
    miou: float
    per_class_iou: np.ndarray = field(repr=False)  # (C,), NaN for absent classes
    avg_cost: float
    worst_case_cost: float
    cell_exit_ratios: tuple[float, ...]
    predictions: np.ndarray = field(repr=False)  # (N, H, W) final per-pixel argmax


def _pixel_maxprob(agg_logits: np.ndarray) -> np.ndarray:
    """Max softmax probability per pixel of an (..., C) logit array."""
    shifted = agg_logits - agg_logits.max(axis=-1, keepdims=True)
    return 1.0 / np.exp(shifted).sum(axis=-1)


def dense_confidence(region_logits, t_unlab: float) -> float:
    """Mean per-pixel max-prob over pixels strictly above the filter; 0 if none."""
    logits = np.asarray(region_logits, dtype=np.float64)
    if logits.ndim != 2 or logits.shape[0] == 0:
        raise ValidationError("region must be a non-empty (pixels, C) array")
    conf = _pixel_maxprob(logits)
    keep = conf > t_unlab
    if not keep.any():
        return 0.0
    return float(conf[keep].mean())


def _cell_confidences(conf: np.ndarray, t_unlab: float, ch: int, cw: int,
                      r_h: int, r_w: int) -> np.ndarray:
    """Filtered mean confidence per cell of one image's (H, W) pixel scores."""
    cells = conf.reshape(ch, r_h, cw, r_w)
    keep = cells > t_unlab
    counts = keep.sum(axis=(1, 3))
    sums = np.where(keep, cells, 0.0).sum(axis=(1, 3))
    with np.errstate(invalid="ignore"):
        out = np.where(counts > 0, sums / np.maximum(counts, 1), 0.0)
    return out


def evaluate_dense_cascade(spec: DenseCascadeSpec, pool: DensePool) -> DenseEvaluation:
    """Route each grid cell through the cascade; score the stitched output."""
    spec.validate(pool)
    n = len(spec.model_ids)
    entries = [pool.entry(mid) for mid in spec.model_ids]
    n_images = pool.num_images
    h, w = pool.image_shape
    if spec.cell_size is None:
        r_h, r_w = h, w
    else:
        r_h = r_w = spec.cell_size
    ch, cw = h // r_h, w // r_w
    area_frac = (r_h * r_w) / (h * w)
    costs = np.cumsum([e.cost for e in entries])

    use_probs = spec.aggregation is AggregationMode.MEAN_PROBS
    total_cost = 0.0
    exit_counts = np.zeros(n, dtype=np.int64)
    predictions = np.empty((n_images, h, w), dtype=np.int64)

    for i in range(n_images):
        running = np.zeros((h, w, pool.num_classes), dtype=np.float64)
        active = np.ones((ch, cw), dtype=bool)
        for k in range(n):
            stage = entries[k].logits[i].astype(np.float64)
            if use_probs:
                shifted = stage - stage.max(axis=-1, keepdims=True)
                e = np.exp(shifted)
                stage = e / e.sum(axis=-1, keepdims=True)
            running += stage
            agg = running / (k + 1)
            if use_probs:
                pix_conf = agg.max(axis=-1)
            else:
                pix_conf = _pixel_maxprob(agg)
            cell_conf = _cell_confidences(pix_conf, spec.t_unlab, ch, cw, r_h, r_w)
            if k < n - 1:
                exiting = active & (cell_conf >= spec.thresholds[k])
            else:
                exiting = active.copy()
            if exiting.any():
                pix_mask = np.repeat(np.repeat(exiting, r_h, axis=0), r_w, axis=1)
                predictions[i][pix_mask] = agg.argmax(axis=-1)[pix_mask]
                exit_counts[k] += int(exiting.sum())
                total_cost += float(exiting.sum()) * area_frac * costs[k]
            active &= ~exiting
            if not active.any():
                break

    labels = pool.labels
    per_class_iou, miou = mean_iou(predictions, labels, pool.num_classes)
    total_cells = n_images * ch * cw
    return DenseEvaluation(
        miou=miou,
        per_class_iou=per_class_iou,
        avg_cost=total_cost / n_images,
        worst_case_cost=float(costs[-1]),
        cell_exit_ratios=tuple(float(v) for v in exit_counts / total_cells),
        predictions=predictions,
    )


def mean_iou(pred_labels, labels: DenseLabelSet, num_classes: int):
    """(per-class IoU, mIoU) over non-ignored pixels.

    Classes absent from both prediction and ground truth get NaN and are
    excluded from the mean.
    """
    pred = np.asarray(pred_labels, dtype=np.int64)
    if pred.shape != labels.labels.shape:
        raise ValidationError(
            f"prediction shape {pred.shape} disagrees with labels {labels.labels.shape}"
        )
    valid = labels.labels != labels.ignore_label
    if not valid.any():
        raise ValidationError("all pixels are ignored; mIoU undefined")
    gt = labels.labels[valid]
    pr = pred[valid]
    if (pr < 0).any() or (pr >= num_classes).any():
        raise ValidationError(f"prediction class outside [0, {num_classes})")
    confusion = np.bincount(
        gt * num_classes + pr, minlength=num_classes * num_classes
    ).reshape(num_classes, num_classes)
    tp = np.diag(confusion).astype(np.float64)
    union = confusion.sum(axis=0) + confusion.sum(axis=1) - np.diag(confusion)
    with np.errstate(invalid="ignore", divide="ignore"):
        iou = np.where(union > 0, tp / union, np.nan)
    return iou, float(np.nanmean(iou))


def search_dense_thresholds(model_ids, pool: DensePool, target,
                            t_unlab: float = DEFAULT_UNLABELED_FILTER,
                            cell_size: int | None = None,
                            grid_resolution: int = 20,
                            aggregation: AggregationMode = AggregationMode.MEAN_LOGITS,
                            ) -> tuple[tuple[float, ...], DenseEvaluation]:
    """Grid-enumerate dense thresholds for a cost budget or an mIoU floor.

    Candidates per gate are the percentiles of that stage's cell confidences
    (all cells treated as routed) plus sentinels {0, 1}. Dense pools are
    small, so the product grid is enumerated outright with the same
    tie-break order as the classification search.
    """
    from .search import AccuracyFloor, CostBudget, MatchEnsemble  # local to avoid cycle

    model_ids = tuple(model_ids)
    n = len(model_ids)
    probe = DenseCascadeSpec(model_ids=model_ids, thresholds=(0.0,) * (n - 1),
                             t_unlab=t_unlab, cell_size=cell_size, aggregation=aggregation)
    probe.validate(pool)

    if isinstance(target, MatchEnsemble):
        ens = evaluate_dense_cascade(
            DenseCascadeSpec(model_ids=model_ids, thresholds=(1.0,) * (n - 1),
                             t_unlab=t_unlab, cell_size=cell_size, aggregation=aggregation),
            pool,
        )
        target = AccuracyFloor(max(ens.miou - target.slack, 0.0))

    entries = [pool.entry(mid) for mid in model_ids]
    h, w = pool.image_shape
    r = cell_size if cell_size is not None else h
    r_w = cell_size if cell_size is not None else w
    ch, cw = h // r, w // r_w

    # unconditional per-stage cell confidences, for the percentile grid
    gate_scores = []
    use_probs = aggregation is AggregationMode.MEAN_PROBS
    for k in range(n - 1):
        scores = []
        for i in range(pool.num_images):
            running = np.zeros((h, w, pool.num_classes), dtype=np.float64)
            for j in range(k + 1):
                stage = entries[j].logits[i].astype(np.float64)
                if use_probs:
                    shifted = stage - stage.max(axis=-1, keepdims=True)
                    e = np.exp(shifted)
                    stage = e / e.sum(axis=-1, keepdims=True)
                running += stage
            agg = running / (k + 1)
            pix_conf = agg.max(axis=-1) if use_probs else _pixel_maxprob(agg)
            scores.append(_cell_confidences(pix_conf, t_unlab, ch, cw, r, r_w).ravel())
        gate_scores.append(np.concatenate(scores))

    qs = np.linspace(0.0, 100.0, grid_resolution + 1)
    grids = []
    for scores in gate_scores:
        cands = np.unique(np.concatenate([np.percentile(scores, qs), [0.0, 1.0]]))
        grids.append([float(v) for v in cands])

    best_key = None
    best = None
    best_reject = None
    for vec in itertools.product(*grids):
        spec = DenseCascadeSpec(model_ids=model_ids, thresholds=vec, t_unlab=t_unlab,
                                cell_size=cell_size, aggregation=aggregation)
        ev = evaluate_dense_cascade(spec, pool)
        if isinstance(target, CostBudget):
            if ev.avg_cost > target.limit:
                best_reject = ev.avg_cost if best_reject is None else min(best_reject, ev.avg_cost)
                continue
            key = (-ev.miou, ev.avg_cost, vec)
        else:
            if ev.miou < target.floor:
                best_reject = ev.miou if best_reject is None else max(best_reject, ev.miou)
                continue
            key = (ev.avg_cost, -ev.miou, vec)
        if best_key is None or key < best_key:
            best_key = key
            best = (vec, ev)
    if best is None:
        raise InfeasibleTargetError(
            f"no dense grid point satisfies the target; best achievable: {best_reject}",
            best_achievable=best_reject,
        )
    return best


def save_dense_pool(pool: DensePool, directory) -> Path:
    """Manifest + blobs; entries carry "shape":[H,W], labels are N*H*W u32."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    h, w = pool.image_shape
    records = []
    for i, e in enumerate(pool.entries):
        name = f"{i:03d}_{e.model_id}.f32"
        np.ascontiguousarray(e.logits, dtype="<f4").tofile(directory / name)
        records.append(
            {
                "model_id": e.model_id,
                "model_type": e.model_type,
                "cost": e.cost,
                "resolution": None,
                "replicate_index": 0,
                "shape": [h, w],
                "logits": name,
            }
        )
    pool.labels.labels.astype("<u4").tofile(directory / "labels.u32")
    manifest = {
        "version": MANIFEST_VERSION,
        "num_examples": pool.num_images,
        "num_classes": pool.num_classes,
        "ignore_label": pool.labels.ignore_label,
        "labels": "labels.u32",
        "entries": records,
    }
    path = directory / MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return path


def load_dense_pool(manifest_path) -> DensePool:
    manifest_path = Path(manifest_path)
    if manifest_path.is_dir():
        manifest_path = manifest_path / MANIFEST_NAME
    if not manifest_path.exists():
        raise ValidationError(f"manifest not found: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise ValidationError(f"manifest does not parse as JSON: {err}") from None
    n = int(manifest["num_examples"])
    c = int(manifest["num_classes"])
    base = manifest_path.parent
    entries = []
    shape = None
    for rec in manifest["entries"]:
        if "shape" not in rec:
            raise ValidationError(
                f"entry '{rec.get('model_id')}' has no \"shape\"; not a dense manifest"
            )
        h, w = (int(v) for v in rec["shape"])
        if shape is None:
            shape = (h, w)
        elif shape != (h, w):
            raise ValidationError("entries disagree on image shape")
        mid = rec["model_id"]
        flat = _read_values(base / rec["logits"], "<f4", n * h * w * c,
                            f"entry '{mid}' logits")
        entries.append(
            DensePredictionSet(
                model_id=mid,
                model_type=rec["model_type"],
                logits=flat.reshape(n, h, w, c),
                cost=float(rec["cost"]),
            )
        )
    h, w = shape
    raw = _read_values(base / manifest["labels"], "<u4", n * h * w, "labels")
    labels = DenseLabelSet(
        labels=raw.reshape(n, h, w).astype(np.int64),
        ignore_label=int(manifest.get("ignore_label", DEFAULT_IGNORE_LABEL)),
    )
    return DensePool(entries, labels)
