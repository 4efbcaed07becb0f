"""Prediction pools: on-disk format, validation, splitting, synthesis.

A pool is the set of available models' precomputed logits over one labeled
evaluation set, with a per-example inference cost for each model. Pools are
the only input the rest of the toolkit consumes; nothing here runs a model.

On-disk layout (see README for the full schema):
  pool.json    UTF-8 manifest
  <entry>.f32  N x C little-endian float32 logits, row-major (example-major)
  labels.u32   N little-endian uint32 labels

CSV alternatives (`.csv` extension, decimal values, one example per row) are
accepted on load for hand-written fixtures with N*C <= 10^6; saving always
writes the binary format.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ValidationError

MANIFEST_VERSION = 1
MANIFEST_NAME = "pool.json"
CSV_MAX_VALUES = 10**6


@dataclass(frozen=True)
class PredictionSet:
    """One model's logits over the evaluation set, plus its cost metadata.

    `cost` is an opaque positive per-example unit (FLOPS, latency, energy).
    `resolution` tags the input resolution for self-cascades built from the
    same architecture run at several sizes. Replicates of one architecture
    (independently trained copies) share `model_type` and are distinguished
    by `replicate_index`.
    """

    model_id: str
    model_type: str
    logits: np.ndarray
    cost: float
    resolution: int | None = None
    replicate_index: int = 0

    def __post_init__(self):
        logits = np.asarray(self.logits, dtype=np.float32)
        if logits.ndim != 2:
            raise ValidationError(
                f"entry '{self.model_id}': logits must be 2-D (N x C), got shape {logits.shape}"
            )
        bad = ~np.isfinite(logits)
        if bad.any():
            ex, cl = np.argwhere(bad)[0]
            raise ValidationError(
                f"entry '{self.model_id}': non-finite logit at example {ex}, class {cl}"
            )
        if not (self.cost > 0):
            raise ValidationError(f"entry '{self.model_id}': cost must be > 0, got {self.cost}")
        if self.resolution is not None and self.resolution <= 0:
            raise ValidationError(f"entry '{self.model_id}': resolution must be positive")
        if self.replicate_index < 0:
            raise ValidationError(f"entry '{self.model_id}': replicate_index must be >= 0")
        logits.setflags(write=False)
        object.__setattr__(self, "logits", logits)

    @property
    def num_examples(self) -> int:
        return self.logits.shape[0]

    @property
    def num_classes(self) -> int:
        return self.logits.shape[1]


@dataclass(frozen=True)
class LabeledDataset:
    """Ground-truth class indices for the evaluation set."""

    labels: np.ndarray
    split_tag: str = "evaluation"

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.ndim != 1 or labels.shape[0] == 0:
            raise ValidationError("labels must be a non-empty 1-D vector")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @property
    def num_examples(self) -> int:
        return self.labels.shape[0]


class ModelPool:
    """Validated set of PredictionSets sharing one LabeledDataset.

    Immutable after construction; safe for concurrent reads.
    """

    def __init__(self, entries, labels: LabeledDataset):
        entries = list(entries)
        if not entries:
            raise ValidationError("pool must contain at least one entry")
        n, c = entries[0].logits.shape
        if labels.num_examples != n:
            raise ValidationError(
                f"labels have {labels.num_examples} examples but entry "
                f"'{entries[0].model_id}' has {n}"
            )
        seen_ids = set()
        seen_replicates = set()
        for e in entries:
            if e.logits.shape != (n, c):
                raise ValidationError(
                    f"entry '{e.model_id}': shape {e.logits.shape} disagrees with pool shape {(n, c)}"
                )
            if e.model_id in seen_ids:
                raise ValidationError(f"duplicate model_id '{e.model_id}'")
            seen_ids.add(e.model_id)
            key = (e.model_type, e.replicate_index)
            if key in seen_replicates:
                raise ValidationError(
                    f"duplicate (model_type, replicate_index) = ('{key[0]}', {key[1]})"
                )
            seen_replicates.add(key)
        bad = (labels.labels < 0) | (labels.labels >= c)
        if bad.any():
            i = int(np.argmax(bad))
            raise ValidationError(
                f"label out of range at example {i}: {labels.labels[i]} (num_classes={c})"
            )
        self.entries = entries
        self.labels = labels
        self._by_id = {e.model_id: e for e in entries}

    @property
    def num_examples(self) -> int:
        return self.labels.num_examples

    @property
    def num_classes(self) -> int:
        return self.entries[0].num_classes

    def entry(self, model_id: str) -> PredictionSet:
        try:
            return self._by_id[model_id]
        except KeyError:
            raise ValidationError(f"unknown model_id '{model_id}'") from None

    def model_ids(self):
        return [e.model_id for e in self.entries]

    def subset(self, indices, split_tag: str) -> "ModelPool":
        """New pool restricted to the given example indices (all entries kept)."""
        indices = np.asarray(indices, dtype=np.int64)
        entries = [replace(e, logits=e.logits[indices]) for e in self.entries]
        labels = LabeledDataset(self.labels.labels[indices], split_tag=split_tag)
        return ModelPool(entries, labels)


@dataclass(frozen=True)
class PoolManifest:
    """Serialization descriptor for a saved pool."""

    path: Path
    num_examples: int
    num_classes: int
    labels_file: str
    entry_files: tuple[str, ...]


def _blob_name(index: int, model_id: str, ext: str) -> str:
    safe = re.sub(r"[^A-Za-z0-9._-]", "_", model_id)
    return f"{index:03d}_{safe}{ext}"


def save_pool(pool: ModelPool, directory) -> PoolManifest:
    """Write manifest + blobs; load_pool on the result is bit-identical."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entry_records = []
    entry_files = []
    for i, e in enumerate(pool.entries):
        name = _blob_name(i, e.model_id, ".f32")
        np.ascontiguousarray(e.logits, dtype="<f4").tofile(directory / name)
        entry_files.append(name)
        entry_records.append(
            {
                "model_id": e.model_id,
                "model_type": e.model_type,
                "cost": e.cost,
                "resolution": e.resolution,
                "replicate_index": e.replicate_index,
                "logits": name,
            }
        )
    labels_name = "labels.u32"
    pool.labels.labels.astype("<u4").tofile(directory / labels_name)
    manifest = {
        "version": MANIFEST_VERSION,
        "num_examples": pool.num_examples,
        "num_classes": pool.num_classes,
        "labels": labels_name,
        "entries": entry_records,
    }
    path = directory / MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return PoolManifest(
        path=path,
        num_examples=pool.num_examples,
        num_classes=pool.num_classes,
        labels_file=labels_name,
        entry_files=tuple(entry_files),
    )


def _read_values(path: Path, dtype, count: int, what: str) -> np.ndarray:
    """Read a blob as `dtype`, insisting on exactly `count` values."""
    if not path.exists():
        raise ValidationError(f"{what}: file not found: {path}")
    if path.suffix == ".csv":
        rows = [
            [float(v) for v in line.split(",")]
            for line in path.read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]
        flat = [v for row in rows for v in row]
        if len(flat) > CSV_MAX_VALUES:
            raise ValidationError(
                f"{what}: CSV pools are limited to {CSV_MAX_VALUES} values, found {len(flat)}"
            )
        data = np.asarray(flat, dtype=dtype)
    else:
        data = np.fromfile(path, dtype=dtype)
    if data.size != count:
        raise ValidationError(f"{what}: expected {count} values, found {data.size} in {path}")
    return data


def load_pool(manifest_path) -> ModelPool:
    """Load and eagerly validate a pool from its manifest."""
    manifest_path = Path(manifest_path)
    if manifest_path.is_dir():
        manifest_path = manifest_path / MANIFEST_NAME
    if not manifest_path.exists():
        raise ValidationError(f"manifest not found: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise ValidationError(f"manifest does not parse as JSON: {err}") from None
    for key in ("version", "num_examples", "num_classes", "labels", "entries"):
        if key not in manifest:
            raise ValidationError(f"manifest missing required field '{key}'")
    if manifest["version"] != MANIFEST_VERSION:
        raise ValidationError(f"unsupported manifest version {manifest['version']}")
    n = int(manifest["num_examples"])
    c = int(manifest["num_classes"])
    base = manifest_path.parent

    raw_labels = _read_values(base / manifest["labels"], "<u4", n, "labels")
    labels = LabeledDataset(raw_labels.astype(np.int64))

    entries = []
    for rec in manifest["entries"]:
        for key in ("model_id", "model_type", "cost", "logits"):
            if key not in rec:
                raise ValidationError(f"manifest entry missing required field '{key}': {rec}")
        mid = rec["model_id"]
        flat = _read_values(base / rec["logits"], "<f4", n * c, f"entry '{mid}' logits")
        entries.append(
            PredictionSet(
                model_id=mid,
                model_type=rec["model_type"],
                logits=flat.reshape(n, c),
                cost=float(rec["cost"]),
                resolution=rec.get("resolution"),
                replicate_index=int(rec.get("replicate_index", 0)),
            )
        )
    return ModelPool(entries, labels)


def split_dataset(pool: ModelPool, fraction: float, seed: int):
    """Deterministic disjoint example split; first half gets floor(fraction*N).

    The index permutation comes from numpy's PCG64 generator seeded directly,
    so the split is reproducible across platforms. The first half is tagged
    "threshold-selection", the second "evaluation".
    """
    n = pool.num_examples
    if n < 2:
        raise ValidationError("split requires at least 2 examples")
    if not (0.0 < fraction < 1.0):
        raise ValidationError(f"fraction must be in (0, 1), got {fraction}")
    n_first = math.floor(fraction * n)
    if n_first == 0 or n_first == n:
        raise ValidationError(f"fraction {fraction} produces an empty half for N={n}")
    perm = np.random.Generator(np.random.PCG64(seed)).permutation(n)
    first = np.sort(perm[:n_first])
    second = np.sort(perm[n_first:])
    return (
        pool.subset(first, split_tag="threshold-selection"),
        pool.subset(second, split_tag="evaluation"),
    )


@dataclass(frozen=True)
class SynthConfig:
    """Config for synthetic pool generation (test/benchmark substrate).

    `accuracies` are per-model top-1 targets in (1/C, 1]; the generator hits
    them to within 0.5/N by construction. `correlation` in [0, 1) controls
    how much models agree on which examples are hard (0 = independent
    errors). Confidence margins scale with each model's cost rank so that
    pricier models are more confident when correct and cascades built on the
    output are non-degenerate.
    """

    num_models: int
    num_examples: int
    num_classes: int
    accuracies: tuple[float, ...]
    costs: tuple[float, ...]
    correlation: float = 0.5
    seed: int = 0
    # kept small so mean-of-logits and mean-of-probs committees agree the way
    # calibrated real models do; margins carry the confidence signal
    noise_scale: float = 0.25
    margin_scale: float = 4.0

    def __post_init__(self):
        if self.num_models < 1 or self.num_examples < 1 or self.num_classes < 2:
            raise ValidationError("need num_models >= 1, num_examples >= 1, num_classes >= 2")
        if len(self.accuracies) != self.num_models or len(self.costs) != self.num_models:
            raise ValidationError("accuracies and costs must have num_models entries")
        chance = 1.0 / self.num_classes
        for a in self.accuracies:
            if not (chance < a <= 1.0):
                raise ValidationError(
                    f"accuracy target {a} infeasible (must exceed chance {chance:.3f} and be <= 1)"
                )
        for cst in self.costs:
            if not (cst > 0):
                raise ValidationError(f"cost must be positive, got {cst}")
        if not (0.0 <= self.correlation < 1.0):
            raise ValidationError("correlation must be in [0, 1)")


def generate_synthetic_pool(config: SynthConfig) -> ModelPool:
    """Deterministic synthetic pool; pure in (config, seed).

    Per model, a shared-difficulty Gaussian copula decides which examples are
    answered correctly (the round(acc*N) easiest), and the confidence margin
    of the forced argmax shrinks toward zero at the correctness boundary, so
    max-probability confidence is informative about correctness.
    """
    rng = np.random.Generator(np.random.PCG64(config.seed))
    n, c, m = config.num_examples, config.num_classes, config.num_models
    labels = rng.integers(0, c, size=n)

    shared = rng.standard_normal(n)
    rho = config.correlation
    cost_order = np.argsort(np.argsort(config.costs, kind="stable"), kind="stable")
    entries = []
    for j in range(m):
        z = math.sqrt(rho) * shared + math.sqrt(1.0 - rho) * rng.standard_normal(n)
        # difficulty rank in [0, 1]; the easiest round(acc*N) examples are correct
        q = np.argsort(np.argsort(z, kind="stable"), kind="stable") / max(n - 1, 1)
        n_correct = int(round(config.accuracies[j] * n))
        order = np.argsort(z, kind="stable")
        correct = np.zeros(n, dtype=bool)
        correct[order[:n_correct]] = True

        acc = config.accuracies[j]
        rank_boost = 0.0 if m == 1 else cost_order[j] / (m - 1)
        scale = config.margin_scale * (1.0 + 0.75 * rank_boost)
        margin = np.where(
            correct,
            scale * (acc - q) / acc,
            0.25 * scale * (1.0 - q) / max(1.0 - acc, 1e-9),
        )
        margin = np.clip(margin, 0.0, scale) + 0.05

        logits = rng.normal(0.0, config.noise_scale, size=(n, c))
        wrong = (labels + rng.integers(1, c, size=n)) % c
        target = np.where(correct, labels, wrong)
        rows = np.arange(n)
        logits[rows, target] = logits.max(axis=1) + margin
        entries.append(
            PredictionSet(
                model_id=f"m{j}",
                model_type=f"m{j}",
                logits=logits.astype(np.float32),
                cost=float(config.costs[j]),
            )
        )
    return ModelPool(entries, LabeledDataset(labels, split_tag="synthetic"))
