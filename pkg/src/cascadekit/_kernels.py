"""Hot inner loops for cascade exit simulation.

Threshold search evaluates thousands of threshold vectors, each of which
replays the exit decision over every example. Those loops are JIT-compiled
with numba by default; set CASCADEKIT_NO_NUMBA=1 to force the pure-numpy
fallback (used on platforms without numba and by the kernel benchmark).

Both paths are kept importable (`exit_stages_numpy`, and `exit_stages_numba`
when numba is present) so tests and benchmarks can compare them directly.

Kernel inputs, shared by both paths:
  conf       (n_gates, N) float64, confidence of the running aggregate at
             each gated stage (stage n has no gate and is absent)
  correct    (n_stages, N) bool, aggregate argmax == label per stage
  cumcost    (n_stages,) float64, cumulative cost through each stage
  thresholds (n_gates,) float64

An example exits at the first gate k with conf[k] >= thresholds[k], else at
the last stage. Costs are accumulated as counts @ cumcost, so results are
independent of example order.
"""

import os

import numpy as np


def _use_numba() -> bool:
    flag = os.environ.get("CASCADEKIT_NO_NUMBA", "").strip().lower()
    if flag in ("1", "true", "yes", "on"):
        return False
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


NUMBA_ENABLED = _use_numba()


def exit_stages_numpy(conf, thresholds):
    """1-based exit stage per example; stage n_gates+1 if no gate fires."""
    if conf.shape[0] == 0:
        return np.ones(conf.shape[1], dtype=np.int64)
    hits = conf >= thresholds[:, None]
    first = hits.argmax(axis=0).astype(np.int64) + 1
    return np.where(hits.any(axis=0), first, np.int64(conf.shape[0] + 1))


def cascade_outcome_numpy(conf, correct, cumcost, thresholds):
    """(n_correct, exit_counts) for one threshold vector."""
    stages = exit_stages_numpy(conf, thresholds) - 1
    n_stages = correct.shape[0]
    counts = np.bincount(stages, minlength=n_stages).astype(np.int64)
    n_correct = int(correct[stages, np.arange(conf.shape[1])].sum())
    return n_correct, counts


def _exit_stages_loop(conf, thresholds):
    n_gates, n_examples = conf.shape
    out = np.empty(n_examples, dtype=np.int64)
    for i in range(n_examples):
        stage = n_gates + 1
        for k in range(n_gates):
            if conf[k, i] >= thresholds[k]:
                stage = k + 1
                break
        out[i] = stage
    return out


def _cascade_outcome_loop(conf, correct, cumcost, thresholds):
    n_gates, n_examples = conf.shape
    n_stages = n_gates + 1
    counts = np.zeros(n_stages, dtype=np.int64)
    n_correct = 0
    for i in range(n_examples):
        stage = n_gates
        for k in range(n_gates):
            if conf[k, i] >= thresholds[k]:
                stage = k
                break
        counts[stage] += 1
        if correct[stage, i]:
            n_correct += 1
    return n_correct, counts


if NUMBA_ENABLED:
    from numba import njit

    exit_stages_numba = njit(cache=True, nogil=True)(_exit_stages_loop)
    cascade_outcome_numba = njit(cache=True, nogil=True)(_cascade_outcome_loop)
    exit_stages = exit_stages_numba
    cascade_outcome = cascade_outcome_numba
else:
    exit_stages = exit_stages_numpy
    cascade_outcome = cascade_outcome_numpy


def avg_cost_from_counts(counts, cumcost, num_examples) -> float:
    """Mean exit cost as dot(counts/N, cumcost); fixed n-term summation order.

    Dividing counts first makes the degenerate cases exact: all mass at one
    stage gives ratio 1.0 and reproduces that stage's cumulative cost bit for
    bit, so gated and ungated evaluation paths agree exactly.
    """
    ratios = counts.astype(np.float64) / num_examples
    return float(np.dot(ratios, cumcost))
