"""Evaluation protocol and analysis instrumentation.

Conventions:

* forgetting of task ``t`` at step ``k`` is ``max_{t<=j<=k} R[j][t] - R[k][t]``
  (never negative), averaged over ``t < k``;
* weighted accuracy weights each task by its test-sample count.

The three summary metrics read every stored double as its shortest
round-trip decimal and evaluate in exact rational arithmetic, rounding
once at the end.  Hand-computed decimal examples such as ``0.9 - 0.7``
therefore come out as ``0.2`` exactly, and results are bit reproducible.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.stats import spearmanr

from .model import ClassifierState, entropy, forward_batch, log_softmax, predict

__all__ = [
    "FORGETTING_DEFINITION",
    "WACC_WEIGHTS",
    "DEFAULT_INTERVALS",
    "AccuracyMatrix",
    "EntropyProfile",
    "ClassGradientProfile",
    "MetricsError",
    "avg_acc",
    "weighted_acc",
    "forgetting",
    "entropy_profile",
    "class_gradient_profile",
    "per_class_accuracy",
    "write_report",
    "write_entropy_profile",
    "write_class_profile",
]

FORGETTING_DEFINITION = "mean over t<k of max_{t<=j<=k} R[j][t] - R[k][t]"
WACC_WEIGHTS = "test-sample count per task"
DEFAULT_INTERVALS = 27


class MetricsError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class AccuracyMatrix:
    """``R[k, t]``: accuracy on task ``t`` after training task ``k`` (nan above the diagonal)."""

    R: np.ndarray
    task_weights: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.R, dtype=np.float64)
        if R.ndim != 2 or R.shape[0] != R.shape[1]:
            raise MetricsError(f"R must be square, got {R.shape}")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "task_weights", np.asarray(self.task_weights, dtype=np.float64))

    @property
    def num_tasks(self) -> int:
        return self.R.shape[0]

    def row(self, k: int) -> np.ndarray:
        if not 0 <= k < self.num_tasks:
            raise MetricsError(f"task index {k} out of range")
        r = self.R[k, :k + 1]
        if np.isnan(r).any():
            raise MetricsError(f"row {k} is incomplete")
        return r


def _as_matrix(R) -> AccuracyMatrix:
    if isinstance(R, AccuracyMatrix):
        return R
    R = np.asarray(R, dtype=np.float64)
    return AccuracyMatrix(R, np.ones(R.shape[0]))


def _q(values) -> list[Fraction]:
    return [Fraction(repr(float(v))) for v in values]


def avg_acc(R, k: int) -> float:
    row = _as_matrix(R).row(k)
    return float(sum(_q(row)) / (k + 1))


def weighted_acc(R, k: int, weights=None) -> float:
    m = _as_matrix(R)
    row = m.row(k)
    w = np.asarray(m.task_weights if weights is None else weights, dtype=np.float64)[:k + 1]
    if (w < 0).any():
        raise MetricsError("task weights must be non-negative")
    total = sum(_q(w))
    if total <= 0:
        raise MetricsError("task weights sum to zero")
    return float(sum(a * b for a, b in zip(_q(w), _q(row))) / total)


def forgetting(R, k: int) -> float:
    m = _as_matrix(R)
    if k == 0:
        return 0.0
    m.row(k)
    drops = [_q([np.max(m.R[t:k + 1, t])])[0] - _q([m.R[k, t]])[0] for t in range(k)]
    return float(sum(drops) / k)


# --------------------------------------------------------------------------
# entropy analysis

@dataclass(frozen=True, eq=False)
class EntropyProfile:
    edges: np.ndarray
    ratio: np.ndarray
    mean_loss: np.ndarray
    mean_acc: np.ndarray
    entropy_mean: float
    entropy_var: float


def entropy_profile(state: ClassifierState, X, labels, num_intervals: int = DEFAULT_INTERVALS) -> EntropyProfile:
    """Bin test samples by prediction entropy into equal-width intervals on [0, log C]."""
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels)
    if len(X) == 0:
        raise MetricsError("empty test set")
    if num_intervals < 1:
        raise MetricsError("num_intervals must be >= 1")
    z, p = forward_batch(state, X)
    h = entropy(p)
    rows = np.array([state.row_of(int(c)) for c in labels])
    loss = -log_softmax(z)[np.arange(len(X)), rows]
    correct = predict(state, X) == labels

    top = math.log(state.num_classes) if state.num_classes > 1 else 1.0
    edges = np.linspace(0.0, top, num_intervals + 1)
    idx = np.minimum((h / top * num_intervals).astype(np.int64), num_intervals - 1)
    counts = np.bincount(idx, minlength=num_intervals)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_loss = np.bincount(idx, weights=loss, minlength=num_intervals) / counts
        mean_acc = np.bincount(idx, weights=correct.astype(float), minlength=num_intervals) / counts
    return EntropyProfile(edges, counts / len(X), mean_loss, mean_acc, float(h.mean()), float(h.var()))


# --------------------------------------------------------------------------
# per-class gradient magnitude vs accuracy

@dataclass(frozen=True)
class ClassGradientProfile:
    class_ids: tuple[int, ...]
    n_train: tuple[int, ...]
    mean_mag: tuple[float | None, ...]
    final_acc: tuple[float | None, ...]
    spearman: float | None


def per_class_accuracy(state: ClassifierState, X, labels) -> dict[int, float]:
    labels = np.asarray(labels)
    pred = predict(state, X)
    return {int(c): float(np.mean(pred[labels == c] == c)) for c in np.unique(labels)}


def class_gradient_profile(diagnostics, accuracy: dict[int, float], histogram: dict[int, int]) -> ClassGradientProfile:
    """Mean logged ``mag_pre`` per class paired with final accuracy and train count.

    ``diagnostics`` is a ``(rows, 7)`` array in diag.csv column order or a
    mapping ``class_id -> list of magnitudes``.
    """
    if isinstance(diagnostics, dict):
        logged = {int(c): np.asarray(v, dtype=np.float64) for c, v in diagnostics.items()}
    else:
        d = np.asarray(diagnostics, dtype=np.float64).reshape(-1, 7)
        logged = {int(c): d[d[:, 1] == c, 3] for c in np.unique(d[:, 1])}
    classes = sorted(set(logged) | set(accuracy) | set(histogram))
    mags = tuple(float(logged[c].mean()) if c in logged and len(logged[c]) else None for c in classes)
    accs = tuple(accuracy.get(c) for c in classes)
    pairs = [(m, a) for m, a in zip(mags, accs) if m is not None and a is not None]
    rho = None
    if len(pairs) >= 2:
        m, a = np.array(pairs).T
        if np.ptp(m) > 0 and np.ptp(a) > 0:
            rho = float(spearmanr(m, a).statistic)
    return ClassGradientProfile(
        tuple(classes), tuple(int(histogram.get(c, 0)) for c in classes), mags, accs, rho
    )


# --------------------------------------------------------------------------
# report files

def _num(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "null"
    return repr(float(v))


def write_report(R: AccuracyMatrix, outdir: str | os.PathLike, extra: dict | None = None) -> None:
    """``report.csv`` (metric,task_index,value) plus ``report.meta`` conventions."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    lines = ["metric,task_index,value"]
    for k in range(R.num_tasks):
        for t in range(k + 1):
            lines.append(f"acc_{t},{k},{_num(R.R[k, t])}")
        lines.append(f"avg_acc,{k},{_num(avg_acc(R, k))}")
        lines.append(f"weighted_acc,{k},{_num(weighted_acc(R, k))}")
        lines.append(f"forgetting,{k},{_num(forgetting(R, k))}")
    (outdir / "report.csv").write_text("\n".join(lines) + "\n")
    meta = {"forgetting_definition": FORGETTING_DEFINITION, "wacc_weights": WACC_WEIGHTS,
            "task_weights": ",".join(str(int(w)) for w in R.task_weights)}
    meta.update(extra or {})
    (outdir / "report.meta").write_text("".join(f"{k}={v}\n" for k, v in meta.items()))


def write_entropy_profile(prof: EntropyProfile, path: str | os.PathLike) -> None:
    lines = ["interval_lo,interval_hi,ratio,mean_loss,mean_acc"]
    for i in range(len(prof.ratio)):
        lines.append(",".join([_num(prof.edges[i]), _num(prof.edges[i + 1]), _num(prof.ratio[i]),
                               _num(prof.mean_loss[i]), _num(prof.mean_acc[i])]))
    lines.append(f"# entropy_mean={_num(prof.entropy_mean)} entropy_var={_num(prof.entropy_var)}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_class_profile(prof: ClassGradientProfile, path: str | os.PathLike) -> None:
    lines = ["class_id,n_train,mean_mag,final_acc"]
    for row in zip(prof.class_ids, prof.n_train, prof.mean_mag, prof.final_acc):
        lines.append(f"{row[0]},{row[1]},{_num(row[2])},{_num(row[3])}")
    lines.append(f"# spearman={_num(prof.spearman)}")
    Path(path).write_text("\n".join(lines) + "\n")
