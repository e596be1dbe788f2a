"""Linear classifier head over frozen features.

Rows of the weight matrix are kept in the order classes were first seen;
``seen_classes[i]`` labels row ``i``.  All losses are batch means.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

__all__ = [
    "PROB_FLOOR",
    "ClassifierState",
    "PredictionDistribution",
    "GradientBundle",
    "ModelError",
    "softmax",
    "log_softmax",
    "entropy",
    "forward",
    "forward_batch",
    "pde",
    "loss_ce",
    "loss_em",
    "batch_losses",
    "grads",
    "numerical_grads",
    "expand_head",
    "predict",
    "dump_head",
    "parse_head",
]

PROB_FLOOR = 1e-12


class ModelError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ClassifierState:
    weights: np.ndarray  # (k, d)
    biases: np.ndarray  # (k,)
    seen_classes: tuple[int, ...]

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.biases, dtype=np.float64)
        if w.ndim != 2 or b.shape != (w.shape[0],) or len(self.seen_classes) != w.shape[0]:
            raise ModelError(
                f"inconsistent head: weights {w.shape}, biases {b.shape}, "
                f"{len(self.seen_classes)} classes"
            )
        if len(set(self.seen_classes)) != len(self.seen_classes):
            raise ModelError("duplicate class ids in head")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "biases", b)
        object.__setattr__(self, "seen_classes", tuple(int(c) for c in self.seen_classes))

    @classmethod
    def empty(cls, dim: int) -> "ClassifierState":
        return cls(np.zeros((0, dim)), np.zeros(0), ())

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    @property
    def num_classes(self) -> int:
        return len(self.seen_classes)

    def row_of(self, class_id: int) -> int:
        try:
            return self.seen_classes.index(class_id)
        except ValueError:
            raise ModelError(f"class {class_id} not in head {self.seen_classes}") from None

    def __eq__(self, other):
        if not isinstance(other, ClassifierState):
            return NotImplemented
        return (
            self.seen_classes == other.seen_classes
            and np.array_equal(self.weights, other.weights)
            and np.array_equal(self.biases, other.biases)
        )


@dataclass(frozen=True)
class PredictionDistribution:
    logits: np.ndarray
    probabilities: np.ndarray
    classes: tuple[int, ...]


@dataclass(frozen=True, eq=False)
class GradientBundle:
    """Mean-over-batch gradients, split by loss.  Row ``i`` belongs to ``classes[i]``."""

    classes: tuple[int, ...]
    ce_w: np.ndarray
    ce_b: np.ndarray
    em_w: np.ndarray
    em_b: np.ndarray

    @property
    def g_ce(self) -> dict[int, tuple[np.ndarray, float]]:
        return {c: (self.ce_w[i], float(self.ce_b[i])) for i, c in enumerate(self.classes)}

    @property
    def g_em(self) -> dict[int, tuple[np.ndarray, float]]:
        return {c: (self.em_w[i], float(self.em_b[i])) for i, c in enumerate(self.classes)}


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def entropy(p: np.ndarray) -> np.ndarray:
    """Shannon entropy over the last axis, clipped into ``[0, log C]``.

    The clip only absorbs rounding; ``0 log 0`` is taken as 0.
    """
    p = np.asarray(p, dtype=np.float64)
    h = -(p * np.log(np.maximum(p, PROB_FLOOR))).sum(axis=-1)
    # adding 0.0 turns the -0.0 of a one-hot input into +0.0
    return np.clip(h, 0.0, np.log(p.shape[-1])) + 0.0


def _check_x(state: ClassifierState, x: np.ndarray):
    if state.num_classes == 0:
        raise ModelError("head has no classes")
    if x.shape[-1] != state.dim:
        raise ModelError(f"feature dimension {x.shape[-1]} != head dimension {state.dim}")


def forward(state: ClassifierState, x) -> PredictionDistribution:
    x = np.asarray(x, dtype=np.float64)
    _check_x(state, x)
    z = state.weights @ x + state.biases
    return PredictionDistribution(z, softmax(z), state.seen_classes)


def forward_batch(state: ClassifierState, X) -> tuple[np.ndarray, np.ndarray]:
    """Logits and probabilities for a ``(n, d)`` batch."""
    X = np.asarray(X, dtype=np.float64)
    _check_x(state, X)
    z = X @ state.weights.T + state.biases
    return z, softmax(z)


def _probs(p) -> np.ndarray:
    return p.probabilities if isinstance(p, PredictionDistribution) else np.asarray(p, dtype=np.float64)


def pde(p) -> float:
    """Prediction distribution entropy of one distribution."""
    return float(entropy(_probs(p)))


def loss_ce(p: PredictionDistribution, label: int) -> float:
    if label not in p.classes:
        raise ModelError(f"label {label} not among seen classes {p.classes}")
    q = p.probabilities[p.classes.index(label)]
    return float(-np.log(max(q, PROB_FLOOR)))


def loss_em(p) -> float:
    return pde(p)


def _label_rows(state: ClassifierState, labels) -> np.ndarray:
    index = {c: i for i, c in enumerate(state.seen_classes)}
    try:
        return np.array([index[int(c)] for c in labels], dtype=np.int64)
    except KeyError as exc:
        raise ModelError(f"label {exc.args[0]} not among seen classes {state.seen_classes}") from None


def _unpack(X, labels):
    # accept (features, labels), a SampleSet, or a list of LabeledSample
    if labels is not None:
        return np.asarray(X, dtype=np.float64), labels
    if hasattr(X, "features") and hasattr(X, "class_ids"):
        return X.features, X.class_ids
    samples = list(X)
    if not samples:
        raise ModelError("empty batch")
    return np.stack([s.features for s in samples]), [s.class_id for s in samples]


def batch_losses(state: ClassifierState, X, labels=None) -> tuple[float, float]:
    """Mean cross-entropy and mean entropy-minimization loss of a batch."""
    X, labels = _unpack(X, labels)
    z, _ = forward_batch(state, X)
    rows = _label_rows(state, labels)
    logp = log_softmax(z)
    ce = -logp[np.arange(len(rows)), rows].mean()
    em = -(np.exp(logp) * logp).sum(axis=1).mean()
    return float(ce), float(em)


def grads(state: ClassifierState, X, labels=None) -> GradientBundle:
    """Analytic mean-over-batch gradients of both losses w.r.t. every head row.

    Per sample, with logits z and p = softmax(z):
    dCE/dz_c = p_c - [c == y] and dH/dz_c = -p_c (log p_c + H).
    """
    X, labels = _unpack(X, labels)
    if X.ndim != 2 or len(X) == 0:
        raise ModelError("grads needs a non-empty (n, d) batch")
    z, _ = forward_batch(state, X)
    rows = _label_rows(state, labels)
    n = len(X)
    logp = log_softmax(z)
    p = np.exp(logp)
    h = -(p * logp).sum(axis=1, keepdims=True)

    dz_ce = p.copy()
    dz_ce[np.arange(n), rows] -= 1.0
    dz_ce /= n
    dz_em = -p * (logp + h) / n

    return GradientBundle(
        classes=state.seen_classes,
        ce_w=dz_ce.T @ X,
        ce_b=dz_ce.sum(axis=0),
        em_w=dz_em.T @ X,
        em_b=dz_em.sum(axis=0),
    )


def numerical_grads(state: ClassifierState, X, labels=None, loss: str = "ce", step: float = 1e-5):
    """Central finite-difference gradients ``(dW, db)`` of one batch loss."""
    X, labels = _unpack(X, labels)
    which = {"ce": 0, "em": 1}[loss]
    W, b = state.weights, state.biases
    dW, db = np.zeros_like(W), np.zeros_like(b)

    def f(W_, b_):
        return batch_losses(ClassifierState(W_, b_, state.seen_classes), X, labels)[which]

    for idx in np.ndindex(W.shape):
        wp, wm = W.copy(), W.copy()
        wp[idx] += step
        wm[idx] -= step
        dW[idx] = (f(wp, b) - f(wm, b)) / (2 * step)
    for i in range(len(b)):
        bp, bm = b.copy(), b.copy()
        bp[i] += step
        bm[i] -= step
        db[i] = (f(W, bp) - f(W, bm)) / (2 * step)
    return dW, db


def expand_head(state: ClassifierState, new_classes) -> ClassifierState:
    """Append zero-initialized rows for ``new_classes`` (in ascending id order)."""
    new = sorted(int(c) for c in new_classes)
    dup = set(new) & set(state.seen_classes)
    if dup or len(set(new)) != len(new):
        raise ModelError(f"classes already in head: {sorted(dup) or new}")
    k = len(new)
    return ClassifierState(
        np.vstack([state.weights, np.zeros((k, state.dim))]),
        np.concatenate([state.biases, np.zeros(k)]),
        state.seen_classes + tuple(new),
    )


def predict(state: ClassifierState, X) -> np.ndarray:
    """Argmax class ids; ties go to the lowest class id."""
    X = np.asarray(X, dtype=np.float64)
    if len(X) == 0:
        return np.zeros(0, dtype=np.int64)
    z, _ = forward_batch(state, X)
    order = np.argsort(state.seen_classes, kind="stable")
    ids = np.asarray(state.seen_classes)[order]
    return ids[np.argmax(z[:, order], axis=1)]


# --------------------------------------------------------------------------
# checkpoint text format

def dump_head(state: ClassifierState) -> str:
    classes = ",".join(str(c) for c in state.seen_classes)
    lines = [f"UILHEAD v1 dim={state.dim} classes={classes}"]
    for c, w, b in zip(state.seen_classes, state.weights, state.biases):
        vals = " ".join(f"{v:.17g}" for v in (b, *w))
        lines.append(f"class {c}: {vals}")
    return "\n".join(lines) + "\n"


_HEAD = re.compile(r"^UILHEAD v1 dim=(\d+) classes=([\d,]*)$")
_ROW = re.compile(r"^class (\d+):(.*)$")


def parse_head(text: str) -> ClassifierState:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ModelError("empty checkpoint")
    m = _HEAD.match(lines[0].strip())
    if not m:
        raise ModelError("line 1: malformed UILHEAD header")
    dim = int(m.group(1))
    classes = [int(c) for c in m.group(2).split(",") if c]
    if len(lines) - 1 != len(classes):
        raise ModelError(f"header lists {len(classes)} classes but {len(lines) - 1} rows follow")
    W, b = np.zeros((len(classes), dim)), np.zeros(len(classes))
    for i, (c, line) in enumerate(zip(classes, lines[1:])):
        rm = _ROW.match(line.strip())
        if not rm or int(rm.group(1)) != c:
            raise ModelError(f"line {i + 2}: expected row for class {c}")
        vals = [float(v) for v in rm.group(2).split()]
        if len(vals) != dim + 1:
            raise ModelError(f"line {i + 2}: expected {dim + 1} values, got {len(vals)}")
        b[i], W[i] = vals[0], vals[1:]
    return ClassifierState(W, b, tuple(classes))
