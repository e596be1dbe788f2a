"""Incremental training over a task stream with plain SGD on the head."""

from __future__ import annotations

import hashlib
import os
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .dataset import TaskDataset
from .model import ClassifierState, dump_head, expand_head, grads, parse_head, predict
from .recalibration import DIAG_COLUMNS, RecalConfig, recalibrate

__all__ = [
    "METHODS",
    "TrainConfig",
    "RunRecord",
    "TrainingError",
    "MissingCheckpointError",
    "ablation",
    "train_stream",
    "evaluate_all",
    "accuracy_matrix",
    "write_run",
    "read_run",
    "read_meta",
    "config_from_meta",
    "fingerprint_tasks",
]

METHODS = ("baseline_ce", "mico")


class TrainingError(ValueError):
    pass


class MissingCheckpointError(TrainingError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one run.

    ``baseline_ce`` ignores the toggles in ``recal`` (plain cross-entropy);
    ``mico`` applies them, so component ablation rows are ``mico`` with some
    toggles off (see :func:`ablation`).
    """

    learning_rate: float = 0.1
    epochs_per_task: int = 20
    batch_size: int = 64
    recal: RecalConfig = RecalConfig()
    seed: int = 0
    method: str = "mico"

    def __post_init__(self):
        if self.method not in METHODS:
            raise TrainingError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if not self.learning_rate > 0:
            raise TrainingError("learning_rate must be > 0")
        if self.batch_size < 1 or self.epochs_per_task < 0:
            raise TrainingError("batch_size must be >= 1 and epochs_per_task >= 0")
        r = self.recal
        if self.method == "mico" and r.enable_direction and not r.enable_multi_objective:
            raise TrainingError("direction recalibration requires the multi-objective loss (dir needs mobj)")

    @property
    def effective_recal(self) -> RecalConfig:
        if self.method == "baseline_ce":
            return replace(self.recal, enable_direction=False, enable_magnitude=False,
                           enable_multi_objective=False)
        return self.recal

    def as_dict(self) -> dict:
        r = self.recal
        return {
            "method": self.method,
            "learning_rate": self.learning_rate,
            "epochs_per_task": self.epochs_per_task,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "gamma": r.gamma,
            "rho": r.rho,
            "w_floor": r.w_floor,
            "mobj": r.enable_multi_objective,
            "dir": r.enable_direction,
            "mag": r.enable_magnitude,
        }


def ablation(mobj: bool, dir: bool, mag: bool, **kwargs) -> TrainConfig:
    """TrainConfig for one row of the component ablation grid."""
    recal_kw = {k: kwargs.pop(k) for k in ("gamma", "rho", "w_floor") if k in kwargs}
    recal = RecalConfig(enable_multi_objective=mobj, enable_direction=dir,
                        enable_magnitude=mag, **recal_kw)
    return TrainConfig(recal=recal, method="mico", **kwargs)


@dataclass(eq=False)
class RunRecord:
    fingerprint: str
    config: TrainConfig
    checkpoints: list[ClassifierState] = field(default_factory=list)
    diagnostics: np.ndarray = field(default_factory=lambda: np.zeros((0, len(DIAG_COLUMNS))))
    wall_clock: list[float] = field(default_factory=list)

    def __eq__(self, other):
        # wall-clock time is not part of a run's identity
        if not isinstance(other, RunRecord):
            return NotImplemented
        return (
            self.fingerprint == other.fingerprint
            and self.config == other.config
            and self.checkpoints == other.checkpoints
            and np.array_equal(self.diagnostics, other.diagnostics, equal_nan=True)
        )


def _hash_task(h, task: TaskDataset):
    s = task.train
    h.update(f"task {task.task_index} {s.features.shape}".encode())
    h.update(s.features.tobytes())
    h.update(s.class_ids.tobytes())
    h.update(s.domain_ids.tobytes())


def fingerprint_tasks(tasks, cfg: TrainConfig) -> str:
    h = hashlib.sha256(repr(sorted(cfg.as_dict().items())).encode())
    for task in tasks:
        _hash_task(h, task)
    return h.hexdigest()


def train_stream(tasks, cfg: TrainConfig) -> RunRecord:
    """Train the head task by task; only task ``t``'s train split is read during task ``t``."""
    if len(tasks) == 0:
        raise TrainingError("no tasks to train on")
    recal = cfg.effective_recal
    rng = np.random.default_rng(cfg.seed)
    h = hashlib.sha256(repr(sorted(cfg.as_dict().items())).encode())
    state: ClassifierState | None = None
    checkpoints, diag, clock = [], [], []
    step = 0

    for task in tasks:
        t0 = time.perf_counter()
        train = task.train
        _hash_task(h, task)
        X, y = train.features, train.class_ids
        if state is None:
            state = ClassifierState.empty(X.shape[1])
        elif X.shape[1] != state.dim:
            raise TrainingError(f"task {task.task_index} has dim {X.shape[1]}, expected {state.dim}")
        new = set(np.unique(y).tolist()) - set(state.seen_classes)
        if new:
            state = expand_head(state, new)

        W, b = state.weights.copy(), state.biases.copy()
        classes = state.seen_classes
        n = len(y)
        for _ in range(cfg.epochs_per_task):
            if n == 0:
                break
            perm = rng.permutation(n)
            for lo in range(0, n, cfg.batch_size):
                idx = perm[lo:lo + cfg.batch_size]
                cur = ClassifierState(W, b, classes)
                out = recalibrate(grads(cur, X[idx], y[idx]), recal)
                W = W - cfg.learning_rate * out.weights
                b = b - cfg.learning_rate * out.biases
                diag.extend(out.diagnostics(step))
                step += 1
        state = ClassifierState(W, b, classes)
        checkpoints.append(state)
        clock.append(time.perf_counter() - t0)

    diagnostics = np.array(diag, dtype=np.float64).reshape(-1, len(DIAG_COLUMNS))
    return RunRecord(h.hexdigest(), cfg, checkpoints, diagnostics, clock)


def _accuracy(state: ClassifierState, task: TaskDataset) -> float:
    s = task.test
    if len(s) == 0:
        return float("nan")
    return float(np.mean(predict(state, s.features) == s.class_ids))


def evaluate_all(record: RunRecord, tasks, upto: int) -> np.ndarray:
    """Test accuracy on tasks ``0..upto`` using the checkpoint taken after task ``upto``."""
    if not 0 <= upto < len(record.checkpoints):
        raise MissingCheckpointError(
            f"no checkpoint after task {upto}; run has {len(record.checkpoints)}"
        )
    state = record.checkpoints[upto]
    return np.array([_accuracy(state, tasks[t]) for t in range(upto + 1)])


def accuracy_matrix(record: RunRecord, tasks):
    """Lower-triangular accuracy matrix over all checkpoints of ``record``."""
    from .metrics import AccuracyMatrix

    T = len(record.checkpoints)
    R = np.full((T, T), np.nan)
    for k in range(T):
        R[k, :k + 1] = evaluate_all(record, tasks, k)
    weights = np.array([len(tasks[t].test) for t in range(T)], dtype=np.float64)
    return AccuracyMatrix(R, weights)


# --------------------------------------------------------------------------
# run directories

def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_run(record: RunRecord, rundir: str | os.PathLike, extra_meta: dict | None = None) -> None:
    """Write ``checkpoints/task_<t>.head``, ``diag.csv`` and ``run.meta``."""
    rundir = Path(rundir)
    (rundir / "checkpoints").mkdir(parents=True, exist_ok=True)
    for t, state in enumerate(record.checkpoints):
        (rundir / "checkpoints" / f"task_{t}.head").write_text(dump_head(state))
    with open(rundir / "diag.csv", "w") as fh:
        fh.write(",".join(DIAG_COLUMNS) + "\n")
        for row in record.diagnostics:
            step, c, *rest = row
            fh.write(f"{int(step)},{int(c)}," + ",".join(repr(float(v)) for v in rest) + "\n")
    meta = {"fingerprint": record.fingerprint, "num_tasks": len(record.checkpoints)}
    meta.update(record.config.as_dict())
    meta.update(extra_meta or {})
    (rundir / "run.meta").write_text("".join(f"{k}={_fmt(v)}\n" for k, v in meta.items()))


def read_meta(path: str | os.PathLike) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text().splitlines():
        if line.strip() and not line.startswith("#"):
            k, _, v = line.partition("=")
            out[k.strip()] = v.strip()
    return out


def _bool(s: str) -> bool:
    return s.strip().lower() in ("1", "true", "yes", "on")


def config_from_meta(meta: dict[str, str]) -> TrainConfig:
    recal = RecalConfig(
        gamma=float(meta["gamma"]), rho=float(meta["rho"]), w_floor=float(meta["w_floor"]),
        enable_multi_objective=_bool(meta["mobj"]), enable_direction=_bool(meta["dir"]),
        enable_magnitude=_bool(meta["mag"]),
    )
    return TrainConfig(
        learning_rate=float(meta["learning_rate"]), epochs_per_task=int(meta["epochs_per_task"]),
        batch_size=int(meta["batch_size"]), recal=recal, seed=int(meta["seed"]),
        method=meta["method"],
    )


def read_run(rundir: str | os.PathLike) -> RunRecord:
    """Load a run directory written by :func:`write_run` (wall-clock is not stored)."""
    rundir = Path(rundir)
    meta = read_meta(rundir / "run.meta")
    T = int(meta["num_tasks"])
    checkpoints = []
    for t in range(T):
        path = rundir / "checkpoints" / f"task_{t}.head"
        if not path.exists():
            raise MissingCheckpointError(f"missing checkpoint {path}")
        checkpoints.append(parse_head(path.read_text()))
    diag = np.loadtxt(rundir / "diag.csv", delimiter=",", skiprows=1, ndmin=2)
    diag = diag.reshape(-1, len(DIAG_COLUMNS))
    return RunRecord(meta["fingerprint"], config_from_meta(meta), checkpoints, diag, [])
