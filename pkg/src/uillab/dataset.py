"""Labeled feature streams for a scenario.

Features stand in for frozen-backbone embeddings.  They are either
synthesized as class/domain conditional Gaussian clusters or ingested from
a whitespace separated text file (one sample per line)::

    # class_id domain_id split d v1 ... vd
    0 1 train 3 0.12 -0.5 1.0
"""

from __future__ import annotations

import math
import os
import re
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .scenario import ScenarioSpec

__all__ = [
    "LabeledSample",
    "SampleSet",
    "TaskDataset",
    "Profile",
    "parse_profile",
    "SyntheticConfig",
    "DatasetError",
    "ProfileError",
    "EmbeddingFormatError",
    "UnknownCellError",
    "DimensionMismatchError",
    "synthesize",
    "split_counts",
    "ingest_embeddings",
    "read_embeddings",
    "write_embeddings",
    "class_histogram",
]


class DatasetError(ValueError):
    pass


class ProfileError(DatasetError):
    pass


class DimensionMismatchError(DatasetError):
    pass


class UnknownCellError(DatasetError):
    pass


class EmbeddingFormatError(DatasetError):
    def __init__(self, lineno: int, reason: str):
        super().__init__(f"line {lineno}: {reason}")
        self.lineno = lineno


@dataclass(frozen=True)
class LabeledSample:
    features: np.ndarray
    class_id: int
    domain_id: int
    task_index: int


class SampleSet:
    """Column-oriented block of samples belonging to one task split."""

    def __init__(self, features, class_ids, domain_ids, task_index: int):
        self.features = np.ascontiguousarray(features, dtype=np.float64)
        self.class_ids = np.asarray(class_ids, dtype=np.int64)
        self.domain_ids = np.asarray(domain_ids, dtype=np.int64)
        self.task_index = int(task_index)
        if self.features.ndim != 2:
            raise DimensionMismatchError("features must be a 2-D array")
        n = len(self.features)
        if len(self.class_ids) != n or len(self.domain_ids) != n:
            raise DatasetError("features and labels differ in length")
        for arr in (self.features, self.class_ids, self.domain_ids):
            arr.setflags(write=False)

    @classmethod
    def empty(cls, dim: int, task_index: int) -> "SampleSet":
        return cls(np.zeros((0, dim)), [], [], task_index)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return len(self.class_ids)

    def __iter__(self) -> Iterator[LabeledSample]:
        for x, c, d in zip(self.features, self.class_ids, self.domain_ids):
            yield LabeledSample(x, int(c), int(d), self.task_index)

    def __eq__(self, other):
        if not isinstance(other, SampleSet):
            return NotImplemented
        return (
            self.task_index == other.task_index
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.class_ids, other.class_ids)
            and np.array_equal(self.domain_ids, other.domain_ids)
        )

    __hash__ = None


@dataclass(frozen=True, eq=True)
class TaskDataset:
    task_index: int
    train: SampleSet
    test: SampleSet

    @property
    def dim(self) -> int:
        return self.train.dim


# --------------------------------------------------------------------------
# imbalance profiles

@dataclass(frozen=True)
class Profile:
    """Per-cell sample count rule.

    ``constant``: every cell gets ``base`` samples.  ``geometric``: the
    r-th class of a task (ascending class id) gets ``floor(base * ratio**r)``.
    """

    kind: str = "constant"
    base: int = 64
    ratio: float = 1.0

    def count(self, rank: int) -> int:
        if self.kind == "constant":
            n = self.base
        elif self.kind == "geometric":
            # small epsilon keeps exact powers like 64 * 0.5**3 from flooring to 7
            n = math.floor(self.base * self.ratio**rank + 1e-9)
        else:
            raise ProfileError(f"unknown profile kind {self.kind!r}")
        if n < 1:
            raise ProfileError(f"profile {self} assigns {n} samples to class rank {rank}")
        return n

    def __str__(self):
        if self.kind == "constant":
            return f"constant({self.base})"
        return f"geometric({self.base},{self.ratio!r})"


_PROFILE = re.compile(r"^(constant|geometric)\(([^)]*)\)$")


def parse_profile(text: str) -> Profile:
    """Parse ``constant(n)``, ``geometric(base,ratio)`` or keyword forms."""
    m = _PROFILE.match(text.replace(" ", ""))
    if not m:
        raise ProfileError(f"cannot parse profile {text!r}")
    kind, args = m.group(1), [a for a in m.group(2).split(",") if a]
    pos, kw = [], {}
    for a in args:
        if "=" in a:
            k, v = a.split("=", 1)
            kw[k] = v
        else:
            pos.append(a)
    try:
        if kind == "constant":
            base = int(kw.get("n", kw.get("base", pos[0] if pos else 64)))
            return Profile("constant", base, 1.0)
        base = int(kw.get("base", pos[0] if pos else 64))
        ratio = float(kw.get("ratio", pos[1] if len(pos) > 1 else 0.5))
    except (ValueError, IndexError):
        raise ProfileError(f"cannot parse profile {text!r}") from None
    if base < 1 or not 0 < ratio <= 1:
        raise ProfileError(f"profile needs base >= 1 and 0 < ratio <= 1, got {text!r}")
    return Profile("geometric", base, ratio)


@dataclass(frozen=True)
class SyntheticConfig:
    feature_dim: int = 16
    class_separation: float = 3.0
    domain_shift: float = 1.5
    noise_std: float = 1.5
    profile: Profile = Profile("constant", 64)
    seed: int = 0
    holdout: float = 0.2

    def __post_init__(self):
        if isinstance(self.profile, str):
            object.__setattr__(self, "profile", parse_profile(self.profile))
        if self.feature_dim < 2:
            raise DatasetError(f"feature_dim must be >= 2, got {self.feature_dim}")
        for name in ("class_separation", "domain_shift", "noise_std"):
            if not getattr(self, name) > 0:
                raise DatasetError(f"{name} must be > 0")
        if not 0 < self.holdout < 1:
            raise DatasetError("holdout must lie in (0, 1)")


def split_counts(n: int, holdout: float) -> tuple[int, int]:
    """(train, test) sizes for a cell of ``n`` samples; at least one test sample."""
    n_test = max(1, math.floor(holdout * n + 1e-9))
    return n - n_test, n_test


def _sphere(rng: np.random.Generator, count: int, dim: int, radius: float) -> np.ndarray:
    v = rng.standard_normal((count, dim))
    return radius * v / np.linalg.norm(v, axis=1, keepdims=True)


def synthesize(spec: ScenarioSpec, cfg: SyntheticConfig) -> list[TaskDataset]:
    """Gaussian clusters at ``anchor[c] + offset[m]`` for every cell, per task."""
    rng = np.random.default_rng(cfg.seed)
    d = cfg.feature_dim
    anchors = _sphere(rng, spec.grid.num_classes, d, cfg.class_separation)
    offsets = _sphere(rng, spec.grid.num_domains, d, cfg.domain_shift)

    out = []
    for t, cells in enumerate(spec.tasks):
        rank = {c: r for r, c in enumerate(spec.classes_of(t))}
        parts = {"train": ([], [], []), "test": ([], [], [])}
        for c, m in cells:
            n = cfg.profile.count(rank[c])
            n_train, n_test = split_counts(n, cfg.holdout)
            x = anchors[c] + offsets[m] + cfg.noise_std * rng.standard_normal((n, d))
            for key, block in (("test", x[:n_test]), ("train", x[n_test:])):
                feats, cls, dom = parts[key]
                feats.append(block)
                cls.extend([c] * len(block))
                dom.extend([m] * len(block))
        sets = {
            key: SampleSet(np.concatenate(f) if f else np.zeros((0, d)), cls, dom, t)
            for key, (f, cls, dom) in parts.items()
        }
        out.append(TaskDataset(t, sets["train"], sets["test"]))
    return out


# --------------------------------------------------------------------------
# embedding files

def read_embeddings(lines) -> list[tuple[int, int, str, np.ndarray]]:
    """Parse embedding-format lines into ``(class, domain, split, vector)`` rows."""
    rows = []
    dim = None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tok = line.split()
        if len(tok) < 4:
            raise EmbeddingFormatError(lineno, f"expected 'class domain split d v1..vd', got {len(tok)} fields")
        try:
            c, m, n = int(tok[0]), int(tok[1]), int(tok[3])
        except ValueError:
            raise EmbeddingFormatError(lineno, "class, domain and d must be integers") from None
        split = tok[2]
        if split not in ("train", "test"):
            raise EmbeddingFormatError(lineno, f"split must be train or test, got {split!r}")
        if len(tok) != 4 + n:
            raise EmbeddingFormatError(lineno, f"declared d={n} but found {len(tok) - 4} values")
        try:
            vec = np.array([float(v) for v in tok[4:]])
        except ValueError:
            raise EmbeddingFormatError(lineno, "non-numeric feature value") from None
        if dim is None:
            dim = n
        elif n != dim:
            raise DimensionMismatchError(f"line {lineno}: dimension {n} differs from earlier rows ({dim})")
        rows.append((c, m, split, vec))
    return rows


def ingest_embeddings(path: str | os.PathLike, spec: ScenarioSpec) -> list[TaskDataset]:
    """Route every row of an embedding file to the task owning its cell."""
    with open(path, encoding="utf-8") as fh:
        rows = read_embeddings(fh)
    return _route(rows, spec)


def _route(rows, spec: ScenarioSpec) -> list[TaskDataset]:
    dim = len(rows[0][3]) if rows else 0
    buckets = [{"train": ([], [], []), "test": ([], [], [])} for _ in spec.tasks]
    for c, m, split, vec in rows:
        try:
            t = spec.task_of((c, m))
        except KeyError:
            raise UnknownCellError(
                f"cell ({c},{m}) not in {spec.grid.num_classes}x{spec.grid.num_domains} grid"
            ) from None
        feats, cls, dom = buckets[t][split]
        feats.append(vec)
        cls.append(c)
        dom.append(m)
    out = []
    for t, parts in enumerate(buckets):
        sets = {
            key: SampleSet(np.array(f).reshape(len(f), dim), cls, dom, t)
            for key, (f, cls, dom) in parts.items()
        }
        out.append(TaskDataset(t, sets["train"], sets["test"]))
    return out


def write_embeddings(tasks: list[TaskDataset], path: str | os.PathLike) -> None:
    """Write tasks in embedding format; floats carry 17 significant digits."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# class_id domain_id split d v1 ... vd\n")
        for task in tasks:
            for split in ("train", "test"):
                s = getattr(task, split)
                for x, c, m in zip(s.features, s.class_ids, s.domain_ids):
                    vals = " ".join(f"{v:.17g}" for v in x)
                    fh.write(f"{c} {m} {split} {len(x)} {vals}\n")


def class_histogram(ds: TaskDataset) -> dict[int, int]:
    """Exact per-class counts of the training split."""
    ids, counts = np.unique(ds.train.class_ids, return_counts=True)
    return {int(c): int(n) for c, n in zip(ids, counts)}
