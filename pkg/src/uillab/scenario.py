"""Task streams over a class x domain grid.

A scenario partitions every (class, domain) cell of a grid into an ordered
list of disjoint, non-empty tasks.  Four regimes are supported:

* ``uil`` -- random task type and scale: a random composition of the cell
  count into ``T`` parts is laid over a shuffled cell list.
* ``vil`` -- every task holds ``K`` classes of a single domain.
* ``cil`` -- contiguous class blocks spanning all domains.
* ``dil`` -- one domain per task, all classes.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "REGIMES",
    "Cell",
    "GridSpec",
    "Regime",
    "ScenarioSpec",
    "ScenarioError",
    "InvalidGridError",
    "InfeasiblePartitionError",
    "ScenarioParseError",
    "ScenarioValidationError",
    "generate_scenario",
    "degenerate_to_vil",
    "validate_scenario",
    "serialize_scenario",
    "parse_scenario",
]

REGIMES = ("uil", "vil", "cil", "dil")

Cell = tuple[int, int]

# bounded resampling for the UIL scale-randomness guarantee and the
# min-domains-per-task guard
MAX_RESAMPLES = 1000


class ScenarioError(ValueError):
    pass


class InvalidGridError(ScenarioError):
    pass


class InfeasiblePartitionError(ScenarioError):
    pass


class ScenarioValidationError(ScenarioError):
    pass


class ScenarioParseError(ScenarioError):
    def __init__(self, lineno: int, reason: str):
        super().__init__(f"line {lineno}: {reason}")
        self.lineno = lineno
        self.reason = reason


@dataclass(frozen=True)
class GridSpec:
    num_classes: int
    num_domains: int

    def __post_init__(self):
        if self.num_classes < 1 or self.num_domains < 1:
            raise InvalidGridError(
                f"grid needs >= 1 class and >= 1 domain, got "
                f"{self.num_classes}x{self.num_domains}"
            )

    @property
    def num_cells(self) -> int:
        return self.num_classes * self.num_domains

    def cells(self) -> list[Cell]:
        return [(c, d) for c in range(self.num_classes) for d in range(self.num_domains)]


@dataclass(frozen=True)
class Regime:
    kind: str = "uil"
    vil_classes_per_task: int | None = None

    def __post_init__(self):
        if self.kind not in REGIMES:
            raise ScenarioError(f"unknown regime {self.kind!r}; expected one of {REGIMES}")
        if self.kind == "vil" and (self.vil_classes_per_task is None or self.vil_classes_per_task < 1):
            raise ScenarioError("vil regime requires vil_classes_per_task >= 1")
        if self.vil_classes_per_task is not None and self.vil_classes_per_task < 1:
            raise ScenarioError("vil_classes_per_task must be >= 1")


@dataclass(frozen=True)
class ScenarioSpec:
    """An immutable, validated task stream.

    ``tasks[t]`` is a tuple of cells sorted ascending by ``(class, domain)``.
    """

    grid: GridSpec
    regime: Regime
    num_tasks: int
    seed: int
    tasks: tuple[tuple[Cell, ...], ...]
    _owner: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        tasks = tuple(tuple(sorted((int(c), int(d)) for c, d in t)) for t in self.tasks)
        object.__setattr__(self, "tasks", tasks)
        validate_scenario(self)
        owner = {cell: t for t, cells in enumerate(tasks) for cell in cells}
        object.__setattr__(self, "_owner", owner)

    def task_of(self, cell: Cell) -> int:
        """Index of the task owning ``cell``; ``KeyError`` if outside the grid."""
        return self._owner[cell]

    def classes_of(self, t: int) -> tuple[int, ...]:
        return tuple(sorted({c for c, _ in self.tasks[t]}))

    def domains_of(self, t: int) -> tuple[int, ...]:
        return tuple(sorted({d for _, d in self.tasks[t]}))


def validate_scenario(spec: ScenarioSpec) -> None:
    """Raise ScenarioValidationError if ``spec`` breaks a partition invariant."""
    grid = spec.grid
    if spec.num_tasks != len(spec.tasks):
        raise ScenarioValidationError(
            f"header declares {spec.num_tasks} tasks but {len(spec.tasks)} are listed"
        )
    seen: set[Cell] = set()
    for t, cells in enumerate(spec.tasks):
        if not cells:
            raise ScenarioValidationError(f"empty task {t}")
        for c, d in cells:
            if not (0 <= c < grid.num_classes and 0 <= d < grid.num_domains):
                raise ScenarioValidationError(f"cell ({c},{d}) of task {t} outside grid")
            if (c, d) in seen:
                raise ScenarioValidationError(f"cells not disjoint: ({c},{d}) repeated in task {t}")
            seen.add((c, d))
    if len(seen) != grid.num_cells:
        raise ScenarioValidationError(
            f"tasks cover {len(seen)} of {grid.num_cells} grid cells"
        )
    if spec.regime.kind == "vil":
        k = spec.regime.vil_classes_per_task
        for t, cells in enumerate(spec.tasks):
            domains = {d for _, d in cells}
            n_cls = len({c for c, _ in cells})
            if len(domains) != 1:
                raise ScenarioValidationError(f"vil task {t} spans {len(domains)} domains")
            # the remainder block of a domain may be smaller than k
            if n_cls > k:
                raise ScenarioValidationError(f"vil task {t} holds {n_cls} classes, expected {k}")


def degenerate_to_vil(spec: ScenarioSpec) -> bool:
    """True iff every task has one domain and all tasks share one class count."""
    counts = set()
    for cells in spec.tasks:
        if len({d for _, d in cells}) != 1:
            return False
        counts.add(len({c for c, _ in cells}))
    return len(counts) == 1


def _shape_signature(tasks) -> set[tuple[int, int]]:
    return {(len({c for c, _ in t}), len({d for _, d in t})) for t in tasks}


def _uil_partition(grid: GridSpec, num_tasks: int, rng: np.random.Generator):
    cells = grid.cells()
    n = len(cells)
    # stars and bars: T-1 distinct cut points among the n-1 gaps
    cuts = np.sort(rng.choice(n - 1, size=num_tasks - 1, replace=False) + 1) if num_tasks > 1 else np.array([], int)
    order = rng.permutation(n)
    bounds = [0, *cuts.tolist(), n]
    return [[cells[i] for i in order[lo:hi]] for lo, hi in zip(bounds[:-1], bounds[1:])]


def _generate_uil(grid, num_tasks, rng, min_domains_per_task):
    # scale randomness must be realized whenever the grid allows two shapes
    need_variety = 2 <= num_tasks < grid.num_cells
    if min_domains_per_task is not None and min_domains_per_task > grid.num_domains:
        raise InfeasiblePartitionError(
            f"min_domains_per_task={min_domains_per_task} exceeds {grid.num_domains} domains"
        )
    fallback = None
    for _ in range(MAX_RESAMPLES):
        tasks = _uil_partition(grid, num_tasks, rng)
        if min_domains_per_task is not None and any(
            len({d for _, d in t}) < min_domains_per_task for t in tasks
        ):
            continue
        if need_variety and len(_shape_signature(tasks)) < 2:
            fallback = fallback or tasks
            continue
        return tasks
    if fallback is not None:
        return fallback
    raise InfeasiblePartitionError(
        f"no partition with >= {min_domains_per_task} domains per task found "
        f"after {MAX_RESAMPLES} draws"
    )


def _blocks(items, size):
    return [items[i:i + size] for i in range(0, len(items), size)]


def _generate_vil(grid, regime, num_tasks, rng):
    k = regime.vil_classes_per_task
    per_domain = -(-grid.num_classes // k)
    expected = per_domain * grid.num_domains
    if num_tasks != expected:
        raise InfeasiblePartitionError(
            f"vil with {k} classes/task on a {grid.num_classes}x{grid.num_domains} grid "
            f"yields {expected} tasks, not {num_tasks}"
        )
    tasks = []
    for d in range(grid.num_domains):
        classes = rng.permutation(grid.num_classes).tolist()
        tasks.extend([[(c, d) for c in block] for block in _blocks(classes, k)])
    order = rng.permutation(len(tasks))
    return [tasks[i] for i in order]


def _generate_cil(grid, regime, num_tasks):
    classes = list(range(grid.num_classes))
    if regime.vil_classes_per_task is not None:
        blocks = _blocks(classes, regime.vil_classes_per_task)
        if len(blocks) != num_tasks:
            raise InfeasiblePartitionError(
                f"cil with {regime.vil_classes_per_task} classes/task yields "
                f"{len(blocks)} tasks, not {num_tasks}"
            )
    else:
        if num_tasks > grid.num_classes:
            raise InfeasiblePartitionError(
                f"cil needs num_tasks <= {grid.num_classes} classes, got {num_tasks}"
            )
        blocks = [b.tolist() for b in np.array_split(np.arange(grid.num_classes), num_tasks)]
    return [[(c, d) for c in block for d in range(grid.num_domains)] for block in blocks]


def _generate_dil(grid, num_tasks):
    if num_tasks != grid.num_domains:
        raise InfeasiblePartitionError(
            f"dil needs one task per domain ({grid.num_domains}), got {num_tasks}"
        )
    return [[(c, d) for c in range(grid.num_classes)] for d in range(grid.num_domains)]


def generate_scenario(
    grid: GridSpec,
    regime: Regime,
    num_tasks: int,
    seed: int,
    min_domains_per_task: int | None = None,
) -> ScenarioSpec:
    """Partition ``grid`` into ``num_tasks`` tasks under ``regime``.

    The result is a pure function of the arguments.  ``min_domains_per_task``
    only applies to the UIL regime; candidate partitions are redrawn (at most
    ``MAX_RESAMPLES`` times) until every task covers that many domains.
    """
    if num_tasks < 1:
        raise InfeasiblePartitionError("num_tasks must be >= 1")
    if num_tasks > grid.num_cells:
        raise InfeasiblePartitionError(
            f"{num_tasks} tasks cannot partition {grid.num_cells} cells"
        )
    if seed < 0:
        raise ScenarioError("seed must be unsigned")
    rng = np.random.default_rng(seed)
    if regime.kind == "uil":
        tasks = _generate_uil(grid, num_tasks, rng, min_domains_per_task)
    elif regime.kind == "vil":
        tasks = _generate_vil(grid, regime, num_tasks, rng)
    elif regime.kind == "cil":
        tasks = _generate_cil(grid, regime, num_tasks)
    else:
        tasks = _generate_dil(grid, num_tasks)
    return ScenarioSpec(grid=grid, regime=regime, num_tasks=num_tasks, seed=seed,
                        tasks=tuple(tuple(t) for t in tasks))


_HEADER = re.compile(r"^UILSCEN v1((?: \w+=\S*)+)$")
_TASK = re.compile(r"^task (\d+):(.*)$")
_CELL = re.compile(r"^\((\d+),(\d+)\)$")


def serialize_scenario(spec: ScenarioSpec) -> bytes:
    head = (
        f"UILSCEN v1 classes={spec.grid.num_classes} domains={spec.grid.num_domains} "
        f"tasks={spec.num_tasks} regime={spec.regime.kind} seed={spec.seed}"
    )
    if spec.regime.vil_classes_per_task is not None:
        head += f" vil_classes={spec.regime.vil_classes_per_task}"
    lines = [head]
    for t, cells in enumerate(spec.tasks):
        body = " ".join(f"({c},{d})" for c, d in cells)
        lines.append(f"task {t}: {body}".rstrip())
    return ("\n".join(lines) + "\n").encode("utf-8")


def parse_scenario(data: bytes | str) -> ScenarioSpec:
    """Inverse of :func:`serialize_scenario`.

    Malformed lines raise :class:`ScenarioParseError` carrying the 1-based
    line number; well-formed files describing an invalid partition raise
    :class:`ScenarioValidationError`.
    """
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    lines = text.splitlines()
    if not lines:
        raise ScenarioParseError(1, "missing UILSCEN header")
    m = _HEADER.match(lines[0].strip())
    if not m:
        raise ScenarioParseError(1, "malformed header, expected 'UILSCEN v1 key=value ...'")
    keys = dict(kv.split("=", 1) for kv in m.group(1).split())
    try:
        classes, domains = int(keys["classes"]), int(keys["domains"])
        num_tasks, seed = int(keys["tasks"]), int(keys["seed"])
        kind = keys["regime"]
        vil = int(keys["vil_classes"]) if "vil_classes" in keys else None
    except KeyError as exc:
        raise ScenarioParseError(1, f"header missing key {exc.args[0]!r}") from None
    except ValueError as exc:
        raise ScenarioParseError(1, f"non-integer header value ({exc})") from None

    tasks = []
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line:
            continue
        tm = _TASK.match(line)
        if not tm:
            raise ScenarioParseError(lineno, f"expected 'task <t>: (c,d) ...', got {line!r}")
        if int(tm.group(1)) != len(tasks):
            raise ScenarioParseError(lineno, f"task index {tm.group(1)} out of order")
        cells = []
        for tok in tm.group(2).split():
            cm = _CELL.match(tok)
            if not cm:
                raise ScenarioParseError(lineno, f"bad cell token {tok!r}")
            cells.append((int(cm.group(1)), int(cm.group(2))))
        tasks.append(tuple(cells))

    try:
        grid = GridSpec(classes, domains)
        regime = Regime(kind, vil)
    except ScenarioError as exc:
        raise ScenarioParseError(1, str(exc)) from None
    return ScenarioSpec(grid=grid, regime=regime, num_tasks=num_tasks, seed=seed, tasks=tuple(tasks))
