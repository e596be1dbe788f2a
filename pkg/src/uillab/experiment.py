"""End-to-end pipelines and multi-seed experiment plans.

A plan file is line oriented, with ``[section]`` headers and ``key=value``
lines whose keys mirror the CLI flags::

    [plan]
    seeds=0,1,2
    preset=ablation        # optional: ablation | gamma_sweep

    [scenario]
    classes=6
    domains=4
    tasks=8
    regime=uil

    [data]
    dim=16
    profile=geometric(160,0.5)

    [train]
    lr=0.1
    w_floor=0.5

    [method mico-nodir]
    method=mico
    dir=false

Each plan seed ``s`` seeds the scenario, the synthetic data and the
training run of every method.  Cells live under
``<root>/cells/<method>/seed_<s>/`` and are marked complete by a ``DONE``
file, which ``resume`` uses to skip them.
"""

from __future__ import annotations

import logging
import math
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .dataset import SyntheticConfig, TaskDataset, ingest_embeddings, parse_profile, synthesize, write_embeddings
from .metrics import write_report
from .recalibration import RecalConfig
from .scenario import GridSpec, Regime, ScenarioSpec, generate_scenario, parse_scenario, serialize_scenario
from .trainer import TrainConfig, accuracy_matrix, read_run, train_stream, write_run

__all__ = [
    "ScenarioArgs",
    "MethodSpec",
    "ExperimentPlan",
    "PlanError",
    "PlanResult",
    "ablation_methods",
    "gamma_sweep_methods",
    "parse_plan",
    "load_plan",
    "run_cell",
    "run_plan",
    "load_data",
    "train_run",
    "evaluate_run",
    "final_metrics",
]

log = logging.getLogger(__name__)

SUMMARY_COLUMNS = (
    "method", "n_runs", "avg_acc_mean", "avg_acc_std", "weighted_acc_mean",
    "weighted_acc_std", "forgetting_mean", "forgetting_std",
)


class PlanError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioArgs:
    classes: int = 6
    domains: int = 4
    tasks: int = 8
    regime: str = "uil"
    vil_classes: int | None = None
    min_domains_per_task: int | None = None

    def build(self, seed: int) -> ScenarioSpec:
        return generate_scenario(
            GridSpec(self.classes, self.domains), Regime(self.regime, self.vil_classes),
            self.tasks, seed, self.min_domains_per_task,
        )


@dataclass(frozen=True)
class MethodSpec:
    name: str
    config: TrainConfig


def _mico(name, mobj, dir, mag, base: TrainConfig, **recal_kw) -> MethodSpec:
    recal = replace(base.recal, enable_multi_objective=mobj, enable_direction=dir,
                    enable_magnitude=mag, **recal_kw)
    return MethodSpec(name, replace(base, recal=recal, method="mico"))


def ablation_methods(base: TrainConfig = TrainConfig()) -> list[MethodSpec]:
    """The six component-ablation rows, baseline (1) through full method (6)."""
    return [
        MethodSpec("1-baseline", replace(base, method="baseline_ce")),
        _mico("2-mobj", True, False, False, base),
        _mico("3-mag", False, False, True, base),
        _mico("4-mobj-mag", True, False, True, base),
        _mico("5-mobj-dir", True, True, False, base),
        _mico("6-mico", True, True, True, base),
    ]


GAMMA_SWEEP = (1.0, 0.1, 0.01, 0.001)


def gamma_sweep_methods(base: TrainConfig = TrainConfig()) -> list[MethodSpec]:
    return [_mico(f"gamma_{g!r}", True, True, True, base, gamma=g) for g in GAMMA_SWEEP]


@dataclass
class ExperimentPlan:
    scenario: ScenarioArgs = field(default_factory=ScenarioArgs)
    data: SyntheticConfig = field(default_factory=SyntheticConfig)
    methods: list[MethodSpec] = field(default_factory=list)
    seeds: list[int] = field(default_factory=lambda: [0])

    def validate(self):
        if not self.seeds:
            raise PlanError("plan needs at least one seed")
        if not self.methods:
            raise PlanError("plan needs at least one method")
        names = [m.name for m in self.methods]
        if len(set(names)) != len(names):
            raise PlanError(f"duplicate method names in {names}")


# --------------------------------------------------------------------------
# plan files

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _flag(v: str) -> bool:
    v = v.strip().lower()
    if v in _TRUE:
        return True
    if v in _FALSE:
        return False
    raise PlanError(f"expected a boolean, got {v!r}")


def _apply_train(cfg: TrainConfig, kv: dict[str, str]) -> TrainConfig:
    recal_map = {"gamma": ("gamma", float), "rho": ("rho", float), "w_floor": ("w_floor", float),
                 "w-floor": ("w_floor", float)}
    train_map = {"lr": ("learning_rate", float), "epochs": ("epochs_per_task", int),
                 "batch": ("batch_size", int)}
    toggles = {"mobj": "enable_multi_objective", "dir": "enable_direction", "mag": "enable_magnitude"}
    recal_kw, train_kw = {}, {}
    for k, v in kv.items():
        if k in recal_map:
            name, conv = recal_map[k]
            recal_kw[name] = conv(v)
        elif k in train_map:
            name, conv = train_map[k]
            train_kw[name] = conv(v)
        elif k in toggles:
            recal_kw[toggles[k]] = _flag(v)
        elif k.startswith("no-") and k[3:] in toggles:
            recal_kw[toggles[k[3:]]] = not _flag(v)
        elif k == "method":
            train_kw["method"] = {"baseline": "baseline_ce"}.get(v, v)
        else:
            raise PlanError(f"unknown training key {k!r}")
    return replace(cfg, recal=replace(cfg.recal, **recal_kw), **train_kw)


def parse_plan(text: str) -> ExperimentPlan:
    sections: list[tuple[str, dict[str, str]]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            sections.append((line[1:-1].strip(), {}))
        elif "=" in line and sections:
            k, v = line.split("=", 1)
            sections[-1][1][k.strip()] = v.strip()
        else:
            raise PlanError(f"line {lineno}: expected [section] or key=value, got {raw!r}")

    plan = ExperimentPlan()
    base = TrainConfig(recal=RecalConfig())
    preset = None
    method_sections = []
    try:
        for name, kv in sections:
            if name == "plan":
                if "seeds" in kv:
                    plan.seeds = [int(s) for s in kv["seeds"].split(",") if s.strip()]
                preset = kv.get("preset")
            elif name == "scenario":
                conv = {"classes": int, "domains": int, "tasks": int, "regime": str,
                        "vil_classes": int, "min_domains_per_task": int}
                unknown = set(kv) - set(conv)
                if unknown:
                    raise PlanError(f"unknown scenario keys {sorted(unknown)}")
                plan.scenario = ScenarioArgs(**{k: conv[k](v) for k, v in kv.items()})
            elif name == "data":
                conv = {"dim": ("feature_dim", int), "sep": ("class_separation", float),
                        "shift": ("domain_shift", float), "noise": ("noise_std", float),
                        "profile": ("profile", parse_profile), "holdout": ("holdout", float)}
                unknown = set(kv) - set(conv)
                if unknown:
                    raise PlanError(f"unknown data keys {sorted(unknown)}")
                plan.data = replace(plan.data, **{conv[k][0]: conv[k][1](v) for k, v in kv.items()})
            elif name == "train":
                base = _apply_train(base, kv)
            elif name.startswith("method"):
                mname = name[len("method"):].strip()
                if not mname:
                    raise PlanError("method sections need a name: [method <name>]")
                method_sections.append((mname, kv))
            else:
                raise PlanError(f"unknown section [{name}]")
    except (TypeError, ValueError) as exc:
        if isinstance(exc, PlanError):
            raise
        raise PlanError(str(exc)) from None

    if preset == "ablation":
        plan.methods = ablation_methods(base)
    elif preset == "gamma_sweep":
        plan.methods = gamma_sweep_methods(base)
    elif preset is not None:
        raise PlanError(f"unknown preset {preset!r}")
    for mname, kv in method_sections:
        plan.methods.append(MethodSpec(mname, _apply_train(base, kv)))
    plan.validate()
    return plan


def load_plan(path: str | os.PathLike) -> ExperimentPlan:
    return parse_plan(Path(path).read_text())


# --------------------------------------------------------------------------
# single-run pipeline pieces (shared with the CLI)

def load_data(spec: ScenarioSpec, datadir: str | os.PathLike) -> list[TaskDataset]:
    return ingest_embeddings(Path(datadir) / "embeddings.txt", spec)


def train_run(spec: ScenarioSpec, tasks, cfg: TrainConfig, rundir, extra_meta=None):
    record = train_stream(tasks, cfg)
    rundir = Path(rundir)
    write_run(record, rundir, extra_meta)
    (rundir / "scenario.txt").write_bytes(serialize_scenario(spec))
    return record


def evaluate_run(rundir, datadir, reportdir):
    rundir = Path(rundir)
    spec = parse_scenario((rundir / "scenario.txt").read_bytes())
    tasks = load_data(spec, datadir)
    record = read_run(rundir)
    R = accuracy_matrix(record, tasks)
    write_report(R, reportdir, {"fingerprint": record.fingerprint})
    return R


def final_metrics(reportdir) -> dict[str, float]:
    """Metrics at the last task index of a ``report.csv``."""
    rows = [ln.split(",") for ln in Path(reportdir, "report.csv").read_text().splitlines()[1:]]
    last = max(int(r[1]) for r in rows)
    return {r[0]: float(r[2]) for r in rows if int(r[1]) == last and not r[0].startswith("acc_")}


def run_cell(plan: ExperimentPlan, method: MethodSpec, seed: int, celldir) -> dict[str, float]:
    """Scenario, data, training and evaluation for one (method, seed) cell."""
    celldir = Path(celldir)
    celldir.mkdir(parents=True, exist_ok=True)
    spec = plan.scenario.build(seed)
    tasks = synthesize(spec, replace(plan.data, seed=seed))
    (celldir / "data").mkdir(exist_ok=True)
    write_embeddings(tasks, celldir / "data" / "embeddings.txt")
    cfg = replace(method.config, seed=seed)
    train_run(spec, tasks, cfg, celldir / "run", {"method_name": method.name})
    evaluate_run(celldir / "run", celldir / "data", celldir / "report")
    (celldir / "DONE").write_text("ok\n")
    return final_metrics(celldir / "report")


def _cell_job(args):
    plan, method, seed, celldir = args
    try:
        run_cell(plan, method, seed, celldir)
        return None
    except Exception:
        return traceback.format_exc()


@dataclass
class PlanResult:
    rows: list[dict]
    failures: dict[tuple[str, int], str]

    @property
    def ok(self) -> bool:
        return not self.failures


def _mean_std(vals):
    a = np.asarray(vals, dtype=np.float64)
    return float(a.mean()), float(a.std())


def run_plan(plan: ExperimentPlan, root, resume: bool = False, jobs: int = 1) -> PlanResult:
    """Run every (method, seed) cell and aggregate mean/std per method.

    Failed cells are recorded and skipped by the aggregate; the rest still
    run.  Writes ``summary.csv`` and, if anything failed, ``failures.txt``.
    """
    plan.validate()
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    celldir = {(m.name, s): root / "cells" / m.name / f"seed_{s}" for m in plan.methods for s in plan.seeds}

    todo = []
    for m in plan.methods:
        for s in dict.fromkeys(plan.seeds):
            d = celldir[(m.name, s)]
            if resume and (d / "DONE").exists():
                log.info("skip completed cell %s seed %d", m.name, s)
                continue
            todo.append((plan, m, s, d))

    if jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_cell_job, todo))
    else:
        outcomes = []
        for job in todo:
            log.info("run cell %s seed %d", job[1].name, job[2])
            outcomes.append(_cell_job(job))
    failures = {(job[1].name, job[2]): err for job, err in zip(todo, outcomes) if err}

    rows = []
    for m in plan.methods:
        got = []
        for s in plan.seeds:
            d = celldir[(m.name, s)]
            if (m.name, s) in failures or not (d / "DONE").exists():
                failures.setdefault((m.name, s), "cell incomplete")
                continue
            got.append(final_metrics(d / "report"))
        row = {"method": m.name, "n_runs": len(got)}
        for key in ("avg_acc", "weighted_acc", "forgetting"):
            mean, std = _mean_std([g[key] for g in got]) if got else (math.nan, math.nan)
            row[f"{key}_mean"], row[f"{key}_std"] = mean, std
        rows.append(row)

    lines = [",".join(SUMMARY_COLUMNS)]
    for row in rows:
        lines.append(",".join(row[c] if isinstance(row[c], str) else repr(row[c]) for c in SUMMARY_COLUMNS))
    (root / "summary.csv").write_text("\n".join(lines) + "\n")
    fail_path = root / "failures.txt"
    if failures:
        fail_path.write_text("".join(f"{m} seed={s}\n{err}\n" for (m, s), err in sorted(failures.items())))
    elif fail_path.exists():
        fail_path.unlink()
    return PlanResult(rows, failures)
