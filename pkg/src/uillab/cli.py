"""Command line front end.

Exit codes: 0 success, 2 validation error, 3 partial plan failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .dataset import (DatasetError, SyntheticConfig, class_histogram, ingest_embeddings, parse_profile,
                      synthesize, write_embeddings)
from .experiment import PlanError, evaluate_run, load_data, load_plan, run_plan, train_run
from .metrics import (DEFAULT_INTERVALS, avg_acc, class_gradient_profile, entropy_profile, forgetting,
                      per_class_accuracy, weighted_acc, write_class_profile, write_entropy_profile)
from .model import ModelError
from .recalibration import RecalConfig
from .scenario import GridSpec, Regime, ScenarioError, generate_scenario, parse_scenario, serialize_scenario
from .trainer import TrainConfig, TrainingError, read_run

log = logging.getLogger("uillab")

EXIT_OK, EXIT_INVALID, EXIT_PARTIAL = 0, 2, 3


class CLIError(ValueError):
    pass


def _out(args) -> Path:
    out = args.sub_out or args.out
    if not out:
        raise CLIError("an output path is required (-o/--out)")
    return Path(out)


def _seed(args, default=0) -> int:
    if args.sub_seed is not None:
        return args.sub_seed
    return args.seed if args.seed is not None else default


def _read_scenario(path):
    return parse_scenario(Path(path).read_bytes())


def cmd_scenario_gen(args):
    spec = generate_scenario(
        GridSpec(args.classes, args.domains), Regime(args.regime, args.vil_classes),
        args.tasks, _seed(args), args.min_domains_per_task,
    )
    out = _out(args)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(serialize_scenario(spec))
    log.info("wrote %d tasks to %s", spec.num_tasks, out)


def _write_data(tasks, outdir: Path, meta: dict):
    outdir.mkdir(parents=True, exist_ok=True)
    write_embeddings(tasks, outdir / "embeddings.txt")
    (outdir / "data.meta").write_text("".join(f"{k}={v}\n" for k, v in meta.items()))
    for t in tasks:
        log.info("task %d: %d train / %d test, classes %s", t.task_index, len(t.train), len(t.test),
                 class_histogram(t))


def cmd_data_synth(args):
    spec = _read_scenario(args.scenario)
    cfg = SyntheticConfig(args.dim, args.sep, args.shift, args.noise, parse_profile(args.profile),
                          _seed(args), args.holdout)
    tasks = synthesize(spec, cfg)
    _write_data(tasks, _out(args), {
        "source": "synth", "scenario": args.scenario, "dim": cfg.feature_dim,
        "sep": repr(cfg.class_separation), "shift": repr(cfg.domain_shift), "noise": repr(cfg.noise_std),
        "profile": cfg.profile, "seed": cfg.seed, "holdout": repr(cfg.holdout),
    })


def cmd_data_ingest(args):
    spec = _read_scenario(args.scenario)
    tasks = ingest_embeddings(args.embeddings, spec)
    _write_data(tasks, _out(args), {"source": "ingest", "scenario": args.scenario,
                                    "embeddings": args.embeddings})


def cmd_train(args):
    spec = _read_scenario(args.scenario)
    tasks = load_data(spec, args.data)
    recal = RecalConfig(
        gamma=args.gamma, rho=args.rho, w_floor=args.w_floor,
        enable_multi_objective=not args.no_mobj, enable_direction=not args.no_dir,
        enable_magnitude=not args.no_mag,
    )
    method = {"baseline": "baseline_ce"}.get(args.method, args.method)
    cfg = TrainConfig(args.lr, args.epochs, args.batch, recal, _seed(args), method)
    rundir = _out(args)
    record = train_run(spec, tasks, cfg, rundir, {"scenario": args.scenario, "data": args.data})
    log.info("trained %d tasks in %.2fs -> %s", len(record.checkpoints), sum(record.wall_clock), rundir)


def cmd_eval(args):
    R = evaluate_run(args.run, args.data, _out(args))
    k = R.num_tasks - 1
    log.info("avg_acc=%.4f weighted_acc=%.4f forgetting=%.4f", avg_acc(R, k), weighted_acc(R, k), forgetting(R, k))


def _analysis_inputs(args):
    rundir = Path(args.run)
    spec = parse_scenario((rundir / "scenario.txt").read_bytes())
    tasks = load_data(spec, args.data)
    record = read_run(rundir)
    k = len(record.checkpoints) - 1 if args.task is None else args.task
    if not 0 <= k < len(record.checkpoints):
        raise CLIError(f"no checkpoint after task {k}")
    state = record.checkpoints[k]
    X = np.concatenate([tasks[t].test.features for t in range(k + 1)])
    y = np.concatenate([tasks[t].test.class_ids for t in range(k + 1)])
    return record, tasks, state, X, y, k


def cmd_analyze(args):
    record, tasks, state, X, y, k = _analysis_inputs(args)
    out = _out(args)
    out.mkdir(parents=True, exist_ok=True)
    if args.what == "entropy":
        prof = entropy_profile(state, X, y, args.intervals)
        write_entropy_profile(prof, out / "entropy_profile.csv")
        log.info("entropy mean=%.4f var=%.4f", prof.entropy_mean, prof.entropy_var)
    else:
        hist: dict[int, int] = {}
        for t in tasks[:k + 1]:
            for c, n in class_histogram(t).items():
                hist[c] = hist.get(c, 0) + n
        prof = class_gradient_profile(record.diagnostics, per_class_accuracy(state, X, y), hist)
        write_class_profile(prof, out / "class_profile.csv")
        log.info("spearman(mean magnitude, accuracy)=%s", prof.spearman)


def cmd_plan_run(args):
    plan = load_plan(args.plan)
    result = run_plan(plan, _out(args), resume=args.resume, jobs=args.jobs)
    for row in result.rows:
        log.info("%-14s n=%d avg_acc=%.4f±%.4f weighted_acc=%.4f±%.4f forgetting=%.4f±%.4f",
                 row["method"], row["n_runs"], row["avg_acc_mean"], row["avg_acc_std"],
                 row["weighted_acc_mean"], row["weighted_acc_std"],
                 row["forgetting_mean"], row["forgetting_std"])
    if not result.ok:
        for (m, s) in sorted(result.failures):
            log.error("cell %s seed %d failed", m, s)
        return EXIT_PARTIAL
    return EXIT_OK


def _common(p: argparse.ArgumentParser, seed=False):
    p.add_argument("-o", "--out", dest="sub_out", default=None, help="output file or directory")
    if seed:
        p.add_argument("--seed", dest="sub_seed", type=int, default=None)
    else:
        p.set_defaults(sub_seed=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uillab", description="Universal incremental learning lab")
    parser.add_argument("--seed", type=int, default=None, help="default seed for subcommands")
    parser.add_argument("--out", default=None, help="default output path for subcommands")
    parser.add_argument("--quiet", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    scen = sub.add_parser("scenario").add_subparsers(dest="action", required=True)
    p = scen.add_parser("gen", help="generate a task stream")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--domains", type=int, required=True)
    p.add_argument("--tasks", type=int, required=True)
    p.add_argument("--regime", choices=["uil", "vil", "cil", "dil"], default="uil")
    p.add_argument("--vil-classes", type=int, default=None)
    p.add_argument("--min-domains-per-task", type=int, default=None)
    _common(p, seed=True)
    p.set_defaults(func=cmd_scenario_gen)

    data = sub.add_parser("data").add_subparsers(dest="action", required=True)
    p = data.add_parser("synth", help="synthesize Gaussian feature clusters")
    p.add_argument("--scenario", required=True)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--sep", type=float, default=3.0)
    p.add_argument("--shift", type=float, default=1.5)
    p.add_argument("--noise", type=float, default=1.5)
    p.add_argument("--profile", default="constant(64)")
    p.add_argument("--holdout", type=float, default=0.2)
    _common(p, seed=True)
    p.set_defaults(func=cmd_data_synth)
    p = data.add_parser("ingest", help="route precomputed embeddings to tasks")
    p.add_argument("--scenario", required=True)
    p.add_argument("--embeddings", required=True)
    _common(p)
    p.set_defaults(func=cmd_data_ingest)

    p = sub.add_parser("train", help="train the head over the stream")
    p.add_argument("--scenario", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--method", choices=["baseline", "baseline_ce", "mico"], default="mico")
    p.add_argument("--gamma", type=float, default=0.01)
    p.add_argument("--rho", type=float, default=0.5)
    p.add_argument("--w-floor", type=float, default=0.0)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--no-dir", action="store_true")
    p.add_argument("--no-mag", action="store_true")
    p.add_argument("--no-mobj", action="store_true")
    _common(p, seed=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="accuracy matrix and summary metrics")
    p.add_argument("--run", required=True)
    p.add_argument("--data", required=True)
    _common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("analyze", help="entropy or per-class gradient analysis")
    p.add_argument("what", choices=["entropy", "classes"])
    p.add_argument("--run", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--task", type=int, default=None, help="checkpoint index (default: last)")
    p.add_argument("--intervals", type=int, default=DEFAULT_INTERVALS)
    _common(p)
    p.set_defaults(func=cmd_analyze)

    plan = sub.add_parser("plan").add_subparsers(dest="action", required=True)
    p = plan.add_parser("run", help="run a multi-seed experiment plan")
    p.add_argument("plan")
    p.add_argument("--resume", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    _common(p)
    p.set_defaults(func=cmd_plan_run)
    return parser


VALIDATION_ERRORS = (ScenarioError, DatasetError, ModelError, TrainingError, PlanError, CLIError,
                     ValueError, FileNotFoundError)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s")
    try:
        code = args.func(args)
    except VALIDATION_ERRORS as exc:
        log.error("%s", exc)
        return EXIT_INVALID
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
