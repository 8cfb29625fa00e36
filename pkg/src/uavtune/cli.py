"""Command-line front end.

    uavtune run-ose    --config cfg.yaml --seed 3 --out results/ose
    uavtune run-tse    --out results/tse
    uavtune compare    --repeats 10 --out results/compare
    uavtune generalise results/compare/ose/repeat_00 ... --out results/gen
    uavtune sweep      --base results/tse/best.json --out results/sweep
    uavtune replay     results/ose/best_trial.json
    uavtune plot-data  results/compare --out results/plots

Configuration comes from the YAML file, then ``UAVTUNE_*`` environment
variables, then command-line flags.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import experiment as ex
from . import persist
from .config import ConfigError, ExperimentConfig, load_config
from .supervisor import run_trial

log = logging.getLogger("uavtune")


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="YAML configuration file")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--out", help="output directory")
    p.add_argument("--workers", type=int, help="worker threads for independent trials")
    p.add_argument("--repeats", type=int, help="independent repeats / trials per controller")
    p.add_argument("--quiet", action="store_true", help="only print warnings and errors")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uavtune", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    for name, text in (("run-ose", "one-stage evolution on the short tether"),
                       ("run-tse", "two-stage evolution with reseeding and tether switch")):
        p = sub.add_parser(name, help=text)
        _common(p)

    p = sub.add_parser("compare", help="repeat both methods and test convergence speed")
    _common(p)
    p.add_argument("--no-generalise", action="store_true",
                   help="skip the unseen-schedule evaluation of the best controllers")

    p = sub.add_parser("generalise", help="fly stored controllers on the unseen schedule")
    _common(p)
    p.add_argument("controllers", nargs="+", help="best.json files or run directories")

    p = sub.add_parser("sweep", help="10x10 height-gain grids around a controller")
    _common(p)
    p.add_argument("--base", required=True, help="best.json of the base controller")
    p.add_argument("--pairs", default="ID,PI,PD", help="comma-separated gain pairs")

    p = sub.add_parser("replay", help="re-fly a logged trial and check its fitness bit-for-bit")
    p.add_argument("log", help="trial .json record (or its .csv log)")
    p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("plot-data", help="convert results into plain columnar series")
    p.add_argument("source", help="results directory or trial log")
    p.add_argument("--out", help="output directory (default: <source>/plot-data)")
    p.add_argument("--quiet", action="store_true")
    return parser


def resolve_config(args) -> ExperimentConfig:
    cfg = load_config(getattr(args, "config", None), os.environ)
    updates = {}
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "workers", None) is not None:
        updates["workers"] = args.workers
    if getattr(args, "out", None) is not None:
        updates["out_dir"] = args.out
    if getattr(args, "quiet", False):
        updates["log_level"] = "warning"
    return dataclasses.replace(cfg, **updates) if updates else cfg


def _save_best_trial(out: Path, result: ex.ExperimentResult, cfg: ExperimentConfig):
    role = "tse" if result.best_schedule == cfg.schedules.tse else "ose"
    sched = cfg.schedule(role)
    tether = cfg.tether.tse if role == "tse" else cfg.tether.ose
    seed = ex.derive_seed(result.seed, 99)
    outcome = run_trial(result.best.gains, sched, tether, seed, cfg.environment(), log=True)
    persist.write_trial(out, "best_trial", outcome, result.best.gains, sched, tether, cfg)


def _run(method: str, args, cfg: ExperimentConfig) -> int:
    out = Path(cfg.out_dir)
    persist.write_config_snapshot(out, cfg)
    repeats = args.repeats or 1
    for i in range(repeats):
        seed = cfg.seed if repeats == 1 else ex.repeat_seed(cfg.seed, method, i)
        target = out if repeats == 1 else out / f"repeat_{i:02d}"
        res = ex.RUNNERS[method](cfg, seed)
        persist.write_run(target, res)
        _save_best_trial(target, res, cfg)
        log.warning("%s seed=%d converged=%s generation=%s best=%.1f", method, seed,
                    res.converged, res.convergence_generation, res.best.fitness)
    return 0


def _compare(args, cfg: ExperimentConfig) -> int:
    out = Path(cfg.out_dir)
    persist.write_config_snapshot(out, cfg)
    counters = {m: 0 for m in ex.METHODS}

    def save(res):
        target = out / res.method / f"repeat_{counters[res.method]:02d}"
        counters[res.method] += 1
        persist.write_run(target, res)
        log.warning("%s seed=%d converged=%s generation=%s", res.method, res.seed,
                    res.converged, res.convergence_generation)

    cmp = ex.compare(cfg, args.repeats, not args.no_generalise, on_result=save)
    stats = cmp.to_dict()
    persist.write_stats(out, stats)
    t = cmp.test
    print(f"U={t.u:g} p={t.p:.4g} ({t.method}) median tse={t.median_a:g} ose={t.median_b:g}")
    return 0


def _generalise(args, cfg: ExperimentConfig) -> int:
    gains = [persist.load_best(p) for p in args.controllers]
    res = ex.evaluate_generalisation(gains, cfg.seed, cfg, args.repeats)
    out = Path(cfg.out_dir)
    rows = [[src, i, float(f), r] for src, fits, reasons in
            zip(args.controllers, res.fitness, res.reasons)
            for i, (f, r) in enumerate(zip(fits, reasons))]
    persist.write_csv(out / "generalisation.csv", ["controller", "trial", "fitness", "reason"], rows)
    persist.write_stats(out, {"schedule": res.schedule, "means": dict(zip(args.controllers, res.means)),
                              "mean": res.mean})
    for src, m in zip(args.controllers, res.means):
        print(f"{src}: {m:.1f}")
    return 0


def _sweep(args, cfg: ExperimentConfig) -> int:
    base = persist.load_best(args.base)
    pairs = [p.strip().upper() for p in args.pairs.split(",") if p.strip()]
    bad = [p for p in pairs if p not in ex.SWEEP_PAIRS]
    if bad:
        raise ValueError(f"unknown gain pair {bad[0]!r}; choose from {ex.SWEEP_PAIRS}")
    res = ex.gain_sweep(base, cfg.seed, cfg, args.repeats, pairs)
    persist.write_config_snapshot(cfg.out_dir, cfg)
    persist.write_sweep(cfg.out_dir, res)
    print(f"base {res.base_fitness:.1f}, best cell {res.best_cell:.1f}")
    return 0


def _replay(args) -> int:
    out, rec = persist.replay(args.log)
    same = float(out.fitness).hex() == rec["fitness_hex"] and out.reason == rec["reason"]
    print(f"recorded {rec['fitness']!r} ({rec['reason']}), replayed {out.fitness!r} ({out.reason}): "
          + ("identical" if same else "MISMATCH"))
    return 0 if same else 1


def _plot_data(args) -> int:
    from .plotdata import convert
    src = Path(args.source)
    out = Path(args.out) if args.out else (src if src.is_dir() else src.parent) / "plot-data"
    written = convert(src, out)
    if not written:
        raise ValueError(f"nothing to convert in {src}")
    for p in written:
        print(p)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(format="%(levelname)s %(name)s: %(message)s",
                        level=logging.WARNING if args.quiet else logging.INFO)
    try:
        if args.command == "replay":
            return _replay(args)
        if args.command == "plot-data":
            return _plot_data(args)
        cfg = resolve_config(args)
        logging.getLogger().setLevel(cfg.log_level.upper())
        if args.command in ("run-ose", "run-tse"):
            return _run(args.command[4:], args, cfg)
        if args.command == "compare":
            return _compare(args, cfg)
        if args.command == "generalise":
            return _generalise(args, cfg)
        if args.command == "sweep":
            return _sweep(args, cfg)
    except (ConfigError, ValueError, OSError, KeyError) as exc:
        print(f"uavtune {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 1


if __name__ == "__main__":
    sys.exit(main())
