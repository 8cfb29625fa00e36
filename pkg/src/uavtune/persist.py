"""Results-directory layout, trial logs and replay."""
from __future__ import annotations

import csv
import json
import os
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, from_dict, serialize_config, to_dict
from .controller import GAIN_NAMES, GainSet
from .dynamics import TetherConfig
from .experiment import ExperimentResult, GenerationRecord, SweepResult
from .schedules import WaypointSchedule
from .supervisor import LOG_COLUMNS, TrialOutcome, run_trial

# leading trial-log columns; the sensed, commanded and true states follow
TRIAL_COLUMNS = LOG_COLUMNS[:10]


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=False)
        fh.write("\n")
    os.replace(tmp, path)


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_config_snapshot(out_dir, cfg: ExperimentConfig) -> Path:
    path = Path(out_dir) / "config.snapshot"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(serialize_config(cfg), encoding="utf-8")
    return path


def gains_record(gains) -> dict:
    g = GainSet(np.asarray(getattr(gains, "values", gains)))
    return {"gains": g.to_list(), "names": list(GAIN_NAMES)}


def write_run(out_dir, result: ExperimentResult, populations: bool = True) -> Path:
    """generations.csv, one population_gXXX.json per generation and best.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "generations.csv", GenerationRecord.FIELDS,
              (r.row() for r in result.records))
    if populations:
        for snap in result.populations:
            _write_json(out / f"population_g{snap['generation']:03d}.json", snap)
    best = result.summary()
    best.update(gains_record(result.best.gains))
    _write_json(out / "best.json", best)
    return out


def load_best(path) -> np.ndarray:
    path = Path(path)
    if path.is_dir():
        path = path / "best.json"
    data = read_json(path)
    if "gains" in data and isinstance(data["gains"], list):
        return GainSet.from_list(data["gains"]).values
    return GainSet.from_list(data["best"]["gains"]).values


def write_sweep(out_dir, sweep: SweepResult) -> list[Path]:
    """Columnar grids: one row per cell, printed-convention gain values."""
    paths = []
    for pair, grid in sweep.grids.items():
        a, b = pair[0], pair[1]
        rows = []
        for i, rv in enumerate(grid.rows):
            for j, cv in enumerate(grid.cols):
                rows.append([float(rv), float(cv), float(grid.mean[i, j]),
                             int(grid.no_takeoff[i, j]), int(grid.completed[i, j])])
        path = Path(out_dir) / f"sweep_{pair}.csv"
        write_csv(path, [f"{a}_gain", f"{b}_gain", "mean_fitness", "no_takeoff", "completed"], rows)
        paths.append(path)
    _write_json(Path(out_dir) / "sweep.json", {
        "base": gains_record(sweep.base), "base_fitness": sweep.base_fitness,
        "best_cell": sweep.best_cell, "repeats": sweep.repeats, "schedule": sweep.schedule})
    return paths


def write_stats(out_dir, stats: dict) -> Path:
    path = Path(out_dir) / "stats.json"
    _write_json(path, stats)
    return path


def write_trial(out_dir, stem: str, outcome: TrialOutcome, gains, schedule: WaypointSchedule,
                tether: TetherConfig, cfg: ExperimentConfig) -> tuple[Path, Path]:
    """``<stem>.csv`` (per-tick log) and ``<stem>.json`` (everything needed to replay)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{stem}.csv"
    if outcome.log is not None:
        write_csv(csv_path, LOG_COLUMNS, (list(map(float, r)) for r in outcome.log))
    record = outcome.to_record()
    record.update({
        "gains": gains_record(gains)["gains"],
        "schedule_def": schedule.to_dict(),
        "tether": {"radius": tether.radius, "anchor_height": tether.anchor_height,
                   "pull_height": tether.pull_height, "tilt_limit_deg": tether.tilt_limit_deg,
                   "yaw_limit_deg": tether.yaw_limit_deg},
        "config": to_dict(cfg),
    })
    json_path = out / f"{stem}.json"
    _write_json(json_path, record)
    return csv_path, json_path


def replay(record_path) -> tuple[TrialOutcome, dict]:
    """Re-fly a logged trial from its recorded seed and inputs."""
    path = Path(record_path)
    if path.suffix == ".csv":
        path = path.with_suffix(".json")
    rec = read_json(path)
    cfg = from_dict(rec["config"])
    sched = WaypointSchedule.from_dict(rec["schedule_def"])
    tether = TetherConfig(**rec["tether"])
    out = run_trial(np.array(rec["gains"]), sched, tether, int(rec["seed"]), cfg.environment())
    return out, rec


def read_generations(path) -> list[dict]:
    header, rows = read_csv(Path(path) / "generations.csv" if Path(path).is_dir() else path)
    return [dict(zip(header, r)) for r in rows]
