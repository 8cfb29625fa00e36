"""Turn results directories into plain column files for plotting."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from . import persist

TRAJECTORY_COLUMNS = ("t", "sp_n", "sp_e", "sp_h", "sp_yaw", "est_p_n", "est_p_e", "est_h",
                      "est_psi", "p_n", "p_e", "h", "psi", "phi_sp", "theta_sp", "est_phi",
                      "est_theta", "cumulative")


def _progress(run_dir: Path, out: Path, label: str) -> list[Path]:
    recs = persist.read_generations(run_dir)
    fit = [[r["generation"], r["stage"], r["best"], r["mean"], r["median"], r["worst"],
            r["successes"]] for r in recs]
    rates = [[r["generation"], r["mean_cr"], r["mean_f"]] for r in recs]
    a = out / f"fitness_{label}.csv"
    b = out / f"rates_{label}.csv"
    persist.write_csv(a, ["generation", "stage", "best", "mean", "median", "worst", "successes"], fit)
    persist.write_csv(b, ["generation", "mean_cr", "mean_f"], rates)
    return [a, b]


def sweep_matrix(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(row values, column values, mean-fitness matrix) from a sweep CSV."""
    header, rows = persist.read_csv(path)
    data = np.array(rows, dtype=float)
    rv = np.unique(data[:, 0])[::-1]
    cv = np.unique(data[:, 1])[::-1]
    mat = np.full((len(rv), len(cv)), np.nan)
    for r, c, m, *_ in data:
        mat[np.where(rv == r)[0][0], np.where(cv == c)[0][0]] = m
    return rv, cv, mat


def _heatmap(path: Path, out: Path) -> Path:
    header, _ = persist.read_csv(path)
    rv, cv, mat = sweep_matrix(path)
    pair = path.stem.split("_", 1)[1]
    target = out / f"heatmap_{pair}.csv"
    persist.write_csv(target, [f"{header[0]}\\{header[1]}"] + [repr(float(c)) for c in cv],
                      ([float(r)] + [float(v) for v in row] for r, row in zip(rv, mat)))
    return target


def _trajectory(log_csv: Path, out: Path, label: str | None = None) -> Path:
    header, rows = persist.read_csv(log_csv)
    idx = [header.index(c) for c in TRAJECTORY_COLUMNS]
    target = out / f"trajectory_{label or log_csv.stem}.csv"
    persist.write_csv(target, TRAJECTORY_COLUMNS, ([float(r[i]) for i in idx] for r in rows))
    return target


def _convergence(stats_path: Path, out: Path) -> Path | None:
    stats = persist.read_json(stats_path)
    conv = stats.get("convergence")
    if not conv:
        return None
    target = out / "convergence.csv"
    persist.write_csv(target, ["method", "repeat", "generation"],
                      ([m, i, g] for m, gens in conv.items() for i, g in enumerate(gens)))
    return target


def convert(source, out) -> list[Path]:
    source, out = Path(source), Path(out)
    written: list[Path] = []
    if source.is_file():
        log_csv = source.with_suffix(".csv")
        if log_csv.exists():
            written.append(_trajectory(log_csv, out))
        return written
    for gen in sorted(source.rglob("generations.csv")):
        if out in gen.parents:
            continue
        rel = gen.parent.relative_to(source)
        label = "_".join(rel.parts) or "run"
        written += _progress(gen.parent, out, label)
    for sweep in sorted(source.glob("sweep_*.csv")):
        written.append(_heatmap(sweep, out))
    stats = source / "stats.json"
    if stats.exists():
        p = _convergence(stats, out)
        if p:
            written.append(p)
    for rec in sorted(source.rglob("*_trial.json")):
        if out in rec.parents:
            continue
        if rec.with_suffix(".csv").exists():
            label = "_".join(rec.with_suffix("").relative_to(source).parts)
            written.append(_trajectory(rec.with_suffix(".csv"), out, label))
    return written
