"""Plot-ready CSV/JSON outputs for batches, sweeps, single trials and replays."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import lie
from .dataset import fmt, write_csv
from .evaluation import METRICS, BatchSummary, spacing_table


def _metric_dict(stat):
    return {"mean": stat.mean, "p2_5": stat.p2_5, "p97_5": stat.p97_5}


def summary_to_dict(summary: BatchSummary) -> dict:
    return {
        "n_trials": summary.n_trials,
        "rmse": {f: {m: _metric_dict(s) for m, s in metrics.items()} for f, metrics in summary.rmse.items()},
        "consistency_entry_time": summary.entry_time,
        "anis_band": {
            f: {"lower": a.lower, "upper": a.upper, "dof": a.dof, "in_band_fraction": float(a.in_band.mean())}
            for f, a in summary.anis.items()
        },
        "per_trial_rmse": {
            f: {m: x.tolist() for m, x in metrics.items()} for f, metrics in summary.per_trial_rmse.items()
        },
    }


def write_json(path, obj):
    # json emits float repr, which round-trips float64 exactly
    Path(path).write_text(json.dumps(obj, indent=2, allow_nan=False) + "\n", encoding="utf-8")


def emit_report(summary: BatchSummary, out, manifest: dict, sweep: dict | None = None) -> list[Path]:
    """Write summary.json, rmse.csv, anis.csv and, for sweeps, spacing.csv."""
    if summary is None or summary.n_trials == 0 or not summary.rmse:
        raise ValueError("refusing to write a report for an empty batch")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    body = {"manifest": manifest, "summary": summary_to_dict(summary)}
    if sweep:
        body["spacing"] = {fmt(s): summary_to_dict(v) for s, v in sweep.items()}
    write_json(out / "summary.json", body)
    written.append(out / "summary.json")

    rows = [
        (f, m, s.mean, s.p2_5, s.p97_5)
        for f, metrics in summary.rmse.items()
        for m in METRICS
        for s in [metrics[m]]
    ]
    write_csv(out / "rmse.csv", ["filter", "metric", "mean", "p2_5", "p97_5"], rows)
    written.append(out / "rmse.csv")

    names = list(summary.anis)
    header = ["epoch", "t"]
    for f in names:
        header += [f"{f}_anis", f"{f}_lower", f"{f}_upper"]
    times = summary.anis[names[0]].times
    anis_rows = []
    for e, t in enumerate(times):
        row = [e, float(t)]
        for f in names:
            a = summary.anis[f]
            row += [float(a.normalized[e]), float(a.lower), float(a.upper)]
        anis_rows.append(row)
    write_csv(out / "anis.csv", header, anis_rows)
    written.append(out / "anis.csv")

    if sweep:
        rows = [(float(s), f, m, float(mean), float(pd)) for s, f, m, mean, pd in spacing_table(sweep)]
        write_csv(out / "spacing.csv", ["spacing", "filter", "metric", "mean_rmse", "percent_diff_vs_IEKF2"], rows)
        written.append(out / "spacing.csv")
    return written


def write_trial(results: dict, out, manifest: dict):
    """Per-filter error time series of a single simulated trial."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    for name, tr in results.items():
        write_csv(
            out / f"{name}_errors.csv",
            ["t", "attitude", "velocity", "position"],
            np.column_stack([tr.times, tr.attitude_error, tr.velocity_error, tr.position_error]),
        )
        write_csv(out / f"{name}_nis.csv", ["t", "nis", "dof"], [(float(t), float(e), tr.dof) for t, e in zip(tr.nis_times, tr.nis)])
    write_json(out / "trial.json", {"manifest": manifest, "rmse": {n: tr.rmse for n, tr in results.items()}})


def write_replay(results: dict, out, manifest: dict):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    header = ["t"] + [f"c{i}{j}" for i in range(1, 4) for j in range(1, 4)] + ["vx", "vy", "vz", "x", "y", "z"]
    report = {"manifest": manifest, "filters": {}}
    for name, res in results.items():
        C, v, r = lie.se23_parts(res.poses)
        write_csv(out / f"{name}_trace.csv", header, np.column_stack([res.times, C.reshape(-1, 9), v, r]))
        write_csv(out / f"{name}_nis.csv", ["t", "nis", "dof"], [(float(t), float(e), res.dof) for t, e in zip(res.nis_times, res.nis)])
        report["filters"][name] = {
            "rmse": res.rmse or None,
            "mean_normalized_nis": float(np.mean(res.nis) / res.dof) if len(res.nis) else None,
            "n_epochs": int(len(res.nis)),
        }
    write_json(out / "replay_report.json", report)
