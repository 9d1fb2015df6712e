"""Command line entry points.

    se23-iekf simulate         one trial, per-filter error series
    se23-iekf montecarlo       Monte Carlo battery -> summary.json, rmse.csv, anis.csv
    se23-iekf spacing          receiver-spacing sweep -> adds spacing.csv
    se23-iekf generate-dataset synthetic replay bundle
    se23-iekf replay BUNDLE    run filters over a bundle

Exit codes: 0 success, 2 config, 3 data, 4 numeric, 5 io.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, config_from_dict, dump_config, load_config
from .dataset import generate_dataset, load_bundle, replay
from .errors import EstimationError
from .evaluation import run_montecarlo, run_trial, spacing_sweep, summarize, trial_seeds
from .report import emit_report, write_replay, write_trial

EXIT_CODES = {"config": 2, "data": 3, "numeric": 4, "io": 5}


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else config_from_dict({})
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out is not None:
        changes["out"] = args.out
    if getattr(args, "trials", None) is not None:
        changes["trials"] = args.trials
    if args.filters is not None:
        changes["filters"] = [f.strip() for f in args.filters.split(",") if f.strip()]
    return dataclasses.replace(cfg, **changes).validate() if changes else cfg


def _manifest(cfg: RunConfig, command: str, **extra) -> dict:
    return {
        "command": command,
        "package_version": __version__,
        "numpy_version": np.__version__,
        "python_version": platform.python_version(),
        "config": dump_config(cfg),
        "conventions": {
            "attitude_offset": "rotation vector composed on the right of the true initial attitude",
            "rmse": "root mean square over time of the error-vector norm",
            "trial_seeds": "numpy SeedSequence(seed).spawn(trials)",
        },
        **extra,
    }


def cmd_simulate(args):
    cfg = _config(args)
    seed = trial_seeds(cfg.seed, 1)[0]
    res = run_trial(seed, tuple(cfg.filters), cfg.sim_config())
    out = Path(cfg.out)
    write_trial(res, out, _manifest(cfg, "simulate"))
    for name, tr in res.items():
        print(f"{name}: " + ", ".join(f"{m} RMSE {v:.4g}" for m, v in tr.rmse.items()))


def cmd_montecarlo(args):
    cfg = _config(args)
    t0 = time.perf_counter()
    results = run_montecarlo(cfg.sim_config(), cfg.trials, cfg.seed, tuple(cfg.filters))
    summary = summarize(results)
    emit_report(summary, cfg.out, _manifest(cfg, "montecarlo", runtime_s=time.perf_counter() - t0))
    _print_summary(summary)


def cmd_spacing(args):
    cfg = _config(args)
    t0 = time.perf_counter()
    sweep = spacing_sweep(cfg.spacings, cfg.sim_config(), cfg.trials, cfg.seed, tuple(cfg.filters))
    last = sweep[max(sweep)]
    emit_report(last, cfg.out, _manifest(cfg, "spacing", runtime_s=time.perf_counter() - t0), sweep=sweep)
    for s, summary in sweep.items():
        print(f"spacing {s:g} m")
        _print_summary(summary)


def cmd_generate(args):
    cfg = _config(args)
    bundle = generate_dataset(cfg, cfg.out)
    print(f"wrote {len(bundle.imu)} IMU rows and {int(np.sum(bundle.fix_id == 1))} fix epochs to {cfg.out}")


def cmd_replay(args):
    cfg = _config(args) if args.config else None
    bundle = load_bundle(args.bundle)
    filters = [f.strip() for f in args.filters.split(",")] if args.filters else (cfg.filters if cfg else ["IEKF2"])
    results = replay(bundle, filters)
    out = Path(args.out or (cfg.out if cfg else "replay"))
    manifest = {
        "command": "replay",
        "package_version": __version__,
        "bundle": str(Path(args.bundle).resolve()),
        "bundle_manifest": bundle.manifest,
        "filters": list(filters),
    }
    write_replay(results, out, manifest)
    for name, res in results.items():
        stats = ", ".join(f"{m} RMSE {v:.4g}" for m, v in res.rmse.items()) or "no ground truth"
        print(f"{name}: {len(res.nis)} epochs, {stats}")


def _print_summary(summary):
    for name, metrics in summary.rmse.items():
        parts = [f"{m} {s.mean:.4g} [{s.p2_5:.4g}, {s.p97_5:.4g}]" for m, s in metrics.items()]
        entry = summary.entry_time[name]
        entry_s = f"{entry:.2f} s" if entry is not None else "never"
        print(f"  {name}: " + "; ".join(parts) + f"; consistent from {entry_s}")


def build_parser():
    p = argparse.ArgumentParser(prog="se23-iekf", description=__doc__.splitlines()[0] if __doc__ else None)
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, trials=False):
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--seed", type=int, help="master seed (overrides config)")
        sp.add_argument("--out", help="output directory (overrides config)")
        sp.add_argument("--filters", help="comma-separated, e.g. IEKF2,MEKF2,IEKF1")
        if trials:
            sp.add_argument("--trials", type=int, help="number of Monte Carlo trials")
        return sp

    common(sub.add_parser("simulate", help="run a single simulated trial")).set_defaults(func=cmd_simulate)
    common(sub.add_parser("montecarlo", help="Monte Carlo battery"), trials=True).set_defaults(func=cmd_montecarlo)
    common(sub.add_parser("spacing", help="receiver spacing sweep"), trials=True).set_defaults(func=cmd_spacing)
    common(sub.add_parser("generate-dataset", help="write a synthetic dataset bundle")).set_defaults(func=cmd_generate)
    rp = common(sub.add_parser("replay", help="replay a dataset bundle"))
    rp.add_argument("bundle", help="bundle directory")
    rp.set_defaults(func=cmd_replay)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except EstimationError as exc:
        print(f"error [{exc.category}]: {exc}", file=sys.stderr)
        return EXIT_CODES[exc.category]
    except OSError as exc:
        print(f"error [io]: {exc}", file=sys.stderr)
        return EXIT_CODES["io"]
    return 0


if __name__ == "__main__":
    sys.exit(main())
