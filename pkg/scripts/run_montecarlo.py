#!/usr/bin/env python3
"""Monte Carlo battery for the simulation study; prints the RMSE table and consistency entry times.

    python3 scripts/run_montecarlo.py --trials 100 --out results/montecarlo
"""
import argparse
import time

from se23_iekf.cli import _manifest
from se23_iekf.config import load_config, config_from_dict
from se23_iekf.evaluation import METRICS, run_montecarlo, summarize
from se23_iekf.report import emit_report


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default=None)
    ap.add_argument("--trials", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="results/montecarlo")
    args = ap.parse_args()

    cfg = load_config(args.config) if args.config else config_from_dict({})
    cfg.trials, cfg.seed, cfg.out = args.trials, args.seed, args.out

    t0 = time.perf_counter()
    summary = summarize(run_montecarlo(cfg.sim_config(), cfg.trials, cfg.seed, tuple(cfg.filters)))
    elapsed = time.perf_counter() - t0
    emit_report(summary, cfg.out, _manifest(cfg, "scripts/run_montecarlo.py", runtime_s=elapsed))

    print(f"{cfg.trials} trials in {elapsed:.1f} s")
    print(f"{'filter':8s}" + "".join(f"{m:>12s}" for m in METRICS) + f"{'entry [s]':>12s}")
    for name, metrics in summary.rmse.items():
        entry = summary.entry_time[name]
        print(f"{name:8s}" + "".join(f"{metrics[m].mean:12.4f}" for m in METRICS) + (f"{entry:12.2f}" if entry is not None else f"{'never':>12s}"))


if __name__ == "__main__":
    main()
