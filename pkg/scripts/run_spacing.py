#!/usr/bin/env python3
"""Receiver-spacing sweep: IEKF2 vs IEKF1 attitude RMSE and percent difference per spacing."""
import argparse

from se23_iekf.cli import _manifest
from se23_iekf.config import config_from_dict, load_config
from se23_iekf.evaluation import percent_difference, spacing_sweep
from se23_iekf.report import emit_report


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default=None)
    ap.add_argument("--trials", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--spacings", type=float, nargs="+", default=[0.1, 0.5, 1.0, 1.8])
    ap.add_argument("--out", default="results/spacing")
    args = ap.parse_args()

    cfg = load_config(args.config) if args.config else config_from_dict({})
    cfg.trials, cfg.seed, cfg.out, cfg.spacings = args.trials, args.seed, args.out, list(args.spacings)
    filters = ("IEKF2", "IEKF1")
    sweep = spacing_sweep(cfg.spacings, cfg.sim_config(), cfg.trials, cfg.seed, filters)
    emit_report(sweep[max(sweep)], cfg.out, _manifest(cfg, "scripts/run_spacing.py"), sweep=sweep)

    print(f"{'spacing':>8s}{'IEKF2':>10s}{'IEKF1':>10s}{'IEKF1 vs IEKF2 [%]':>22s}")
    for s, summary in sweep.items():
        a2 = summary.rmse["IEKF2"]["attitude"].mean
        a1 = summary.rmse["IEKF1"]["attitude"].mean
        print(f"{s:8.2f}{a2:10.4f}{a1:10.4f}{percent_difference(a1, a2):22.2f}")


if __name__ == "__main__":
    main()
