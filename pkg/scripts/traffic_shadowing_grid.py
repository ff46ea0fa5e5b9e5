#!/usr/bin/env python3
"""Model-versus-simulation agreement over the traffic-by-shadowing grid.

Runs both engines on the seven-sensor star for every (arrival rate,
shadowing spread) combination in the bundled sweep block, writes the CSV,
and prints a compact agreement table.  This is the standard validation
run; expect a couple of minutes at the default 20 replications.
"""

import argparse
import csv
from collections import defaultdict
from pathlib import Path

from csmafade.scenarios import load_config
from csmafade.sweep import run_sweep, sweep_from_config


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", default=Path(__file__).parent.parent / "configs/star7.yaml")
    parser.add_argument("--out", default="results", help="output directory")
    parser.add_argument("--reps", type=int, default=None, help="override replication count")
    parser.add_argument("--workers", type=int, default=1)
    args = parser.parse_args()

    overrides = [] if args.reps is None else [f"sim.replications={args.reps}"]
    config = load_config(args.config, overrides)
    out = run_sweep(config, sweep_from_config(config), out_dir=args.out, workers=args.workers)
    print(f"wrote {out}\n")

    rows = defaultdict(dict)
    with open(out, newline="") as f:
        for row in csv.DictReader(f):
            if row["metric"] in ("mean_reliability", "mean_delay_s") and row["src"] == "":
                rows[(row["lam"], row["fading.sigma"])][row["metric"]] = row

    print(f"{'lam':>5} {'sigma':>6} {'R model':>9} {'R sim':>9} {'gap':>7}"
          f" {'D model':>9} {'D sim':>9} {'rel':>6}")
    for (lam, sigma), metrics in rows.items():
        r = metrics["mean_reliability"]
        d = metrics["mean_delay_s"]
        r_gap = abs(float(r["analytic_value"]) - float(r["sim_mean"]))
        d_rel = abs(float(d["analytic_value"]) - float(d["sim_mean"])) / float(d["analytic_value"])
        print(f"{lam:>5} {sigma:>6} {float(r['analytic_value']):9.5f} "
              f"{float(r['sim_mean']):9.5f} {r_gap:7.4f} "
              f"{float(d['analytic_value'])*1e3:8.3f}m {float(d['sim_mean'])*1e3:8.3f}m "
              f"{d_rel:6.2%}")


if __name__ == "__main__":
    main()
