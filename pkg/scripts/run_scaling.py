#!/usr/bin/env python3
"""Resilience of the second blockage against the RIS element count."""
import argparse
import csv
from pathlib import Path

from ris_resilience.config import SystemConfig
from ris_resilience.experiments import ExperimentSpec, run_scaling_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/scale")
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--sweep", type=int, nargs="+",
                    default=[64, 100, 144, 196, 256])
    ap.add_argument("--demand-mbps", type=float, default=6.0)
    ap.add_argument("--jobs", type=int, default=2)
    args = ap.parse_args()

    spec = ExperimentSpec(
        system=SystemConfig(qos_rate_bps=args.demand_mbps * 1e6),
        seeds=tuple(range(args.seeds)),
        m_sweep=tuple(args.sweep),
        out_dir=args.out,
        jobs=args.jobs,
    )
    manifest = run_scaling_experiment(spec)
    print(f"manifest: {manifest}")

    rows = list(csv.DictReader(open(Path(args.out) / "scaling.csv")))
    means = {(int(r["M"]), r["method"]): float(r["r"])
             for r in rows if r["kind"] == "mean"}
    methods = sorted({m for _, m in means})
    print(f"{'M':>5s} " + " ".join(f"{m:>16s}" for m in methods))
    for m_elems in sorted({m for m, _ in means}):
        print(f"{m_elems:5d} " + " ".join(f"{means[(m_elems, meth)]:16.3f}"
                                          for meth in methods))


if __name__ == "__main__":
    main()
