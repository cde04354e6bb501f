#!/usr/bin/env python3
"""Run every experiment scenario with its default config and write the CSVs.

Usage:
    python scripts/run_experiments.py [--outdir results] [--seed SEED]
    python scripts/run_experiments.py --scenario fairness --outdir results
"""

import argparse
import sys
import time
from pathlib import Path

from credalmarket.experiments import SCENARIOS, load_config, run_scenario


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--outdir", default="results", help="output directory for CSVs")
    parser.add_argument("--scenario", choices=sorted(SCENARIOS), help="run a single scenario")
    parser.add_argument("--seed", type=int, help="seed override for every scenario")
    args = parser.parse_args()

    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    names = [args.scenario] if args.scenario else sorted(SCENARIOS)
    for name in names:
        cfg = load_config(name, seed=args.seed)
        t0 = time.perf_counter()
        table = run_scenario(cfg)
        path = outdir / f"{name}.csv"
        table.to_csv(path)
        print(f"{name}: wrote {path} in {time.perf_counter() - t0:.1f}s")
        for key in sorted(table.headline):
            print(f"  {key} = {table.headline[key]!r}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
