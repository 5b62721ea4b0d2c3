"""Run every experiment verb with one config and collect the verdicts.

    python scripts/run_experiments.py [--config configs/default.yaml] [--out runs/default] [--jobs 1]

Writes one report JSON plus CSV tables per verb under --out and prints
a one-line summary per verdict. Exits 1 if any verdict fails.
"""

import argparse
import os
import sys
import time

from fragclt.experiments import EXPERIMENT_IDS, load_config_file, make_config, run_experiment


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default=os.path.join(os.path.dirname(__file__), "..", "configs", "default.yaml"))
    ap.add_argument("--out", default="runs/default")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--only", nargs="*", choices=list(EXPERIMENT_IDS))
    args = ap.parse_args()
    raw = load_config_file(args.config)
    failed = False
    for kind in args.only or EXPERIMENT_IDS:
        t0 = time.perf_counter()
        rep = run_experiment(make_config(kind, raw, jobs=args.jobs))
        rep.write(os.path.join(args.out, kind), "csv")
        for v in rep.verdicts:
            print(f"{'PASS' if v.passed else 'FAIL'} {kind}.{v.name}")
        print(f"-- {kind}: {time.perf_counter() - t0:.1f}s")
        failed |= not rep.passed
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
