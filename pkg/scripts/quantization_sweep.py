"""Test MAE against the number of quantization levels N for RLEL and BEL.

    python scripts/quantization_sweep.py --out runs/levels [--levels 16 32 64 128] [--seeds 0 1 2]

The code width M follows N (M = N) unless --bits is given.
"""

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from labelcode import harness


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--levels", type=int, nargs="+", default=[16, 32, 64, 128])
    ap.add_argument("--bits", type=int, default=None)
    ap.add_argument("--methods", nargs="+", default=["rlel", "bel"])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--out", required=True)
    args = ap.parse_args(argv)

    task = harness.SyntheticTask()
    reports = []
    for n in args.levels:
        base = replace(harness.ExperimentConfig(), n_bits=args.bits or n)
        reports += harness.sweep("n_levels", [n], task, base, args.seeds, args.methods)
    reports = harness.sort_reports(reports, "n_levels")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "reports.csv").write_text(harness.reports_csv(reports))
    agg = harness.aggregate(reports, "n_levels")
    (out / "aggregate.csv").write_text(harness.aggregate_csv(agg))
    for row in agg:
        print(f"N={row['value']:<4} {row['method']:<6} test MAE {row['test_mae_mean']:.3f}", flush=True)


if __name__ == "__main__":
    sys.exit(main())
