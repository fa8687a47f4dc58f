"""Pick per-method training defaults on validation MAE, using tuning seeds
disjoint from the evaluation seeds.

    python scripts/tune_defaults.py [--seeds 100 101] [--out tuning.csv]

Prints one line per grid point and a summary of the best setting per method.
The chosen values are frozen by hand into ``harness.METHOD_LR`` and the
``ExperimentConfig`` defaults.
"""

import argparse
import csv
import itertools
import sys
from dataclasses import replace

import numpy as np

from labelcode import harness


def evaluate(task, cfg, seeds, cache):
    vals = []
    for s in seeds:
        t = replace(task, seed=s)
        if s not in cache:
            cache[s] = harness.generate_task(t)
        r = harness.run_experiment(t, replace(cfg, seed=s), data=cache[s])
        vals.append(r.val_mae)
    return float(np.mean(vals))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[100, 101])
    ap.add_argument("--methods", nargs="+", default=["direct_l1", "direct_l2", "rlel", "multiclass", "bel"])
    ap.add_argument("--out", default=None)
    args = ap.parse_args(argv)

    task = harness.SyntheticTask()
    cache = {}
    rows = []
    lrs = (3e-4, 1e-3, 3e-3)

    def record(method, val, **params):
        rows.append({"method": method, "val_mae": val, **params})
        print(method, params, round(val, 4), flush=True)

    def best_of(method):
        return min((r for r in rows if r["method"] == method), key=lambda r: r["val_mae"])

    def run(method, **params):
        cfg = harness.ExperimentConfig(method=method, **params)
        record(method, evaluate(task, cfg, args.seeds, cache), **params)

    # step size (crossed with the method's own knobs where it has any), then weight decay
    for method in args.methods:
        if method.startswith("direct"):
            for lr, scale in itertools.product(lrs, (1 / 64, 0.2, 1.0)):
                run(method, lr=lr, direct_label_scale=scale)
        elif method == "rlel":
            for lr, alpha, beta in itertools.product(lrs, (0.0, 0.1, 0.5), (0.0, 0.1, 1.0)):
                run(method, lr=lr, alpha=alpha, beta=beta)
        else:
            for lr in lrs:
                run(method, lr=lr)
        best = {k: v for k, v in best_of(method).items() if k not in ("method", "val_mae", "weight_decay")}
        for wd in (1e-4, 1e-3):
            run(method, **best, weight_decay=wd)

    print("\nbest per method:")
    for method in args.methods:
        print(" ", best_of(method))

    if args.out:
        keys = sorted({k for r in rows for k in r})
        with open(args.out, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=keys, lineterminator="\n")
            w.writeheader()
            w.writerows(rows)


if __name__ == "__main__":
    sys.exit(main())
