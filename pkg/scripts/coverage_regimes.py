"""Empirical coverage of the conformal sets as class overlap grows.

The prefix rule keeps the class whose mass crosses the threshold, so coverage
is at least 1 - alpha but only approaches it when the classifier is unsure.
This prints mean coverage, accuracy and set size per blob spread.

    python scripts/coverage_regimes.py --seeds 20
"""
import argparse

import numpy as np

from cpcf.conformal import ConformalCalibrator, coverage_audit, set_sizes
from cpcf.core_math import Optimizer, make_rng
from cpcf.data import blob_centers, sample_blobs
from cpcf.mlp import accuracy, init_model, predict_proba, train_epoch

p = argparse.ArgumentParser()
p.add_argument("--seeds", type=int, default=20)
p.add_argument("--spreads", default="0.3,0.5,0.7,0.9,1.0,1.2,1.5,2.0")
p.add_argument("--alpha", type=float, default=0.1)
args = p.parse_args()

print(f"{'spread':>6} {'coverage':>9} {'min':>6} {'max':>6} {'accuracy':>9} {'set size':>9}")
for spread in (float(s) for s in args.spreads.split(",")):
    cov, acc, size = [], [], []
    for seed in range(args.seeds):
        rng = make_rng(seed)
        centers = blob_centers(10, 10, rng)
        train = sample_blobs(centers, 200, spread, rng)
        m = init_model(10, rng, allow_override=True)
        m.optimizer = Optimizer(1e-3)
        for _ in range(10):
            train_epoch(m, train.x, train.y, 32, rng)
        calib = sample_blobs(centers, 100, spread, rng)
        test = sample_blobs(centers, 300, spread, rng)
        q = ConformalCalibrator(args.alpha).fit(predict_proba(m, calib.x), calib.y).q_alpha
        cov.append(coverage_audit(m, test, q))
        acc.append(accuracy(m, test.x, test.y))
        size.append(set_sizes(predict_proba(m, test.x), q).mean())
    print(f"{spread:>6.2f} {np.mean(cov):>9.4f} {min(cov):>6.3f} {max(cov):>6.3f} {np.mean(acc):>9.3f} {np.mean(size):>9.2f}")
