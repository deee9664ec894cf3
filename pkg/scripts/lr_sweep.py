"""Learning-rate sensitivity: a_prev per task for several step sizes, seed-matched.

    python scripts/lr_sweep.py --lrs 2e-5,2e-4,2e-3 --seed 0
"""
import argparse
from pathlib import Path

import numpy as np

from cpcf.cli import main as cli
from cpcf.cli import plot_logs
from cpcf.continual import CurriculumConfig, lr_sensitivity_sweep, make_stream
from cpcf.data import default_data_dir, load_dataset

p = argparse.ArgumentParser()
p.add_argument("--lrs", default="2e-5,2e-4,2e-3")
p.add_argument("--seed", type=int, default=0)
p.add_argument("--dataset", default="mnist")
p.add_argument("--out", default="runs/lr")
args = p.parse_args()

train, test = load_dataset(args.dataset, default_data_dir())
stream = make_stream(train, test, 0.1, args.seed)
lrs = [float(v) for v in args.lrs.split(",")]
logs = lr_sensitivity_sweep(CurriculumConfig(seed=args.seed, dataset=args.dataset), stream, lrs)
for lr, log in logs.items():
    ends = log.end_of_task()
    a_prev = np.array([ends[j].a_prev for j in range(1, len(stream))])
    area = np.sum(a_prev[:-1] + a_prev[1:]) / 2
    print(f"lr={lr:g}  a_prev by task {np.round(a_prev, 3).tolist()}  area {area:.3f}")
for path in plot_logs(list(logs.values()), Path(args.out)):
    print(f"wrote {path}")
