"""Distance-correlation tables over the calibration-ratio x alpha grid.

Writes table2.csv (alpha fixed at 0.1) and table3.csv (ratio fixed at 0.1).
The full grid on MNIST is 16 cells x 2 methods x seeds; use --workers.

    python scripts/tables.py --dataset mnist --seeds 0 --workers 4
"""
import argparse
import sys
from pathlib import Path

from cpcf.cli import main as cli

p = argparse.ArgumentParser()
p.add_argument("--dataset", default="mnist")
p.add_argument("--seeds", default="0")
p.add_argument("--workers", default="4")
p.add_argument("--out", default="runs/tables")
p.add_argument("extra", nargs="*", help="further cpcf flags, e.g. --lr 1e-3 for blobs")
args = p.parse_args()

rc = cli(["sweep", "--dataset", args.dataset, "--method", "plain,ewc_single", "--seed", args.seeds,
          "--calib-ratio", "0.05,0.1,0.15,0.2", "--alpha", "0.05,0.1,0.15,0.2",
          "--workers", args.workers, "--output-dir", args.out, *args.extra])
for name in ("table2.csv", "table3.csv"):
    path = Path(args.out) / name
    if path.exists():
        print(f"\n{name}\n{path.read_text()}")
sys.exit(rc)
