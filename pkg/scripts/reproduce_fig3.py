"""MNIST curricula for every method over a few seeds, then the three SVG charts.

    python scripts/reproduce_fig3.py --seeds 0,1,2 --out runs/fig3
"""
import argparse
import sys
from pathlib import Path

from cpcf.cli import main as cli
from cpcf.cli import read_runlog
from cpcf.metrics import omega_metrics

p = argparse.ArgumentParser()
p.add_argument("--seeds", default="0,1,2")
p.add_argument("--dataset", default="mnist")
p.add_argument("--out", default="runs/fig3")
p.add_argument("--workers", default="3")
args = p.parse_args()

rc = cli(["run", "--dataset", args.dataset, "--method", "plain,ewc_single,ewc_multi",
          "--seed", args.seeds, "--output-dir", args.out, "--workers", args.workers])
if rc:
    sys.exit(rc)
out = Path(args.out)
csvs = sorted(p for p in out.glob("*.csv") if not p.name.endswith(".omega.csv"))
cli(["plot", *map(str, csvs), "--out", str(out / "svg")])

print(f"{'run':<48} {'final a_new':>11} {'final a_prev':>12} {'omega_prev':>10}")
for path in csvs:
    log = read_runlog(path)
    last = log.records[-1]
    omega = (out / path.name.replace(".csv", ".omega.csv")).read_text().splitlines()[1].split(",")[4]
    print(f"{last.run_id:<48} {last.a_new:>11.3f} {last.a_prev:>12.3f} {float(omega):>10.3f}")
