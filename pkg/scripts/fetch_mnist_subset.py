"""Build a 10k-sample MNIST subset in IDX format from the ``mnist`` npm package.

The npm package ships 10,000 MNIST digits as JSON arrays of pixel/255 values
rounded to 3 decimals; rounding back with x*255 recovers the original bytes
exactly. The digits are split per class 80/20 into train/test with a fixed seed.

    python scripts/fetch_mnist_subset.py --out data/mnist
    python scripts/fetch_mnist_subset.py --package-dir /tmp/npm/package --out data/mnist
"""
import argparse
import gzip
import json
import struct
import subprocess
import tarfile
import tempfile
from pathlib import Path

import numpy as np


def npm_fetch(workdir: Path) -> Path:
    subprocess.run(["npm", "pack", "mnist@1.1.0"], cwd=workdir, check=True, capture_output=True)
    tgz = next(workdir.glob("mnist-*.tgz"))
    with tarfile.open(tgz) as tf:
        tf.extractall(workdir)
    return workdir / "package"


def load_digits(package_dir: Path):
    images, labels = [], []
    for d in range(10):
        flat = np.asarray(json.loads((package_dir / "src" / "digits" / f"{d}.json").read_text())["data"])
        pix = np.rint(flat * 255).astype(np.uint8).reshape(-1, 784)
        images.append(pix)
        labels.append(np.full(len(pix), d, dtype=np.uint8))
    return images, labels


def write_gz(path: Path, payload: bytes) -> None:
    # mtime=0 keeps the archive bytes reproducible
    with open(path, "wb") as raw, gzip.GzipFile(fileobj=raw, mode="wb", mtime=0, filename="") as f:
        f.write(payload)


def idx_images(x: np.ndarray) -> bytes:
    return struct.pack(">IIII", 0x803, len(x), 28, 28) + x.tobytes()


def idx_labels(y: np.ndarray) -> bytes:
    return struct.pack(">II", 0x801, len(y)) + y.tobytes()


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("data/mnist"))
    ap.add_argument("--package-dir", type=Path, default=None)
    ap.add_argument("--test-fraction", type=float, default=0.2)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        pkg = args.package_dir or npm_fetch(Path(tmp))
        images, labels = load_digits(pkg)

    rng = np.random.default_rng(args.seed)
    tr_x, tr_y, te_x, te_y = [], [], [], []
    for x, y in zip(images, labels):
        order = rng.permutation(len(x))
        n_test = int(round(len(x) * args.test_fraction))
        te_x.append(x[order[:n_test]]); te_y.append(y[order[:n_test]])
        tr_x.append(x[order[n_test:]]); tr_y.append(y[order[n_test:]])
    splits = {}
    for name, xs, ys in (("train", tr_x, tr_y), ("t10k", te_x, te_y)):
        x, y = np.concatenate(xs), np.concatenate(ys)
        order = rng.permutation(len(x))
        splits[name] = (x[order], y[order])

    args.out.mkdir(parents=True, exist_ok=True)
    for name, (x, y) in splits.items():
        write_gz(args.out / f"{name}-images-idx3-ubyte.gz", idx_images(x))
        write_gz(args.out / f"{name}-labels-idx1-ubyte.gz", idx_labels(y))
        print(f"{name}: {len(x)} samples, class counts {np.bincount(y, minlength=10).tolist()}")


if __name__ == "__main__":
    main()
