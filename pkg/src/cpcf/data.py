"""Dataset parsing, synthetic blobs, and class-incremental task construction."""
from __future__ import annotations

import csv
import gzip
import hashlib
import io
import math
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import BadMagicError, ContractError, DimensionError, ParseError, TruncatedError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_RECORD = 3073
CIFAR_PIXELS = 3072
N_CLASSES = 10
LUMA = (0.299, 0.587, 0.114)

DEFAULT_LAYOUT: tuple[tuple[int, ...], ...] = ((0, 1, 2, 3, 4), (5,), (6,), (7,), (8,), (9,))

IDX_DATASETS = ("mnist", "kmnist", "fashionmnist")
IDX_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}
CIFAR_TRAIN_FILES = tuple(f"data_batch_{i}.bin" for i in range(1, 6))
CIFAR_TEST_FILE = "test_batch.bin"


class DataMissingError(FileNotFoundError):
    def __init__(self, dataset: str, expected: Iterable[Path]):
        self.expected = [str(p) for p in expected]
        listing = "\n  ".join(self.expected)
        super().__init__(f"dataset {dataset!r} not found; expected files:\n  {listing}")


@dataclass
class LabeledSet:
    """Features in [0, 1], integer labels, and ``ids`` recording each row's source index."""

    x: np.ndarray
    y: np.ndarray
    ids: Optional[np.ndarray] = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.x.ndim != 2:
            raise ContractError(f"features must be 2-D, got shape {self.x.shape}")
        if self.x.shape[0] != self.y.shape[0]:
            raise ContractError(f"{self.x.shape[0]} rows but {self.y.shape[0]} labels")
        if self.ids is None:
            self.ids = np.arange(self.y.shape[0])
        else:
            self.ids = np.asarray(self.ids, dtype=np.int64)

    def __len__(self) -> int:
        return int(self.y.shape[0])

    @property
    def dim(self) -> int:
        return int(self.x.shape[1])

    def subset(self, index) -> "LabeledSet":
        return LabeledSet(self.x[index], self.y[index], self.ids[index])

    @staticmethod
    def concat(sets: Sequence["LabeledSet"]) -> "LabeledSet":
        if not sets:
            raise ContractError("cannot concatenate zero sets")
        return LabeledSet(
            np.concatenate([s.x for s in sets]),
            np.concatenate([s.y for s in sets]),
            np.concatenate([s.ids for s in sets]),
        )


@dataclass
class Task:
    classes: tuple[int, ...]
    train: LabeledSet
    calib: LabeledSet
    test: LabeledSet


@dataclass
class TaskStream:
    tasks: list[Task]

    def __len__(self) -> int:
        return len(self.tasks)

    def __getitem__(self, i: int) -> Task:
        return self.tasks[i]

    def pooled(self, split: str, upto: int) -> LabeledSet:
        """Concatenate ``split`` of tasks ``0 .. upto-1``."""
        return LabeledSet.concat([getattr(t, split) for t in self.tasks[:upto]])

    def split_hash(self) -> str:
        h = hashlib.sha256()
        for t in self.tasks:
            for s in (t.train, t.calib, t.test):
                h.update(np.ascontiguousarray(s.ids).tobytes())
        return h.hexdigest()


# -- binary formats ---------------------------------------------------------


def parse_idx(blob: bytes) -> np.ndarray:
    """Decode an IDX image (u8, 3-D) or label (u8, 1-D) file.

    Images come back as an ``n x (rows*cols)`` float matrix scaled by 1/255,
    labels as an int64 vector.
    """
    if len(blob) < 4:
        raise TruncatedError("missing IDX magic", len(blob))
    (magic,) = struct.unpack_from(">I", blob, 0)
    if magic == IDX_IMAGES_MAGIC:
        ndim = 3
    elif magic == IDX_LABELS_MAGIC:
        ndim = 1
    else:
        raise BadMagicError(f"bad IDX magic 0x{magic:08x}", 0)
    header = 4 + 4 * ndim
    if len(blob) < header:
        raise TruncatedError("truncated IDX dimension header", len(blob))
    dims = struct.unpack_from(f">{ndim}I", blob, 4)
    expected = header + math.prod(dims)
    if len(blob) < expected:
        raise TruncatedError(f"payload for dims {dims} needs {expected} bytes, have {len(blob)}", len(blob))
    if len(blob) > expected:
        raise DimensionError(f"{len(blob) - expected} bytes beyond dims {dims}", expected)
    payload = np.frombuffer(blob, dtype=np.uint8, offset=header)
    if ndim == 1:
        return payload.astype(np.int64)
    n, rows, cols = dims
    return payload.reshape(n, rows * cols).astype(np.float64) / 255.0


def parse_idx_labels(blob: bytes) -> np.ndarray:
    y = parse_idx(blob)
    if y.ndim != 1:
        raise DimensionError("expected an IDX label file, got images", 0)
    if y.size and y.max() >= N_CLASSES:
        bad = int(np.argmax(y >= N_CLASSES))
        raise ParseError(f"label {y[bad]} >= {N_CLASSES} at record {bad}", 8 + bad)
    return y


def parse_idx_images(blob: bytes) -> np.ndarray:
    x = parse_idx(blob)
    if x.ndim != 2:
        raise DimensionError("expected an IDX image file, got labels", 0)
    return x


@dataclass
class CifarBatch:
    rgb: np.ndarray  # (n, 3072) uint8, channel planes R, G, B each 32x32 row-major
    labels: np.ndarray

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    def to_labeled(self) -> LabeledSet:
        return LabeledSet(to_grayscale_1024(self.rgb), self.labels)


def parse_cifar10(blob: bytes) -> CifarBatch:
    if len(blob) % CIFAR_RECORD:
        raise ParseError(
            f"length {len(blob)} is not a multiple of the {CIFAR_RECORD}-byte record",
            len(blob) - len(blob) % CIFAR_RECORD,
        )
    records = np.frombuffer(blob, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    labels = records[:, 0].astype(np.int64)
    bad = np.flatnonzero(labels >= N_CLASSES)
    if bad.size:
        i = int(bad[0])
        raise ParseError(f"record {i} has label {labels[i]}", i * CIFAR_RECORD)
    return CifarBatch(rgb=records[:, 1:].copy(), labels=labels)


def to_grayscale_1024(rgb: np.ndarray) -> np.ndarray:
    """Luminance of 32x32x3 planar records, scaled to [0, 1]."""
    rgb = np.asarray(rgb)
    if rgb.ndim != 2 or rgb.shape[1] != CIFAR_PIXELS:
        raise ContractError(f"expected (n, {CIFAR_PIXELS}) planar RGB, got {rgb.shape}")
    planes = rgb.reshape(-1, 3, 1024).astype(np.float64)
    gray = LUMA[0] * planes[:, 0] + LUMA[1] * planes[:, 1] + LUMA[2] * planes[:, 2]
    return np.clip(gray / 255.0, 0.0, 1.0)


# -- dataset registry -------------------------------------------------------


def _read_maybe_gz(path: Path) -> bytes:
    if path.suffix == ".gz":
        with gzip.open(path, "rb") as f:
            return f.read()
    return path.read_bytes()


def _find(directory: Path, stem: str) -> Optional[Path]:
    for name in (stem, stem + ".gz"):
        p = directory / name
        if p.exists():
            return p
    return None


def load_idx_dataset(directory: Path, name: str = "mnist") -> tuple[LabeledSet, LabeledSet]:
    directory = Path(directory)
    found = {k: _find(directory, v) for k, v in IDX_FILES.items()}
    if any(p is None for p in found.values()):
        raise DataMissingError(name, [directory / v for v in IDX_FILES.values()])
    out = []
    for split in ("train", "test"):
        x = parse_idx_images(_read_maybe_gz(found[f"{split}_images"]))
        y = parse_idx_labels(_read_maybe_gz(found[f"{split}_labels"]))
        if x.shape[0] != y.shape[0]:
            raise DimensionError(f"{split}: {x.shape[0]} images but {y.shape[0]} labels", 4)
        out.append(LabeledSet(x, y))
    return out[0], out[1]


def load_cifar10(directory: Path) -> tuple[LabeledSet, LabeledSet]:
    directory = Path(directory)
    nested = directory / "cifar-10-batches-bin"
    if nested.is_dir():
        directory = nested
    wanted = [directory / f for f in (*CIFAR_TRAIN_FILES, CIFAR_TEST_FILE)]
    if not all(p.exists() for p in wanted):
        raise DataMissingError("cifar10", wanted)
    train = [parse_cifar10(p.read_bytes()).to_labeled() for p in wanted[:-1]]
    test = parse_cifar10(wanted[-1].read_bytes()).to_labeled()
    return LabeledSet.concat(train), test


def default_data_dir() -> Path:
    return Path(os.environ.get("CPCF_DATA_DIR", "data"))


def load_dataset(name: str, data_dir: Optional[Path] = None) -> tuple[LabeledSet, LabeledSet]:
    """Load ``(train, test)`` for a named benchmark from ``data_dir/<name>/``."""
    base = Path(data_dir) if data_dir is not None else default_data_dir()
    if name in IDX_DATASETS:
        return load_idx_dataset(base / name, name)
    if name == "cifar10":
        return load_cifar10(base / name)
    raise ContractError(f"unknown dataset {name!r}")


# -- synthetic data ---------------------------------------------------------


def blob_centers(classes: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    """Distinct corners of the unit cube, hence at least unit distance apart."""
    if not 1 <= classes <= N_CLASSES:
        raise ContractError(f"classes must be in [1, {N_CLASSES}], got {classes}")
    if 2**dim < classes:
        raise ContractError(f"dim={dim} has fewer than {classes} distinct corners")
    centers: list[tuple[int, ...]] = []
    while len(centers) < classes:
        c = tuple(int(v) for v in rng.integers(0, 2, size=dim))
        if c not in centers:
            centers.append(c)
    return np.asarray(centers, dtype=np.float64)


def sample_blobs(centers: np.ndarray, per_class: int, spread: float, rng: np.random.Generator) -> LabeledSet:
    y = np.repeat(np.arange(len(centers)), per_class)
    noise = rng.normal(0.0, 1.0, size=(y.size, centers.shape[1]))
    return LabeledSet(np.clip(centers[y] + spread * noise, 0.0, 1.0), y)


def make_blobs(
    classes: int, per_class: int, dim: int, spread: float, rng: np.random.Generator
) -> LabeledSet:
    """Gaussian clusters around distinct cube corners, clipped to [0, 1], class-major order."""
    return sample_blobs(blob_centers(classes, dim, rng), per_class, spread, rng)


def write_blobs_csv(data: LabeledSet, fh: io.TextIOBase) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["label", *(f"f{i}" for i in range(data.dim))])
    for label, row in zip(data.y, data.x):
        w.writerow([int(label), *(repr(float(v)) for v in row)])


def read_blobs_csv(fh: io.TextIOBase) -> LabeledSet:
    reader = csv.reader(fh)
    header = next(reader)
    if not header or header[0] != "label":
        raise ParseError("blob CSV must start with a 'label' column", 0)
    rows = [r for r in reader if r]
    y = np.array([int(r[0]) for r in rows], dtype=np.int64)
    x = np.array([[float(v) for v in r[1:]] for r in rows], dtype=np.float64).reshape(len(rows), len(header) - 1)
    return LabeledSet(x, y)


# -- task construction ------------------------------------------------------


def _split_count(n: int, ratio: float) -> int:
    # tolerate products like 1000 * 0.1 landing a hair under an integer
    return int(math.floor(n * ratio + 1e-9))


def build_task_stream(
    full_train: LabeledSet,
    full_test: LabeledSet,
    calib_ratio: float,
    rng: np.random.Generator,
    layout: Sequence[Sequence[int]] = DEFAULT_LAYOUT,
) -> TaskStream:
    """Filter each task's classes, shuffle its pool, and carve off the calibration share."""
    if not 0.0 < calib_ratio < 1.0:
        raise ContractError(f"calib_ratio must lie in (0, 1), got {calib_ratio}")
    wanted = sorted({c for classes in layout for c in classes})
    for name, s in (("train", full_train), ("test", full_test)):
        present = set(np.unique(s.y).tolist())
        for c in wanted:
            if c not in present:
                raise ContractError(f"class {c} missing from the {name} set")
    tasks = []
    for classes in layout:
        classes = tuple(sorted(classes))
        pool = full_train.subset(np.flatnonzero(np.isin(full_train.y, classes)))
        order = rng.permutation(len(pool))
        n_cal = _split_count(len(pool), calib_ratio)
        calib = pool.subset(order[:n_cal])
        train = pool.subset(order[n_cal:])
        test = full_test.subset(np.flatnonzero(np.isin(full_test.y, classes)))
        tasks.append(Task(classes, train, calib, test))
    return TaskStream(tasks)
