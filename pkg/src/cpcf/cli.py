"""Command-line harness: run, sweep, plot, synth, verify.

Configuration comes from defaults, then an optional ``key=value`` file, then
command-line flags. List-valued keys take comma-separated values. Every CSV
written starts with a ``#`` block echoing the effective configuration, and
that block can be fed back through ``--config`` to reproduce the run.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from functools import lru_cache
from pathlib import Path
from typing import Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .continual import METHODS, CurriculumConfig, make_stream, run_curriculum
from .core_math import make_rng
from .data import DataMissingError, LabeledSet, blob_centers, default_data_dir, load_dataset, sample_blobs, write_blobs_csv
from .errors import ContractError, CsvFormatError, NumericalAbort, ParseError
from .metrics import METHOD_LABELS, RunLog, RunRecord, correlation_table, distance_correlation, omega_metrics, table_csv

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_ABORT = 0, 2, 3, 4

CSV_HEADER = "run_id,seed,dataset,method,task_index,epoch,a_prev,a_new,cpcf,q_alpha,alpha,calib_ratio,lr,lambda"
OMEGA_HEADER = "run_id,omega_base,omega_new,omega_all,omega_prev,a_ideal"
RUNLOG_MAGIC = "# cpcf runlog"
DATASETS = ("mnist", "kmnist", "fashionmnist", "cifar10", "blobs")

_CC = CurriculumConfig()


@dataclass
class ExperimentConfig:
    dataset: str = "mnist"
    data_dir: str = ""
    method: tuple[str, ...] = ("plain",)
    seed: tuple[int, ...] = (0,)
    alpha: tuple[float, ...] = (_CC.alpha,)
    calib_ratio: tuple[float, ...] = (_CC.calib_ratio,)
    lr: tuple[float, ...] = (_CC.lr,)
    lam: float = _CC.lam
    base_epochs: int = _CC.base_epochs
    incr_epochs: int = _CC.incr_epochs
    batch_size: int = _CC.batch_size
    optimizer: str = _CC.optimizer
    fisher_samples: int = _CC.fisher_samples
    a_ideal_mode: str = _CC.a_ideal_mode
    hidden: tuple[int, ...] = _CC.hidden
    blob_dim: int = 20
    blob_per_class: int = 200
    blob_test_per_class: int = 50
    blob_spread: float = 0.3
    blob_seed: int = 0
    output_dir: str = "runs"
    workers: int = 1

    def validate(self) -> None:
        if self.dataset not in DATASETS:
            raise ContractError(f"dataset must be one of {DATASETS}, got {self.dataset!r}")
        for m in self.method:
            if m not in METHODS:
                raise ContractError(f"method must be one of {METHODS}, got {m!r}")
        for name in ("method", "seed", "alpha", "calib_ratio", "lr"):
            if not getattr(self, name):
                raise ContractError(f"{name} list is empty")
        for r in self.calib_ratio:
            if not 0.0 < r < 1.0:
                raise ContractError(f"calib_ratio must lie in (0, 1), got {r}")
        if self.workers < 1:
            raise ContractError("workers must be >= 1")

    def cells(self) -> list["Cell"]:
        return [
            Cell(r, a, m, lr, s)
            for r in self.calib_ratio
            for a in self.alpha
            for m in self.method
            for lr in self.lr
            for s in self.seed
        ]

    def curriculum(self, cell: "Cell") -> CurriculumConfig:
        return CurriculumConfig(
            base_epochs=self.base_epochs, incr_epochs=self.incr_epochs, lr=cell.lr, lam=self.lam,
            method=cell.method, alpha=cell.alpha, calib_ratio=cell.calib_ratio, seed=cell.seed,
            batch_size=self.batch_size, optimizer=self.optimizer, fisher_samples=self.fisher_samples,
            a_ideal_mode=self.a_ideal_mode, hidden=self.hidden,
            allow_override=self.dataset == "blobs", dataset=self.dataset, run_id=cell.run_id(self.dataset),
        )

    def echo(self, cell: "Cell") -> list[tuple[str, str]]:
        """Effective values for one cell; run-only keys such as output_dir are left out."""
        scalar = dataclasses.replace(
            self, method=(cell.method,), seed=(cell.seed,), alpha=(cell.alpha,),
            calib_ratio=(cell.calib_ratio,), lr=(cell.lr,),
        )
        skip = {"output_dir", "workers"}
        if self.dataset == "blobs":
            skip.add("data_dir")
        else:
            skip |= {f.name for f in fields(self) if f.name.startswith("blob_")}
        return [(f.name, _fmt_value(getattr(scalar, f.name))) for f in fields(self) if f.name not in skip]


@dataclass(frozen=True)
class Cell:
    calib_ratio: float
    alpha: float
    method: str
    lr: float
    seed: int

    def run_id(self, dataset: str) -> str:
        return f"{dataset}-{self.method}-c{self.calib_ratio:g}-a{self.alpha:g}-lr{self.lr:g}-s{self.seed}"


# -- config parsing ---------------------------------------------------------

_ALIASES = {"lambda": "lam"}


def _fmt_value(v) -> str:
    if isinstance(v, tuple):
        return ",".join(_fmt_value(x) for x in v)
    return repr(v) if isinstance(v, float) else str(v)


def _convert(name: str, raw: str):
    f = {f.name: f for f in fields(ExperimentConfig)}[name]
    kind = str(f.type)
    try:
        if kind.startswith("tuple"):
            item = int if "int" in kind else float if "float" in kind else str
            return tuple(item(p.strip()) for p in raw.split(",") if p.strip())
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError as exc:
        raise ContractError(f"bad value for {name}: {raw!r}") from exc
    return raw.strip()


def parse_config_text(text: str, from_runlog: bool = False) -> dict:
    """Parse ``key=value`` lines. In a run-log echo block, derived keys are skipped."""
    known = {f.name for f in fields(ExperimentConfig)}
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if from_runlog:
            if not line.startswith("#"):
                break
            line = line[1:].strip()
        elif not line or line.startswith("#"):
            continue
        if "=" not in line:
            if from_runlog:
                continue
            raise ContractError(f"config line {lineno}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = _ALIASES.get(key, key)
        if key not in known:
            if from_runlog:
                continue
            raise ContractError(f"config line {lineno}: unknown key {key!r}")
        out[key] = _convert(key, value)
    return out


def load_config(path: Optional[str], overrides: dict) -> ExperimentConfig:
    values = {}
    if path:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ContractError(f"cannot read config {path}: {exc}") from exc
        values.update(parse_config_text(text, from_runlog=text.startswith(RUNLOG_MAGIC)))
    values.update({k: _convert(k, v) for k, v in overrides.items() if v is not None})
    cfg = ExperimentConfig(**values)
    cfg.validate()
    return cfg


# -- data -------------------------------------------------------------------


def blob_corpus(cfg: ExperimentConfig) -> tuple[LabeledSet, LabeledSet]:
    return _blob_corpus(cfg.blob_dim, cfg.blob_per_class, cfg.blob_test_per_class, cfg.blob_spread, cfg.blob_seed)


def _blob_corpus(dim, per_class, test_per_class, spread, seed) -> tuple[LabeledSet, LabeledSet]:
    rng = make_rng(seed)
    centers = blob_centers(10, dim, rng)
    train = sample_blobs(centers, per_class, spread, rng)
    test = sample_blobs(centers, test_per_class, spread, rng)
    return train, test


@lru_cache(maxsize=4)
def _load(key: tuple) -> tuple[LabeledSet, LabeledSet]:
    if key[0] == "blobs":
        return _blob_corpus(*key[1:])
    return load_dataset(key[0], Path(key[1]))


def load_data(cfg: ExperimentConfig) -> tuple[LabeledSet, LabeledSet]:
    """Cached per process so sweep cells share one parsed corpus."""
    if cfg.dataset == "blobs":
        key = ("blobs", cfg.blob_dim, cfg.blob_per_class, cfg.blob_test_per_class, cfg.blob_spread, cfg.blob_seed)
    else:
        key = (cfg.dataset, cfg.data_dir or str(default_data_dir()))
    return _load(key)


# -- CSV I/O ----------------------------------------------------------------


def _num(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.10g}"


def format_row(r: RunRecord) -> str:
    cells = [r.run_id, _num(r.seed), r.dataset, r.method, _num(r.task_index), _num(r.epoch),
             _num(r.a_prev), _num(r.a_new), _num(r.cpcf), _num(r.q_alpha), _num(r.alpha),
             _num(r.calib_ratio), _num(r.lr), _num(r.lam)]
    return ",".join(cells)


def header_block(echo: Sequence[tuple[str, str]], derived: dict) -> str:
    lines = [RUNLOG_MAGIC]
    lines += [f"# {k}={v}" for k, v in echo]
    lines += [f"# {k}={v}" for k, v in derived.items()]
    lines.append(CSV_HEADER)
    return "\n".join(lines) + "\n"


def read_runlog(path) -> RunLog:
    """Parse a run-log CSV. Errors name the 1-based line."""
    text = Path(path).read_text()
    meta: dict = {}
    records = []
    lines = text.splitlines()
    i = 0
    while i < len(lines) and lines[i].startswith("#"):
        body = lines[i][1:].strip()
        if "=" in body:
            k, v = body.split("=", 1)
            meta[k.strip()] = v.strip()
        i += 1
    if i == len(lines):
        return RunLog([], meta)
    if lines[i] != CSV_HEADER:
        raise CsvFormatError(f"expected header {CSV_HEADER!r}", i + 1)
    for lineno in range(i + 2, len(lines) + 1):
        line = lines[lineno - 1]
        if not line.strip():
            continue
        records.append(_parse_row(line, lineno))
    return RunLog(records, meta)


def _parse_row(line: str, lineno: int) -> RunRecord:
    parts = next(csv.reader([line]))
    if len(parts) != 14:
        raise CsvFormatError(f"expected 14 fields, got {len(parts)}", lineno)

    def num(idx, kind=float, optional=False):
        s = parts[idx]
        if s == "":
            if optional:
                return None
            raise CsvFormatError(f"column {CSV_HEADER.split(',')[idx]} is empty", lineno)
        try:
            return kind(s)
        except ValueError:
            raise CsvFormatError(f"column {CSV_HEADER.split(',')[idx]}: not a number: {s!r}", lineno) from None

    return RunRecord(
        run_id=parts[0], seed=num(1, int), dataset=parts[2], method=parts[3],
        task_index=num(4, int), epoch=num(5, int), a_prev=num(6, optional=True), a_new=num(7),
        cpcf=num(8, optional=True), q_alpha=num(9, optional=True), alpha=num(10),
        calib_ratio=num(11), lr=num(12), lam=num(13),
    )


# -- run / sweep ------------------------------------------------------------


@dataclass
class CellResult:
    cell: Cell
    run_id: str
    status: int
    message: str = ""
    log: Optional[RunLog] = None


def run_cell(cfg: ExperimentConfig, cell: Cell) -> CellResult:
    """Run one curriculum, streaming rows into ``<output_dir>/<run_id>.csv``."""
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cc = cfg.curriculum(cell)
    try:
        train, test = load_data(cfg)
        stream = make_stream(train, test, cell.calib_ratio, cell.seed)
    except (DataMissingError, ParseError) as exc:
        return CellResult(cell, cc.run_id, EXIT_DATA, str(exc))
    except ContractError as exc:
        return CellResult(cell, cc.run_id, EXIT_CONFIG, str(exc))
    derived = {"input_dim": train.dim, "n_tasks": len(stream), "split_hash": stream.split_hash()}
    path = out_dir / f"{cc.run_id}.csv"
    with open(path, "w", newline="") as fh:
        fh.write(header_block(cfg.echo(cell), derived))
        fh.flush()

        def hook(rec: RunRecord) -> None:
            fh.write(format_row(rec) + "\n")
            fh.flush()

        try:
            log = run_curriculum(cc, stream, hooks=hook)
        except NumericalAbort as exc:
            return CellResult(cell, cc.run_id, EXIT_ABORT, f"numerical abort: {exc} (partial log kept in {path})")
        except ContractError as exc:
            return CellResult(cell, cc.run_id, EXIT_CONFIG, str(exc))
    a_ideal = log.meta["a_ideal"]
    if a_ideal > 0:
        rep = omega_metrics(log)
        values = (rep.omega_base, rep.omega_new, rep.omega_all, rep.omega_prev, a_ideal)
    else:
        # nothing to normalize by; only the raw new-task mean is defined
        print(f"warning: {cc.run_id}: a_ideal is 0, normalized omegas left blank", file=sys.stderr)
        ends = log.end_of_task()
        values = (None, float(np.mean([ends[j].a_new for j in ends if j >= 1])), None, None, a_ideal)
    (out_dir / f"{cc.run_id}.omega.csv").write_text(
        OMEGA_HEADER + "\n" + ",".join([cc.run_id, *(_num(v) for v in values)]) + "\n"
    )
    return CellResult(cell, cc.run_id, EXIT_OK, str(path), log)


def _run_cells(cfg: ExperimentConfig, cells: list[Cell], stop_on_error: bool) -> list[CellResult]:
    if cfg.workers == 1 or len(cells) == 1:
        results = []
        for c in cells:
            res = run_cell(cfg, c)
            _report(res)
            results.append(res)
            if stop_on_error and res.status:
                break
        return results
    with ProcessPoolExecutor(cfg.workers) as pool:
        results = list(pool.map(run_cell, [cfg] * len(cells), cells))
    for res in results:
        _report(res)
    return results


def _report(res: CellResult) -> None:
    if res.status:
        print(f"FAILED {res.run_id}: {res.message}", file=sys.stderr)
    else:
        print(f"wrote {res.message}")


def cmd_run(cfg: ExperimentConfig) -> int:
    results = _run_cells(cfg, cfg.cells(), stop_on_error=True)
    return max(r.status for r in results)


def cmd_sweep(cfg: ExperimentConfig) -> int:
    results = _run_cells(cfg, cfg.cells(), stop_on_error=False)
    # keyed merge, then sorted: tables do not depend on completion order
    logs = {r.run_id: r.log for r in results if r.log is not None}
    ordered = [logs[k] for k in sorted(logs)]
    out = Path(cfg.output_dir)
    t2 = [lg for lg in ordered if math.isclose(lg.records[0].alpha, 0.1)]
    t3 = [lg for lg in ordered if math.isclose(lg.records[0].calib_ratio, 0.1)]
    (out / "table2.csv").write_text(table_csv(correlation_table(t2, "calib_ratio")))
    (out / "table3.csv").write_text(table_csv(correlation_table(t3, "alpha")))
    failed = [r for r in results if r.status]
    print(f"sweep: {len(results) - len(failed)} of {len(results)} cells ok")
    for r in failed:
        print(f"  failed: {r.run_id} (exit {r.status})", file=sys.stderr)
    return max((r.status for r in failed), default=EXIT_OK)


# -- SVG --------------------------------------------------------------------

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


def svg_chart(title: str, xlabel: str, ylabel: str, series, y_range=None, x_range=None) -> str:
    """Line chart as SVG text. ``series`` is a list of ``(label, xs, ys, dashed)``."""
    w, h, left, right, top, bottom = 640, 400, 60, 170, 40, 50
    pw, ph = w - left - right, h - top - bottom
    xs_all = [x for _, xs, _, _ in series for x in xs]
    ys_all = [y for _, _, ys, _ in series for y in ys]
    x0, x1 = x_range or ((min(xs_all), max(xs_all)) if xs_all else (0.0, 1.0))
    y0, y1 = y_range or ((min(ys_all), max(ys_all)) if ys_all else (0.0, 1.0))
    if x1 <= x0:
        x1 = x0 + 1.0
    if y1 <= y0:
        y1 = y0 + 1.0

    def px(x):
        return left + (x - x0) / (x1 - x0) * pw

    def py(y):
        return top + ph - (y - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">',
        f'<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>',
        f'<text x="{w / 2:.1f}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
    ]
    for i in range(5):
        xv = x0 + (x1 - x0) * i / 4
        yv = y0 + (y1 - y0) * i / 4
        out.append(f'<text x="{px(xv):.1f}" y="{top + ph + 16}" text-anchor="middle" font-size="11">{xv:.3g}</text>')
        out.append(f'<text x="{left - 6}" y="{py(yv) + 4:.1f}" text-anchor="end" font-size="11">{yv:.3g}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{h - 10}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>')
    out.append(
        f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 16 {top + ph / 2:.1f})">{escape(ylabel)}</text>'
    )
    for k, (label, xs, ys, dashed) in enumerate(series):
        color = PALETTE[k % len(PALETTE)]
        pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs, ys))
        dash = ' stroke-dasharray="5,3"' if dashed else ""
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{pts}"/>')
        ly = top + 14 * k + 6
        out.append(f'<line x1="{w - right + 10}" y1="{ly}" x2="{w - right + 30}" y2="{ly}" stroke="{color}"{dash}/>')
        out.append(f'<text x="{w - right + 34}" y="{ly + 4}" font-size="10">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _task_axis(log: RunLog) -> tuple[list[float], list[RunRecord]]:
    """x position of each record: base at 0, epoch e of task j at j - 1 + e / E_j."""
    recs = log.sorted().records
    last_epoch: dict[int, int] = {}
    for r in recs:
        last_epoch[r.task_index] = max(last_epoch.get(r.task_index, 0), r.epoch)
    xs = [0.0 if r.task_index == 0 else r.task_index - 1 + r.epoch / last_epoch[r.task_index] for r in recs]
    return xs, recs


def plot_logs(logs: Sequence[RunLog], out_dir: Path) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    acc, lr_curves, cp = [], [], []
    for log in logs:
        if not log.records:
            continue
        xs, recs = _task_axis(log)
        r0 = recs[0]
        tag = f"{METHOD_LABELS.get(r0.method, r0.method)} s{r0.seed}"
        inc = [(x, r) for x, r in zip(xs, recs) if r.task_index >= 1]
        acc.append((f"{tag} a_prev", [x for x, _ in inc], [r.a_prev for _, r in inc], False))
        acc.append((f"{tag} a_new", xs, [r.a_new for r in recs], True))
        lr_curves.append((f"lr={r0.lr:g} {tag}", [x for x, _ in inc], [r.a_prev for _, r in inc], False))
        cp.append((f"{tag} CPCF", [x for x, _ in inc], [r.cpcf for _, r in inc], False))
    x_range = (0.0, max((max(s[1]) for s in acc if s[1]), default=5.0))
    charts = {
        "accuracy.svg": svg_chart("Accuracy on previous and new tasks", "task", "accuracy", acc, (0.0, 1.0), x_range),
        "lr.svg": svg_chart("Previous-task accuracy by learning rate", "task", "a_prev", lr_curves, (0.0, 1.0), x_range),
        "cpcf.svg": svg_chart("CPCF over tasks", "task", "mean set size", cp, (1.0, 10.0), x_range),
    }
    paths = []
    for name, text in charts.items():
        p = out_dir / name
        p.write_text(text)
        paths.append(p)
    return paths


# -- verify -----------------------------------------------------------------


def verify_log(log: RunLog) -> list[str]:
    """Invariant checks on a parsed run log; returns human-readable violations."""
    problems = []
    recs = log.records
    keys = [(r.task_index, r.epoch) for r in recs]
    if keys != sorted(keys):
        problems.append("records are not sorted by (task_index, epoch)")
    if len(set(keys)) != len(keys):
        problems.append("duplicate (task_index, epoch) rows")
    for n, r in enumerate(recs, 1):
        where = f"row {n}"
        if not 0.0 <= r.a_new <= 1.0:
            problems.append(f"{where}: a_new {r.a_new} outside [0, 1]")
        if r.task_index == 0:
            if r.a_prev is not None or r.cpcf is not None or r.q_alpha is not None:
                problems.append(f"{where}: base row carries a_prev/cpcf/q_alpha")
            continue
        if r.a_prev is None or r.cpcf is None or r.q_alpha is None:
            problems.append(f"{where}: incremental row lacks a_prev/cpcf/q_alpha")
            continue
        if not 0.0 <= r.a_prev <= 1.0:
            problems.append(f"{where}: a_prev {r.a_prev} outside [0, 1]")
        if not 1.0 <= r.cpcf <= 10.0:
            problems.append(f"{where}: cpcf {r.cpcf} outside [1, 10]")
        if not 0.0 < r.q_alpha <= 1.0 + 1e-9:
            problems.append(f"{where}: q_alpha {r.q_alpha} outside (0, 1]")
    if len({(r.run_id, r.seed, r.method, r.alpha, r.calib_ratio, r.lr, r.lam) for r in recs}) > 1:
        problems.append("rows from more than one run")
    meta = log.meta
    if recs and "incr_epochs" in meta and "n_tasks" in meta:
        expected = 1 + (int(meta["n_tasks"]) - 1) * int(meta["incr_epochs"])
        if len(recs) != expected:
            problems.append(f"{len(recs)} rows, cadence implies {expected}")
    inc = log.incremental()
    if len(inc) >= 2:
        d = distance_correlation([r.cpcf for r in inc], [r.a_prev for r in inc])
        if not 0.0 <= d <= 1.0:
            problems.append(f"dCor {d} outside [0, 1]")
    return problems


def cmd_verify(paths: Sequence[str]) -> int:
    status = EXIT_OK
    for p in paths:
        try:
            problems = verify_log(read_runlog(p))
        except CsvFormatError as exc:
            problems = [str(exc)]
        except OSError as exc:
            problems = [f"cannot read: {exc}"]
        if problems:
            status = EXIT_DATA
            print(f"FAIL {p}")
            for msg in problems:
                print(f"  {msg}")
        else:
            print(f"ok   {p}")
    return status


# -- entry point ------------------------------------------------------------


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value file, or a run-log CSV whose echo block is reused")
    for f in fields(ExperimentConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.name == "lam":
            p.add_argument("--lambda", "--lam", dest="lam", metavar="LAMBDA", help="EWC strength")
        else:
            p.add_argument(flag, dest=f.name, metavar=f.name.upper(), help=f"default: {_fmt_value(f.default)}")


def _overrides(args: argparse.Namespace) -> dict:
    return {f.name: getattr(args, f.name) for f in fields(ExperimentConfig)}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cpcf", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run curricula, one CSV per (method, lr, seed)")
    _add_config_flags(run)
    sweep = sub.add_parser("sweep", help="calibration ratio x alpha grid plus correlation tables")
    _add_config_flags(sweep)
    plot = sub.add_parser("plot", help="SVG charts from run-log CSVs")
    plot.add_argument("csv", nargs="*")
    plot.add_argument("--out", default="plots")
    synth = sub.add_parser("synth", help="write the blob corpus used by --dataset blobs")
    _add_config_flags(synth)
    verify = sub.add_parser("verify", help="check run-log CSV invariants")
    verify.add_argument("csv", nargs="+")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "plot":
        try:
            logs = [read_runlog(p) for p in args.csv]
        except CsvFormatError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_DATA
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_DATA
        for p in plot_logs(logs, Path(args.out)):
            print(f"wrote {p}")
        return EXIT_OK
    if args.command == "verify":
        return cmd_verify(args.csv)
    try:
        cfg = load_config(args.config, _overrides(args))
    except ContractError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "synth":
        train, test = blob_corpus(cfg)
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, data in (("blobs_train.csv", train), ("blobs_test.csv", test)):
            buf = io.StringIO()
            write_blobs_csv(data, buf)
            (out / name).write_text(buf.getvalue())
            print(f"wrote {out / name}")
        return EXIT_OK
    if args.command == "run":
        return cmd_run(cfg)
    return cmd_sweep(cfg)


if __name__ == "__main__":
    sys.exit(main())
