"""Run records, retention (omega) scores, and distance correlation."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import ContractError

METHOD_LABELS = {"plain": "MLP", "ewc_single": "EWC", "ewc_multi": "EWC-multi"}
TABLE_DATASETS = ("mnist", "cifar10", "fashionmnist", "kmnist")
INSUFFICIENT = "insufficient data"


@dataclass
class RunRecord:
    run_id: str
    seed: int
    dataset: str
    method: str
    task_index: int
    epoch: int
    a_prev: Optional[float]
    a_new: float
    cpcf: Optional[float]
    q_alpha: Optional[float]
    alpha: float
    calib_ratio: float
    lr: float
    lam: float
    # not part of the CSV schema; present only for in-process logs
    a_base: Optional[float] = None
    a_all: Optional[float] = None
    loss: Optional[float] = None


@dataclass
class RunLog:
    records: list[RunRecord] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def append(self, rec: RunRecord) -> None:
        self.records.append(rec)

    def __len__(self) -> int:
        return len(self.records)

    def sorted(self) -> "RunLog":
        recs = sorted(self.records, key=lambda r: (r.task_index, r.epoch))
        return RunLog(recs, dict(self.meta))

    def incremental(self) -> list[RunRecord]:
        return [r for r in self.sorted().records if r.task_index >= 1]

    def end_of_task(self) -> dict[int, RunRecord]:
        last: dict[int, RunRecord] = {}
        for r in self.sorted().records:
            last[r.task_index] = r
        return last

    def series(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.incremental()], dtype=np.float64)


@dataclass
class OmegaReport:
    omega_base: float
    omega_new: float
    omega_all: float
    omega_prev: float
    a_ideal: float


def omega_metrics(log: RunLog, a_ideal: Optional[float] = None, n_tasks: Optional[int] = None) -> OmegaReport:
    """Retention scores over the end-of-task evaluations of incremental tasks.

    ``omega_new`` averages raw newest-task accuracy; the others are normalized
    by ``a_ideal``. ``omega_base`` and ``omega_all`` come out NaN for logs
    read back from CSV, which does not carry those accuracies.
    """
    if a_ideal is None:
        a_ideal = log.meta.get("a_ideal")
    if a_ideal is None or a_ideal <= 0:
        raise ContractError(f"a_ideal must be a positive accuracy, got {a_ideal}")
    ends = {t: r for t, r in log.end_of_task().items() if t >= 1}
    if n_tasks is None:
        n_tasks = log.meta.get("n_tasks", (max(ends) + 1) if ends else 0)
    expected = list(range(1, n_tasks))
    gaps = [t for t in expected if t not in ends]
    if not expected or gaps:
        raise ContractError(f"missing end-of-task evaluations for tasks {gaps or 'all'}")
    rows = [ends[t] for t in expected]

    def mean_or_nan(vals):
        if any(v is None for v in vals):
            return float("nan")
        return float(np.mean(vals))

    return OmegaReport(
        omega_base=mean_or_nan([r.a_base for r in rows]) / a_ideal,
        omega_new=float(np.mean([r.a_new for r in rows])),
        omega_all=mean_or_nan([r.a_all for r in rows]) / a_ideal,
        omega_prev=float(np.mean([r.a_prev for r in rows])) / a_ideal,
        a_ideal=float(a_ideal),
    )


def _double_centered(v: np.ndarray) -> np.ndarray:
    d = np.abs(v[:, None] - v[None, :])
    return d - d.mean(axis=0, keepdims=True) - d.mean(axis=1, keepdims=True) + d.mean()


def _unit_spread(v: np.ndarray) -> Optional[np.ndarray]:
    centered = v - np.median(v)
    scale = np.max(np.abs(centered))
    if scale == 0.0:
        return None
    return centered / scale


def distance_correlation(x: Sequence[float], y: Sequence[float]) -> float:
    """Sample distance correlation (V-statistic form); 0 when either series is constant."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.size != y.size:
        raise ContractError(f"series lengths differ: {x.size} vs {y.size}")
    if x.size < 2:
        raise ContractError("distance correlation needs at least 2 points")
    # dCor is scale invariant; unit spread keeps the squared terms in range
    x, y = _unit_spread(x), _unit_spread(y)
    if x is None or y is None:
        return 0.0
    a = _double_centered(x)
    b = _double_centered(y)
    dvar_x = np.mean(a * a)
    dvar_y = np.mean(b * b)
    if dvar_x <= 0.0 or dvar_y <= 0.0:
        return 0.0
    dcov2 = max(np.mean(a * b), 0.0)
    return float(min(np.sqrt(dcov2 / np.sqrt(dvar_x * dvar_y)), 1.0))


@dataclass
class CorrelationRow:
    group: float
    method: str
    dataset: str
    dcor: Optional[float]
    n_points: int


def correlation_table(
    logs: Iterable[RunLog], group_by: str, pooled: bool = True
) -> list[CorrelationRow]:
    """dCor(CPCF, a_prev) per (group value, method, dataset).

    Pooled mode concatenates the incremental-epoch series of every run in a
    group (ordered by seed); otherwise the per-run values are averaged.
    """
    if group_by not in ("calib_ratio", "alpha"):
        raise ContractError(f"group_by must be 'calib_ratio' or 'alpha', got {group_by!r}")
    groups: dict[tuple, list[RunLog]] = defaultdict(list)
    for log in logs:
        recs = log.incremental()
        if not recs:
            continue
        r0 = recs[0]
        groups[(getattr(r0, group_by), r0.method, r0.dataset)].append(log)
    rows = []
    for (g, method, dataset), members in sorted(groups.items(), key=lambda kv: (kv[0][0], _method_key(kv[0][1]), kv[0][2])):
        members = sorted(members, key=lambda lg: (lg.records[0].seed, lg.records[0].run_id))
        series = [(lg.series("cpcf"), lg.series("a_prev")) for lg in members]
        n = sum(len(c) for c, _ in series)
        if pooled:
            c = np.concatenate([c for c, _ in series])
            a = np.concatenate([a for _, a in series])
            value = distance_correlation(c, a) if n >= 2 else None
        else:
            vals = [distance_correlation(c, a) for c, a in series if len(c) >= 2]
            value = float(np.mean(vals)) if vals else None
        rows.append(CorrelationRow(g, method, dataset, value, n))
    return rows


def _method_key(method: str) -> int:
    order = list(METHOD_LABELS)
    return order.index(method) if method in order else len(order)


def table_csv(rows: Sequence[CorrelationRow]) -> str:
    """Pivot rows into ``group,method,mnist,cifar10,fashionmnist,kmnist``.

    Datasets outside the four benchmarks get extra trailing columns.
    """
    extra = sorted({r.dataset for r in rows} - set(TABLE_DATASETS))
    cols = [*TABLE_DATASETS, *extra]
    cells: dict[tuple, dict[str, str]] = defaultdict(dict)
    for r in rows:
        cells[(r.group, r.method)][r.dataset] = INSUFFICIENT if r.dcor is None else f"{r.dcor:.4f}"
    lines = [",".join(["group", "method", *cols])]
    for (g, method) in sorted(cells, key=lambda k: (k[0], _method_key(k[1]))):
        label = METHOD_LABELS.get(method, method)
        lines.append(",".join([f"{g:g}", label, *(cells[(g, method)].get(c, "") for c in cols)]))
    return "\n".join(lines) + "\n"
