"""Class-incremental curriculum with optional elastic weight consolidation."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .conformal import cpcf
from .core_math import Optimizer, Params, softmax_rows, spawn_rngs
from .data import DEFAULT_LAYOUT, LabeledSet, TaskStream, build_task_stream
from .errors import ContractError, NumericalAbort
from .metrics import RunLog, RunRecord
from .mlp import HIDDEN, N_CLASSES, PARAM_NAMES, MlpModel, accuracy, forward, init_model, train_epoch

METHODS = ("plain", "ewc_single", "ewc_multi")

# child stream indices of a run seed
SPLIT, INIT, SHUFFLE, FISHER, OFFLINE = range(5)


@dataclass
class CurriculumConfig:
    base_epochs: int = 8
    incr_epochs: int = 3
    lr: float = 2e-5
    lam: float = 2e4
    method: str = "plain"
    alpha: float = 0.1
    calib_ratio: float = 0.1
    seed: int = 0
    batch_size: int = 16
    optimizer: str = "adam"
    fisher_samples: int = 2000
    a_ideal_mode: str = "post_base"
    hidden: tuple[int, ...] = HIDDEN
    allow_override: bool = False
    dataset: str = "mnist"
    run_id: str = ""

    def __post_init__(self):
        if self.method not in METHODS:
            raise ContractError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.a_ideal_mode not in ("post_base", "offline"):
            raise ContractError(f"a_ideal_mode must be 'post_base' or 'offline', got {self.a_ideal_mode!r}")
        if not 0.0 < self.alpha < 1.0:
            raise ContractError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.base_epochs < 1 or self.incr_epochs < 1:
            raise ContractError("epoch counts must be >= 1")
        self.hidden = tuple(self.hidden)
        if not self.run_id:
            self.run_id = f"{self.dataset}-{self.method}-s{self.seed}"


def seeded_rngs(seed: int) -> list[np.random.Generator]:
    return spawn_rngs(seed, 5)


def make_stream(
    train: LabeledSet,
    test: LabeledSet,
    calib_ratio: float,
    seed: int,
    layout: Sequence[Sequence[int]] = DEFAULT_LAYOUT,
) -> TaskStream:
    return build_task_stream(train, test, calib_ratio, seeded_rngs(seed)[SPLIT], layout)


# -- EWC --------------------------------------------------------------------


@dataclass(frozen=True)
class EwcAnchor:
    theta_star: Params
    fisher_diag: Params
    task_index: int

    @classmethod
    def snapshot(cls, model: MlpModel, fisher_diag: Params, task_index: int) -> "EwcAnchor":
        theta = model.copy_params()
        fisher = {k: v.copy() for k, v in fisher_diag.items()}
        for arr in (*theta.values(), *fisher.values()):
            arr.setflags(write=False)
        return cls(theta, fisher, task_index)


def estimate_fisher(
    model: MlpModel, data: LabeledSet, n_samples: int, rng: np.random.Generator, chunk: int = 500
) -> Params:
    """Empirical diagonal Fisher: mean squared per-sample gradient of log p(y_true | x).

    Per-sample weight gradients are outer products, so their squares sum to
    ``(a*a).T @ (d*d)`` and never need to be materialized one by one.
    """
    if len(data) == 0:
        raise ContractError("estimate_fisher on an empty dataset")
    m = min(n_samples, len(data))
    idx = np.sort(rng.choice(len(data), size=m, replace=False))
    p = model.params
    acc = {k: np.zeros_like(v) for k, v in p.items()}
    for start in range(0, m, chunk):
        sel = idx[start:start + chunk]
        x, y = data.x[sel], data.y[sel]
        logits, c = forward(model, x)
        d3 = softmax_rows(logits)
        d3[np.arange(len(sel)), y] -= 1.0
        d2 = (d3 @ p["W3"].T) * (c.z2 > 0)
        d1 = (d2 @ p["W2"].T) * (c.z1 > 0)
        for name, a, d in (("1", c.x, d1), ("2", c.h1, d2), ("3", c.h2, d3)):
            dd = d * d
            acc["W" + name] += (a * a).T @ dd
            acc["b" + name] += dd.sum(axis=0)
    return {k: v / m for k, v in acc.items()}


def _check_anchor(model: MlpModel, anchor: EwcAnchor) -> None:
    for k in PARAM_NAMES:
        if anchor.theta_star[k].shape != model.params[k].shape or anchor.fisher_diag[k].shape != model.params[k].shape:
            raise ContractError(
                f"anchor {anchor.task_index} {k}: shape {anchor.theta_star[k].shape} vs model {model.params[k].shape}"
            )


def ewc_penalty_single(model: MlpModel, anchor: EwcAnchor, lam: float) -> tuple[float, Params]:
    """``lam/2 * sum F (theta - theta*)^2`` and its gradient ``lam * F * (theta - theta*)``."""
    _check_anchor(model, anchor)
    penalty = 0.0
    grads = {}
    for k in PARAM_NAMES:
        diff = model.params[k] - anchor.theta_star[k]
        fd = anchor.fisher_diag[k] * diff
        penalty += float(np.sum(fd * diff))
        grads[k] = lam * fd
    return 0.5 * lam * penalty, grads


def multi_weights(lam: float, current_task: int, anchor_tasks: Sequence[int]) -> list[float]:
    # more recent anchors weigh more: lam_j = lam / 2**(t - j - 1)
    return [lam / 2.0 ** (current_task - j - 1) for j in anchor_tasks]


def ewc_penalty_multi(
    model: MlpModel, anchors: Sequence[EwcAnchor], lam: float, current_task: int
) -> tuple[float, Params]:
    """One quadratic term per previous task ``1 .. current_task-1``."""
    by_task = {a.task_index: a for a in anchors}
    missing = [j for j in range(1, current_task) if j not in by_task]
    if missing:
        raise ContractError(f"no EWC anchor for tasks {missing} (training task {current_task})")
    tasks = list(range(1, current_task))
    total = 0.0
    grads = {k: np.zeros_like(v) for k, v in model.params.items()}
    for j, lam_j in zip(tasks, multi_weights(lam, current_task, tasks)):
        pen, g = ewc_penalty_single(model, by_task[j], lam_j)
        total += pen
        for k in grads:
            grads[k] += g[k]
    return total, grads


# -- curriculum -------------------------------------------------------------


@dataclass
class _Evaluator:
    stream: TaskStream
    pooled_tests: list[LabeledSet] = field(default_factory=list)

    def __post_init__(self):
        self.pooled_tests = [self.stream.pooled("test", j + 1) for j in range(len(self.stream))]

    def task_acc(self, model: MlpModel, j: int) -> float:
        t = self.stream[j].test
        return accuracy(model, t.x, t.y)


def run_curriculum(
    config: CurriculumConfig,
    stream: TaskStream,
    hooks: Optional[Callable[[RunRecord], None]] = None,
) -> RunLog:
    """Train the base task, then each incremental task, evaluating after every incremental epoch.

    Each incremental evaluation records accuracy on the newest task, mean
    accuracy over earlier tasks, and the conformal set-size factor computed
    from the pooled calibration/test data of earlier tasks.
    """
    if len(stream) < 2:
        raise ContractError("a curriculum needs a base task and at least one incremental task")
    rngs = seeded_rngs(config.seed)
    input_dim = stream[0].train.dim
    model = init_model(input_dim, rngs[INIT], config.hidden, config.allow_override)
    model.optimizer = Optimizer(config.lr, config.optimizer)
    ev = _Evaluator(stream)

    log = RunLog(meta=_meta(config, input_dim, stream, model.overridden))

    def emit(rec: RunRecord) -> None:
        log.append(rec)
        if hooks is not None:
            hooks(rec)

    def record(j: int, epoch: int, loss: float) -> RunRecord:
        log.meta.setdefault("epoch_hashes", []).append(model.param_hash())
        accs = [ev.task_acc(model, i) for i in range(j + 1)]
        union = ev.pooled_tests[j]
        rec = RunRecord(
            run_id=config.run_id, seed=config.seed, dataset=config.dataset, method=config.method,
            task_index=j, epoch=epoch, a_prev=None, a_new=accs[j], cpcf=None, q_alpha=None,
            alpha=config.alpha, calib_ratio=config.calib_ratio, lr=config.lr, lam=config.lam,
            a_base=accs[0], a_all=accuracy(model, union.x, union.y), loss=loss,
        )
        if j >= 1:
            rec.a_prev = float(np.mean(accs[:j]))
            rec.cpcf, rec.q_alpha = cpcf(model, stream.pooled("calib", j), ev.pooled_tests[j - 1], config.alpha)
        return rec

    anchors: list[EwcAnchor] = []
    try:
        base = stream[0].train
        for _ in range(config.base_epochs):
            loss = train_epoch(model, base.x, base.y, config.batch_size, rngs[SHUFFLE])
        emit(record(0, config.base_epochs, loss))
        log.meta["a_ideal"] = _a_ideal(config, stream, log.records[0].a_new, rngs[OFFLINE])
        if config.method != "plain":
            anchors.append(_anchor(model, stream[0].train, 1, config, rngs[FISHER]))

        for j in range(1, len(stream)):
            penalty = _penalty_fn(config, anchors, current_task=j + 1)
            data = stream[j].train
            for epoch in range(1, config.incr_epochs + 1):
                loss = train_epoch(model, data.x, data.y, config.batch_size, rngs[SHUFFLE], penalty)
                emit(record(j, epoch, loss))
            if config.method != "plain" and j < len(stream) - 1:
                anchor = _anchor(model, data, j + 1, config, rngs[FISHER])
                anchors = [anchor] if config.method == "ewc_single" else anchors + [anchor]
    except NumericalAbort as exc:
        log.meta["abort"] = str(exc)
        exc.log = log
        raise
    log.meta["final_param_hash"] = model.param_hash()
    return log


def _anchor(model, data, task_index, config, rng) -> EwcAnchor:
    return EwcAnchor.snapshot(model, estimate_fisher(model, data, config.fisher_samples, rng), task_index)


def _penalty_fn(config: CurriculumConfig, anchors: list[EwcAnchor], current_task: int):
    if config.method == "plain":
        return None
    if config.method == "ewc_single":
        anchor = anchors[-1]
        return lambda m: ewc_penalty_single(m, anchor, config.lam)
    frozen = list(anchors)
    return lambda m: ewc_penalty_multi(m, frozen, config.lam, current_task)


def _a_ideal(config: CurriculumConfig, stream: TaskStream, post_base: float, rng) -> float:
    if config.a_ideal_mode == "post_base":
        return post_base
    # offline reference: one model trained jointly on every task's training data
    joint = stream.pooled("train", len(stream))
    ref = init_model(joint.dim, rng, config.hidden, config.allow_override)
    ref.optimizer = Optimizer(config.lr, config.optimizer)
    for _ in range(config.base_epochs):
        train_epoch(ref, joint.x, joint.y, config.batch_size, rng)
    t = stream[0].test
    return accuracy(ref, t.x, t.y)


def _meta(config: CurriculumConfig, input_dim: int, stream: TaskStream, overridden: bool) -> dict:
    meta = {f"config.{k}": v for k, v in dataclasses.asdict(config).items()}
    meta.update(
        input_dim=input_dim,
        n_tasks=len(stream),
        n_classes=N_CLASSES,
        split_hash=stream.split_hash(),
        architecture_override=overridden,
        layout=[list(t.classes) for t in stream.tasks],
    )
    return meta


def lr_sensitivity_sweep(
    config: CurriculumConfig, stream: TaskStream, lr_list: Sequence[float]
) -> dict[float, RunLog]:
    if not lr_list:
        raise ContractError("lr_list is empty")
    out = {}
    for lr in lr_list:
        cfg = dataclasses.replace(config, lr=lr, run_id=f"{config.run_id}-lr{lr:g}")
        out[lr] = run_curriculum(cfg, stream)
    return out
