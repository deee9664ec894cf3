"""Adaptive conformal prediction sets and the set-size confidence factor.

Classes are ranked by descending softmax probability with ties going to the
lower class index. A calibration point's score is the cumulative probability
mass down to and including its true label; the threshold is the finite-sample
corrected quantile of those scores; a prediction set is the shortest
descending prefix whose mass reaches the threshold.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import LabeledSet
from .errors import ContractError
from .mlp import MlpModel, predict_proba


def _rank_order(probs: np.ndarray) -> np.ndarray:
    # stable sort on the negated values keeps lower indices first among ties
    return np.argsort(-probs, axis=-1, kind="stable")


def conformal_scores(probs: np.ndarray, labels) -> np.ndarray:
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    if y.size != probs.shape[0]:
        raise ContractError(f"{y.size} labels for {probs.shape[0]} probability rows")
    order = _rank_order(probs)
    sorted_p = np.take_along_axis(probs, order, axis=1)
    cum = np.cumsum(sorted_p, axis=1)
    rank = np.argmax(order == y[:, None], axis=1)
    return cum[np.arange(y.size), rank]


def conformal_score(probs, true_label: int) -> float:
    return float(conformal_scores(np.asarray(probs)[None, :], [true_label])[0])


def quantile_level(n: int, alpha: float) -> float:
    return _order_index(n, alpha) / n


def _order_index(n: int, alpha: float) -> int:
    # ceil((n+1)(1-alpha)); rounding first keeps e.g. 10 * 0.9 from reading as 9.000000000000002
    return math.ceil(round((n + 1) * (1.0 - alpha), 9))


def fit_quantile(scores, alpha: float) -> float:
    """Adjusted empirical quantile of the calibration scores.

    Returns 1.0 (full sets) when the corrected level exceeds 1, which happens
    for calibration sets smaller than about 1/alpha.
    """
    s = np.sort(np.asarray(scores, dtype=np.float64).reshape(-1))
    n = s.size
    if n == 0:
        raise ContractError("fit_quantile needs at least one score")
    if not 0.0 < alpha < 1.0:
        raise ContractError(f"alpha must lie in (0, 1), got {alpha}")
    k = _order_index(n, alpha)
    if k > n:
        return 1.0
    return float(s[max(k, 1) - 1])


@dataclass
class PredictionSet:
    classes: tuple[int, ...]

    @property
    def size(self) -> int:
        return len(self.classes)


def set_sizes(probs: np.ndarray, q_alpha: float) -> np.ndarray:
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    cum = np.cumsum(-np.sort(-probs, axis=1), axis=1)
    # cum is non-decreasing, so the shortest prefix has one more than the count below q
    k = 1 + np.sum(cum < q_alpha, axis=1)
    return np.minimum(k, probs.shape[1])


def prediction_set(probs, q_alpha: float) -> PredictionSet:
    probs = np.asarray(probs, dtype=np.float64)
    k = int(set_sizes(probs[None, :], q_alpha)[0])
    top = _rank_order(probs)[:k]
    return PredictionSet(tuple(sorted(int(c) for c in top)))


def covered(probs: np.ndarray, labels, q_alpha: float) -> np.ndarray:
    """Boolean mask: true label falls inside the prediction set."""
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    order = _rank_order(probs)
    rank = np.argmax(order == y[:, None], axis=1)
    return rank < set_sizes(probs, q_alpha)


@dataclass
class ConformalCalibrator:
    alpha: float
    scores: np.ndarray = field(default_factory=lambda: np.empty(0))

    def fit(self, probs: np.ndarray, labels) -> "ConformalCalibrator":
        self.scores = conformal_scores(probs, labels)
        return self

    @property
    def q_alpha(self) -> float:
        return fit_quantile(self.scores, self.alpha)


def cpcf(
    model: MlpModel, calib_pool: LabeledSet, test_pool: LabeledSet, alpha: float
) -> tuple[float, float]:
    """Mean prediction-set size on ``test_pool`` with the threshold fit on ``calib_pool``.

    Returns ``(cpcf, q_alpha)``.
    """
    if len(calib_pool) == 0 or len(test_pool) == 0:
        raise ContractError("cpcf needs non-empty calibration and test pools")
    cal = ConformalCalibrator(alpha).fit(predict_proba(model, calib_pool.x), calib_pool.y)
    q = cal.q_alpha
    sizes = set_sizes(predict_proba(model, test_pool.x), q)
    return float(np.mean(sizes)), q


def coverage_audit(model: MlpModel, eval_set: LabeledSet, q_alpha: float) -> float:
    if len(eval_set) == 0:
        raise ContractError("coverage_audit on an empty set")
    return float(np.mean(covered(predict_proba(model, eval_set.x), eval_set.y, q_alpha)))
