"""Identification metrics: accuracy, ranks, Hand-Till multiclass AUC, N-class accuracy,
and the logit-scale delay regression."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from .classifier.scores import ScoreMatrix


class MetricError(ValueError):
    pass


def _unpack(scores, labels):
    if isinstance(scores, ScoreMatrix):
        S = scores.scores
        if labels is None:
            labels = scores.true_indices()
    else:
        S = np.asarray(scores, dtype=float)
    if labels is None:
        raise MetricError("labels are required for a raw score array")
    y = np.asarray(labels, dtype=int)
    if S.ndim != 2 or len(S) != len(y):
        raise MetricError(f"scores {S.shape} and labels {y.shape} disagree")
    return S, y


def pairwise_auc(S: np.ndarray, y: np.ndarray, i: int, j: int) -> float:
    """Â(i|j): probability a class-i unit outscores a class-j unit on column i (mid-ranks)."""
    mask = (y == i) | (y == j)
    ranks = rankdata(S[mask, i], method="average")
    yi = y[mask] == i
    n_i, n_j = int(yi.sum()), int((~yi).sum())
    return (ranks[yi].sum() - n_i * (n_i + 1) / 2.0) / (n_i * n_j)


def multiclass_auc(scores, labels=None) -> float:
    """Hand & Till's M: mean over unordered present-class pairs of (Â(i|j) + Â(j|i)) / 2."""
    S, y = _unpack(scores, labels)
    present = np.unique(y)
    c = len(present)
    if c < 2:
        raise MetricError("multiclass AUC needs at least two classes present")
    total = 0.0
    for i, j in combinations(present.tolist(), 2):
        total += 0.5 * (pairwise_auc(S, y, i, j) + pairwise_auc(S, y, j, i))
    return 2.0 * total / (c * (c - 1))


@dataclass(frozen=True)
class RankRecord:
    true: int
    rank: int
    n_candidates: int
    tie_size: int = 1  # how many candidates shared the true class's score


def rank_records(scores, labels=None, seed: int = 0) -> List[RankRecord]:
    """Rank of the true column under descending score; exact ties are ordered at random."""
    S, y = _unpack(scores, labels)
    rng = np.random.default_rng(seed)
    out = []
    C = S.shape[1]
    for row, t in zip(S, y):
        s = row[t]
        above = int((row > s).sum())
        tied = int((row == s).sum())
        pos = int(rng.integers(tied)) if tied > 1 else 0
        out.append(RankRecord(int(t), above + pos + 1, C, tied))
    return out


def n_class_accuracy(records: Sequence[RankRecord], n: int) -> float:
    """Expected top-1 accuracy against the true class plus ``n - 1`` random distractors."""
    if not records:
        raise MetricError("no rank records")
    c_min = min(r.n_candidates for r in records)
    if not 2 <= n <= c_min:
        raise MetricError(f"N must be in [2, {c_min}], got {n}")
    acc = 0.0
    for r in records:
        acc += math.comb(r.n_candidates - r.rank, n - 1) / math.comb(r.n_candidates - 1, n - 1)
    return acc / len(records)


def rank1(records: Sequence[RankRecord]) -> float:
    return sum(r.rank == 1 for r in records) / len(records)


def accuracy(scores, labels=None, seed: int = 0) -> float:
    """Fraction of units whose top-scoring candidate is the label (seeded tie-breaking)."""
    S, y = _unpack(scores, labels)
    if len(S) == 0:
        raise MetricError("accuracy of an empty score set")
    return rank1(rank_records(S, y, seed))


def logit(p):
    p = np.asarray(p, dtype=float)
    return np.log(p / (1.0 - p))


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=float)))


@dataclass(frozen=True)
class DelayObservation:
    train_week: int
    test_week: int
    auc: float

    @property
    def delay(self) -> int:
        return abs(self.test_week - self.train_week)


@dataclass
class DelayFit:
    slope: float
    intercepts: Dict[int, float]
    pooled_intercept: float
    residuals: np.ndarray = field(repr=False)

    def predict(self, delay: float, train_week: Optional[int] = None) -> float:
        b0 = self.pooled_intercept if train_week is None else self.intercepts[train_week]
        return float(sigmoid(b0 + self.slope * delay))

    def to_json(self) -> dict:
        return {"slope": self.slope, "pooled_intercept": self.pooled_intercept,
                "intercepts": {str(k): v for k, v in self.intercepts.items()},
                "residuals": self.residuals.tolist()}


def fit_delay_model(obs: Sequence[DelayObservation]) -> DelayFit:
    """OLS of logit(AUC) on delay with one fixed intercept per training week."""
    obs = list(obs)
    aucs = np.array([o.auc for o in obs], dtype=float)
    if len(obs) == 0 or np.any(aucs <= 0) or np.any(aucs >= 1):
        raise MetricError("every AUC must lie strictly inside (0, 1)")
    delays = np.array([o.delay for o in obs], dtype=float)
    if len(np.unique(delays)) < 2:
        raise MetricError("need at least two distinct delays")
    weeks = sorted({o.train_week for o in obs})
    X = np.zeros((len(obs), 1 + len(weeks)))
    X[:, 0] = delays
    col = {w: k + 1 for k, w in enumerate(weeks)}
    for r, o in enumerate(obs):
        X[r, col[o.train_week]] = 1.0
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise MetricError("degenerate design matrix (delay collinear with training week)")
    z = logit(aucs)
    beta, *_ = np.linalg.lstsq(X, z, rcond=None)
    intercepts = {w: float(beta[col[w]]) for w in weeks}
    return DelayFit(float(beta[0]), intercepts, float(np.mean(list(intercepts.values()))),
                    z - X @ beta)


def bootstrap_slope(obs: Sequence[DelayObservation], n_boot: int = 2000, level: float = 0.9,
                    seed: int = 0):
    """Percentile interval for the delay slope, resampling cells with replacement."""
    obs = list(obs)
    rng = np.random.default_rng(seed)
    fit_delay_model(obs)  # fail fast on an unusable design
    slopes = []
    attempts = 0
    while len(slopes) < n_boot:
        attempts += 1
        if attempts > 20 * n_boot:
            raise MetricError("too many degenerate bootstrap resamples")
        sample = [obs[i] for i in rng.integers(0, len(obs), size=len(obs))]
        try:
            slopes.append(fit_delay_model(sample).slope)
        except MetricError:
            continue
    a = (1.0 - level) / 2.0
    lo, hi = np.quantile(slopes, [a, 1.0 - a])
    return float(lo), float(hi)
