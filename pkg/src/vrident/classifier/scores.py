from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np


class ClassifierError(ValueError):
    pass


@dataclass(frozen=True)
class LabelSpace:
    """Ordered participant ids; column ``i`` of every score row belongs to ``ids[i]``."""

    ids: Tuple[str, ...]

    def __post_init__(self):
        ids = tuple(str(i) for i in self.ids)
        if len(set(ids)) != len(ids):
            raise ClassifierError("label space contains duplicates")
        object.__setattr__(self, "ids", ids)

    @classmethod
    def from_labels(cls, labels: Sequence[str]) -> "LabelSpace":
        return cls(tuple(sorted(set(labels))))

    def __len__(self) -> int:
        return len(self.ids)

    def index(self, pid: str) -> int:
        try:
            return self._lookup[pid]
        except KeyError:
            raise ClassifierError(f"{pid!r} not in label space") from None

    def encode(self, labels: Sequence[str]) -> np.ndarray:
        return np.array([self.index(p) for p in labels], dtype=int)

    def one_hot(self, labels: Sequence[str]) -> np.ndarray:
        return np.eye(len(self))[self.encode(labels)]

    @property
    def _lookup(self):
        cache = self.__dict__.get("_cache")
        if cache is None:
            cache = {p: i for i, p in enumerate(self.ids)}
            object.__setattr__(self, "_cache", cache)
        return cache


@dataclass(frozen=True)
class RowMeta:
    participant: str
    session: int
    start_t: float = 0.0


@dataclass
class ScoreMatrix:
    """Per-unit log-probability scores over a label space."""

    scores: np.ndarray
    labels: LabelSpace
    rows: List[RowMeta] = field(default_factory=list)

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=float)
        if self.scores.ndim != 2 or self.scores.shape[1] != len(self.labels):
            raise ClassifierError(
                f"scores shape {self.scores.shape} does not match {len(self.labels)} labels")
        if self.rows and len(self.rows) != len(self.scores):
            raise ClassifierError("row metadata length does not match scores")

    def __len__(self) -> int:
        return len(self.scores)

    def true_indices(self) -> np.ndarray:
        return self.labels.encode([r.participant for r in self.rows])

    def take(self, idx) -> "ScoreMatrix":
        idx = np.asarray(idx, dtype=int)
        return ScoreMatrix(self.scores[idx], self.labels,
                           [self.rows[i] for i in idx] if self.rows else [])

    def reorder(self, labels: LabelSpace) -> "ScoreMatrix":
        cols = [self.labels.index(p) for p in labels.ids]
        return ScoreMatrix(self.scores[:, cols], labels, list(self.rows))

    @classmethod
    def concat(cls, parts: Sequence["ScoreMatrix"]) -> "ScoreMatrix":
        labels = parts[0].labels
        return cls(np.concatenate([p.scores for p in parts]), labels,
                   [r for p in parts for r in p.rows])


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    m = z.max(axis=-1, keepdims=True)
    return z - m - np.log(np.exp(z - m).sum(axis=-1, keepdims=True))


def logsumexp(z: np.ndarray, axis: int = -1) -> np.ndarray:
    m = z.max(axis=axis, keepdims=True)
    return (m + np.log(np.exp(z - m).sum(axis=axis, keepdims=True))).squeeze(axis)


@dataclass(frozen=True)
class SessionDecision:
    index: int
    row: np.ndarray
    tied: Tuple[int, ...]
    participant: Optional[str] = None

    @property
    def tie(self) -> bool:
        return len(self.tied) > 1


def _pick(row: np.ndarray, rng: np.random.Generator) -> Tuple[int, Tuple[int, ...]]:
    best = np.flatnonzero(row == row.max())
    if len(best) == 1:
        return int(best[0]), (int(best[0]),)
    return int(rng.choice(best)), tuple(int(b) for b in best)


def aggregate_session(scores, mode: str = "logsum", seed: int = 0) -> SessionDecision:
    """Combine window rows of one unit into a single prediction.

    ``logsum`` sums log probabilities per column; ``vote`` counts per-window
    argmaxes. Ties (in the summed row, the vote counts, or a window's own
    argmax) are broken uniformly at random from ``seed`` and reported in
    ``tied``.
    """
    labels = scores.labels if isinstance(scores, ScoreMatrix) else None
    S = scores.scores if isinstance(scores, ScoreMatrix) else np.asarray(scores, dtype=float)
    S = np.atleast_2d(S)
    if S.shape[0] == 0:
        raise ClassifierError("cannot aggregate an empty set of windows")
    rng = np.random.default_rng(seed)
    if mode == "logsum":
        row = S.sum(axis=0)
    elif mode == "vote":
        row = np.zeros(S.shape[1])
        for r in S:
            row[_pick(r, rng)[0]] += 1
    else:
        raise ClassifierError(f"unknown aggregation mode {mode!r}")
    idx, tied = _pick(row, rng)
    return SessionDecision(idx, row, tied, labels.ids[idx] if labels is not None else None)
