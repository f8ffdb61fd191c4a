"""Nearest-centroid baseline over 72-dim window summaries (channel means and stds)."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .scores import ClassifierError, LabelSpace, RowMeta, ScoreMatrix, log_softmax


def summarize(windows: Sequence, chunk: int = 256) -> np.ndarray:
    """(n, 72) array of per-window channel means followed by channel stds."""
    out = []
    for i in range(0, len(windows), chunk):
        X = np.stack([np.asarray(getattr(w, "data", w)) for w in windows[i:i + chunk]])
        # float64 accumulation without materializing a float64 copy
        m = X.mean(axis=1, dtype=np.float64)
        m2 = np.einsum("btc,btc->bc", X, X, dtype=np.float64) / X.shape[1]
        out.append(np.concatenate([m, np.sqrt(np.maximum(m2 - m * m, 0.0))], axis=1))
    return np.concatenate(out) if out else np.empty((0, 0))


@dataclass
class BaselineModel:
    labels: LabelSpace
    centroids: np.ndarray  # (C, 72)
    scale: np.ndarray      # (72,) per-dimension spread of training summaries
    temperature: float = 1.0

    def scores_from_summaries(self, S: np.ndarray) -> np.ndarray:
        Z = S / self.scale
        C = self.centroids / self.scale
        d2 = (Z * Z).sum(1)[:, None] - 2.0 * Z @ C.T + (C * C).sum(1)[None, :]
        d = np.sqrt(np.maximum(d2, 0.0))
        return log_softmax(-d / self.temperature)

    def save(self, path) -> Path:
        path = Path(path)
        header = {"kind": "baseline", "layout": 1, "labels": list(self.labels.ids),
                  "temperature": self.temperature, "dims": int(self.centroids.shape[1])}
        with open(path, "wb") as fh:
            fh.write((json.dumps(header) + "\n").encode("utf-8"))
            fh.write(np.ascontiguousarray(self.centroids, dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(self.scale, dtype="<f4").tobytes())
        return path

    @classmethod
    def load(cls, path) -> "BaselineModel":
        with open(path, "rb") as fh:
            header = json.loads(fh.readline().decode("utf-8"))
            raw = np.frombuffer(fh.read(), dtype="<f4").astype(np.float64)
        k, d = len(header["labels"]), header["dims"]
        return cls(LabelSpace(tuple(header["labels"])), raw[:k * d].reshape(k, d),
                   raw[k * d:], header["temperature"])


def baseline_train(windows: Sequence, labels: Optional[Sequence[str]] = None,
                   temperature: float = 1.0) -> BaselineModel:
    if labels is None:
        labels = [w.participant_id for w in windows]
    if len(labels) != len(windows):
        raise ClassifierError("need one label per window")
    space = LabelSpace.from_labels(labels)
    if len(space) < 2:
        raise ClassifierError("training needs at least two classes")
    S = summarize(windows)
    y = space.encode(labels)
    centroids = np.stack([S[y == k].mean(axis=0) for k in range(len(space))])
    scale = S.std(axis=0)
    scale[scale < 1e-12] = 1.0
    return BaselineModel(space, centroids, scale, temperature)


def baseline_predict(model: BaselineModel, windows: Sequence) -> ScoreMatrix:
    rows = [RowMeta(getattr(w, "participant_id", ""), getattr(w, "session_index", 0),
                    getattr(w, "start_t", 0.0)) for w in windows]
    if not windows:
        return ScoreMatrix(np.empty((0, len(model.labels))), model.labels, rows)
    S = summarize(windows)
    if S.shape[1] != model.centroids.shape[1]:
        raise ClassifierError(f"window summaries have {S.shape[1]} dims, model expects "
                              f"{model.centroids.shape[1]}")
    return ScoreMatrix(model.scores_from_summaries(S), model.labels, rows)
