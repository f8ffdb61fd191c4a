from .baseline import BaselineModel, baseline_predict, baseline_train, summarize
from .funnel import (FunnelModel, RecurrentFunnelConfig, load_checkpoint, predict_windows,
                     save_checkpoint, train)
from .scores import (ClassifierError, LabelSpace, RowMeta, ScoreMatrix, SessionDecision,
                     aggregate_session, log_softmax, logsumexp)

__all__ = [
    "BaselineModel", "baseline_predict", "baseline_train", "summarize",
    "FunnelModel", "RecurrentFunnelConfig", "load_checkpoint", "predict_windows",
    "save_checkpoint", "train",
    "ClassifierError", "LabelSpace", "RowMeta", "ScoreMatrix", "SessionDecision",
    "aggregate_session", "log_softmax", "logsumexp",
]
