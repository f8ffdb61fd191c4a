"""Stacked-LSTM "funnel" sequence classifier in plain numpy.

Layers narrow (e.g. 256 -> 128 -> 64); every layer but the last feeds its
full hidden sequence upward, the last layer's final hidden state goes
through a dense softmax head. Gradients are hand-derived backpropagation
through time; optimization is Adam.

Parameter order (also the checkpoint block order): for each layer
``Wx (in, 4h)``, ``Wh (h, 4h)``, ``b (4h,)`` with gate blocks ordered
input, forget, cell, output; then ``Wd (h_last, C)``, ``bd (C,)``.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .scores import ClassifierError, LabelSpace, RowMeta, ScoreMatrix, log_softmax

log = logging.getLogger(__name__)

CHECKPOINT_LAYOUT = 1


@dataclass
class RecurrentFunnelConfig:
    widths: Tuple[int, ...] = (256, 128, 64)
    learning_rate: float = 0.001
    batch_size: int = 64
    max_epochs: int = 100
    patience: int = 10
    validation_fraction: float = 0.1
    seed: int = 0
    dtype: str = "float32"
    trainable: str = "all"  # "all" | "head"
    optimizer: str = "adam"  # "adam" | "sgd"
    clip_norm: Optional[float] = None

    def __post_init__(self):
        self.widths = tuple(int(w) for w in self.widths)
        if not self.widths or any(w <= 0 for w in self.widths):
            raise ClassifierError("widths must be positive")
        if any(b >= a for a, b in zip(self.widths, self.widths[1:])):
            raise ClassifierError(f"funnel widths must strictly decrease, got {self.widths}")
        if self.learning_rate <= 0:
            raise ClassifierError("learning rate must be positive")
        if self.trainable not in ("all", "head") or self.optimizer not in ("adam", "sgd"):
            raise ClassifierError("unknown trainable/optimizer setting")


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def init_params(n_in: int, n_classes: int, widths: Sequence[int], seed: int,
                dtype="float64") -> Dict[str, np.ndarray]:
    """Glorot-uniform input kernels, orthogonal recurrent kernels, forget bias 1."""
    rng = np.random.default_rng([int(seed), 7])
    params = {}
    fan_in = n_in
    for l, h in enumerate(widths):
        lim = math.sqrt(6.0 / (fan_in + 4 * h))
        params[f"Wx{l}"] = rng.uniform(-lim, lim, size=(fan_in, 4 * h))
        q, r = np.linalg.qr(rng.normal(size=(4 * h, h)))
        params[f"Wh{l}"] = (q * np.sign(np.diag(r))).T
        b = np.zeros(4 * h)
        b[h:2 * h] = 1.0
        params[f"b{l}"] = b
        fan_in = h
    lim = math.sqrt(6.0 / (fan_in + n_classes))
    params["Wd"] = rng.uniform(-lim, lim, size=(fan_in, n_classes))
    params["bd"] = np.zeros(n_classes)
    return {k: v.astype(dtype) for k, v in params.items()}


def param_names(n_layers: int) -> List[str]:
    return [f"{p}{l}" for l in range(n_layers) for p in ("Wx", "Wh", "b")] + ["Wd", "bd"]


def _lstm_forward(X, Wx, Wh, b, keep: bool):
    """X is time-major (T, B, in). Returns hidden sequence (T, B, h) and a cache."""
    T, B, _ = X.shape
    H = Wh.shape[0]
    Z = (X.reshape(T * B, -1) @ Wx).reshape(T, B, 4 * H) + b
    Hs = np.empty((T, B, H), dtype=X.dtype)
    if keep:
        G = np.empty((T, B, 4 * H), dtype=X.dtype)
        Cs = np.empty((T, B, H), dtype=X.dtype)
        TC = np.empty((T, B, H), dtype=X.dtype)
    h = np.zeros((B, H), dtype=X.dtype)
    c = np.zeros((B, H), dtype=X.dtype)
    for t in range(T):
        z = Z[t] + h @ Wh
        g = np.empty_like(z)
        g[:, :2 * H] = _sigmoid(z[:, :2 * H])
        g[:, 2 * H:3 * H] = np.tanh(z[:, 2 * H:3 * H])
        g[:, 3 * H:] = _sigmoid(z[:, 3 * H:])
        c = g[:, H:2 * H] * c + g[:, :H] * g[:, 2 * H:3 * H]
        tc = np.tanh(c)
        h = g[:, 3 * H:] * tc
        Hs[t] = h
        if keep:
            G[t], Cs[t], TC[t] = g, c, tc
    cache = (X, G, Cs, TC, Hs) if keep else None
    return Hs, cache


def _lstm_backward(dHs, cache, Wx, Wh, need_dx: bool):
    """Backprop through one layer. ``dHs`` (T, B, h) is the loss gradient wrt each h_t."""
    X, G, Cs, TC, Hs = cache
    T, B, H = Hs.shape
    dZ = np.empty((T, B, 4 * H), dtype=X.dtype)
    dWh = np.zeros_like(Wh)
    dh_next = np.zeros((B, H), dtype=X.dtype)
    dc_next = np.zeros((B, H), dtype=X.dtype)
    zero = np.zeros((B, H), dtype=X.dtype)
    for t in range(T - 1, -1, -1):
        g = G[t]
        i, f, gg, o = g[:, :H], g[:, H:2 * H], g[:, 2 * H:3 * H], g[:, 3 * H:]
        dh = dHs[t] + dh_next
        tc = TC[t]
        dc = dh * o * (1.0 - tc * tc) + dc_next
        c_prev = Cs[t - 1] if t > 0 else zero
        dz = dZ[t]
        dz[:, :H] = dc * gg * i * (1.0 - i)
        dz[:, H:2 * H] = dc * c_prev * f * (1.0 - f)
        dz[:, 2 * H:3 * H] = dc * i * (1.0 - gg * gg)
        dz[:, 3 * H:] = dh * tc * o * (1.0 - o)
        if t > 0:
            dWh += Hs[t - 1].T @ dz
        dh_next = dz @ Wh.T
        dc_next = dc * f
    flat = dZ.reshape(T * B, -1)
    dWx = X.reshape(T * B, -1).T @ flat
    db = flat.sum(axis=0)
    dX = (flat @ Wx.T).reshape(X.shape) if need_dx else None
    return dWx, dWh, db, dX


def forward_logits(params, X, n_layers: int, keep: bool = False):
    """``X`` is batch-major (B, T, in); returns logits (B, C) and caches."""
    seq = np.ascontiguousarray(np.swapaxes(X, 0, 1))
    caches = []
    for l in range(n_layers):
        seq, cache = _lstm_forward(seq, params[f"Wx{l}"], params[f"Wh{l}"], params[f"b{l}"], keep)
        caches.append(cache)
    last = seq[-1]
    logits = last @ params["Wd"] + params["bd"]
    return logits, (caches, last)


def loss_and_grads(params, X, y, n_layers: int, head_only: bool = False):
    """Mean cross-entropy over the batch and its gradient wrt every parameter."""
    logits, (caches, last) = forward_logits(params, X, n_layers, keep=not head_only)
    B = len(y)
    lp = log_softmax(logits.astype(np.float64))
    loss = -float(lp[np.arange(B), y].mean())
    dlog = np.exp(lp)
    dlog[np.arange(B), y] -= 1.0
    dlog = (dlog / B).astype(X.dtype)
    grads = {"Wd": last.T @ dlog, "bd": dlog.sum(axis=0)}
    if head_only:
        return loss, grads
    T = X.shape[1]
    dlast = dlog @ params["Wd"].T
    dHs = np.zeros((T, B, dlast.shape[1]), dtype=X.dtype)
    dHs[-1] = dlast
    for l in range(n_layers - 1, -1, -1):
        dWx, dWh, db, dX = _lstm_backward(dHs, caches[l], params[f"Wx{l}"], params[f"Wh{l}"],
                                          need_dx=l > 0)
        grads[f"Wx{l}"], grads[f"Wh{l}"], grads[f"b{l}"] = dWx, dWh, db
        dHs = dX
    return loss, grads


class Adam:
    def __init__(self, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-7):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        lr_t = self.lr * math.sqrt(1 - b2 ** self.t) / (1 - b1 ** self.t)
        for k, g in grads.items():
            m = self.m.setdefault(k, np.zeros_like(g))
            v = self.v.setdefault(k, np.zeros_like(g))
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            params[k] -= (lr_t * m / (np.sqrt(v) + self.eps)).astype(params[k].dtype)


class SGD:
    def __init__(self, lr=0.001):
        self.lr = lr

    def step(self, params, grads):
        for k, g in grads.items():
            params[k] -= (self.lr * g).astype(params[k].dtype)


@dataclass
class FunnelModel:
    config: RecurrentFunnelConfig
    labels: LabelSpace
    params: Dict[str, np.ndarray]
    mean: np.ndarray
    scale: np.ndarray
    history: List[dict] = field(default_factory=list)

    @property
    def n_layers(self) -> int:
        return len(self.config.widths)

    @property
    def n_channels(self) -> int:
        return self.params["Wx0"].shape[0]

    def normalize(self, X) -> np.ndarray:
        return ((np.asarray(X, dtype=np.float64) - self.mean) / self.scale).astype(self.config.dtype)

    def log_proba(self, X, batch_size: int = 256) -> np.ndarray:
        X = np.asarray(X)
        out = []
        for i in range(0, len(X), batch_size):
            logits, _ = forward_logits(self.params, self.normalize(X[i:i + batch_size]),
                                       self.n_layers)
            out.append(log_softmax(logits.astype(np.float64)))
        return np.concatenate(out) if out else np.empty((0, len(self.labels)))

    def save(self, path) -> Path:
        return save_checkpoint(self, path)


def _stack(windows, idx) -> np.ndarray:
    return np.stack([np.asarray(windows[i].data if hasattr(windows[i], "data") else windows[i])
                     for i in idx])


def _check_windows(windows, n_channels: Optional[int] = None, frames: Optional[int] = None):
    shapes = {np.shape(getattr(w, "data", w)) for w in windows}
    if len(shapes) != 1:
        raise ClassifierError(f"windows have inconsistent shapes: {sorted(shapes)}")
    (shape,) = shapes
    if len(shape) != 2 or (n_channels is not None and shape[1] != n_channels) or \
            (frames is not None and shape[0] != frames):
        raise ClassifierError(f"window shape {shape} does not match the model")
    return shape


def train(windows: Sequence, cfg: Optional[RecurrentFunnelConfig] = None,
          labels: Optional[Sequence[str]] = None, window_frames: Optional[int] = None) -> FunnelModel:
    """Fit a funnel classifier to labeled windows.

    ``windows`` are FeatureWindows (labels taken from ``participant_id``) or
    raw (frames, channels) arrays with ``labels`` given. Deterministic for a
    fixed ``cfg.seed``. Training stops at ``max_epochs`` or when validation
    loss has not improved for ``patience`` epochs; the best parameters are
    kept.
    """
    cfg = cfg or RecurrentFunnelConfig()
    if labels is None:
        labels = [w.participant_id for w in windows]
    if len(labels) != len(windows) or not windows:
        raise ClassifierError("need one label per window and at least one window")
    space = LabelSpace.from_labels(labels)
    if len(space) < 2:
        raise ClassifierError("training needs at least two classes")
    frames, n_ch = _check_windows(windows, frames=window_frames)
    y_all = space.encode(labels)

    rng = np.random.default_rng([cfg.seed, 11])
    order = rng.permutation(len(windows))
    n_val = int(round(cfg.validation_fraction * len(windows))) if len(windows) >= 20 else 0
    val_idx, tr_idx = order[:n_val], order[n_val:]

    # channel standardization from training windows
    s1 = np.zeros(n_ch)
    s2 = np.zeros(n_ch)
    for i in tr_idx:
        d = np.asarray(getattr(windows[i], "data", windows[i]), dtype=np.float64)
        s1 += d.sum(axis=0)
        s2 += (d * d).sum(axis=0)
    cnt = len(tr_idx) * frames
    mean = s1 / cnt
    scale = np.sqrt(np.maximum(s2 / cnt - mean ** 2, 0.0))
    scale[scale < 1e-8] = 1.0

    params = init_params(n_ch, len(space), cfg.widths, cfg.seed, cfg.dtype)
    model = FunnelModel(cfg, space, params, mean, scale)
    head_only = cfg.trainable == "head"
    opt = Adam(cfg.learning_rate) if cfg.optimizer == "adam" else SGD(cfg.learning_rate)

    def evaluate(idx):
        if len(idx) == 0:
            return float("nan"), float("nan")
        lp = model.log_proba(_stack(windows, idx))
        yy = y_all[idx]
        return float(-lp[np.arange(len(idx)), yy].mean()), float((lp.argmax(1) == yy).mean())

    best = (math.inf, None)
    stale = 0
    for epoch in range(cfg.max_epochs):
        perm = tr_idx[rng.permutation(len(tr_idx))]
        losses = []
        for bi, start in enumerate(range(0, len(perm), cfg.batch_size)):
            idx = perm[start:start + cfg.batch_size]
            X = model.normalize(_stack(windows, idx))
            loss, grads = loss_and_grads(params, X, y_all[idx], model.n_layers, head_only)
            if not math.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise ClassifierError(f"non-finite loss at epoch {epoch + 1}, batch {bi + 1}")
            if cfg.clip_norm is not None:
                norm = math.sqrt(sum(float((g.astype(np.float64) ** 2).sum())
                                     for g in grads.values()))
                if norm > cfg.clip_norm:
                    grads = {k: g * (cfg.clip_norm / norm) for k, g in grads.items()}
            opt.step(params, grads)
            losses.append(loss)
        val_loss, val_acc = evaluate(val_idx)
        rec = {"epoch": epoch + 1, "loss": float(np.mean(losses)), "val_loss": val_loss,
               "val_accuracy": val_acc}
        model.history.append(rec)
        log.debug("epoch %(epoch)d loss %(loss).4f val_loss %(val_loss).4f", rec)
        monitor = val_loss if n_val else rec["loss"]
        if monitor < best[0] - 1e-9:
            best = (monitor, {k: v.copy() for k, v in params.items()})
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    if best[1] is not None:
        params.update(best[1])
    return model


def predict_windows(model: FunnelModel, windows: Sequence, batch_size: int = 256) -> ScoreMatrix:
    if not len(model.labels):
        raise ClassifierError("model has an empty label space")
    if not windows:
        return ScoreMatrix(np.empty((0, len(model.labels))), model.labels, [])
    _check_windows(windows, n_channels=model.n_channels)
    out = []
    for i in range(0, len(windows), batch_size):
        out.append(model.log_proba(_stack(windows, range(i, min(i + batch_size, len(windows))))))
    rows = [RowMeta(getattr(w, "participant_id", ""), getattr(w, "session_index", 0),
                    getattr(w, "start_t", 0.0)) for w in windows]
    return ScoreMatrix(np.concatenate(out), model.labels, rows)


def save_checkpoint(model: FunnelModel, path) -> Path:
    """Header JSON line, then little-endian float32 blocks in :func:`param_names` order,
    then the input mean and scale."""
    names = param_names(model.n_layers)
    blocks = [(n, model.params[n]) for n in names] + [("mean", model.mean), ("scale", model.scale)]
    header = {"kind": "funnel", "layout": CHECKPOINT_LAYOUT, "config": asdict(model.config),
              "labels": list(model.labels.ids),
              "blocks": [{"name": n, "shape": list(a.shape)} for n, a in blocks]}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write((json.dumps(header) + "\n").encode("utf-8"))
        for _, a in blocks:
            fh.write(np.ascontiguousarray(a, dtype="<f4").tobytes())
    return path


def load_checkpoint(path) -> FunnelModel:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        raw = np.frombuffer(fh.read(), dtype="<f4")
    if header.get("kind") != "funnel" or header.get("layout") != CHECKPOINT_LAYOUT:
        raise ClassifierError(f"{path}: not a funnel checkpoint of layout {CHECKPOINT_LAYOUT}")
    cfg = RecurrentFunnelConfig(**header["config"])
    arrays, off = {}, 0
    for b in header["blocks"]:
        n = int(np.prod(b["shape"])) if b["shape"] else 1
        arrays[b["name"]] = raw[off:off + n].reshape(b["shape"]).astype(np.float64)
        off += n
    mean, scale = arrays.pop("mean"), arrays.pop("scale")
    params = {k: v.astype(cfg.dtype) for k, v in arrays.items()}
    return FunnelModel(cfg, LabelSpace(tuple(header["labels"])), params, mean, scale)
