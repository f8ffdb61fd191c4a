"""Recordings to fixed-rate, body-relative velocity/acceleration windows.

Pipeline per recording: split at tracking-loss gaps, resample every segment
onto a uniform grid (linear for positions, slerp for orientations), express
hands relative to the head with head yaw removed, then finite-difference to
velocity and acceleration. The 18 body-relative channels are ordered

    left_pos(3), left_q(4), right_pos(3), right_q(4), head_q(4)

and a feature frame is ``[velocity(18), acceleration(18)]``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import quat
from .telemetry import GAP_SECONDS, Diagnostic, PoseFrame, Recording, segment_bounds

log = logging.getLogger(__name__)

RATE = 30.0
WINDOW_FRAMES = 900
INFER_STEP = 30
N_CHANNELS = 36
LAYOUT_VERSION = 1

LEFT_POS = slice(0, 3)
LEFT_Q = slice(3, 7)
RIGHT_POS = slice(7, 10)
RIGHT_Q = slice(10, 14)
HEAD_Q = slice(14, 18)
QUAT_SLICES = (LEFT_Q, RIGHT_Q, HEAD_Q)

FORWARD = np.array([0.0, 0.0, -1.0])
SLERP_LINEAR_THRESHOLD = 1.0 - 1e-9
DEGENERATE_FORWARD = 1e-6


def slerp(q0, q1, u) -> np.ndarray:
    """Spherical linear interpolation, vectorized over leading axes.

    ``q1`` is flipped onto ``q0``'s hemisphere first. Nearly parallel pairs
    fall back to normalized linear interpolation.
    """
    q0 = np.asarray(q0, dtype=float)
    q1 = np.asarray(q1, dtype=float)
    u = np.asarray(u, dtype=float)[..., None]
    dot = np.sum(q0 * q1, axis=-1, keepdims=True)
    q1 = np.where(dot < 0, -q1, q1)
    dot = np.abs(dot)
    linear = dot > SLERP_LINEAR_THRESHOLD
    theta = np.arccos(np.where(linear, 0.5, np.clip(dot, -1.0, 1.0)))
    s = np.sin(theta)
    w0 = np.where(linear, 1.0 - u, np.sin((1.0 - u) * theta) / s)
    w1 = np.where(linear, u, np.sin(u * theta) / s)
    out = w0 * q0 + w1 * q1
    return out / np.linalg.norm(out, axis=-1, keepdims=True)


def _resample_segment(rec: Recording, lo: int, hi: int, rate: float):
    t = rec.t[lo:hi]
    n_out = int(np.floor((t[-1] - t[0]) * rate + 1e-9)) + 1
    grid = t[0] + np.arange(n_out) / rate
    grid = np.minimum(grid, t[-1])
    idx = np.clip(np.searchsorted(t, grid, side="right") - 1, 0, len(t) - 2)
    u = np.clip((grid - t[idx]) / (t[idx + 1] - t[idx]), 0.0, 1.0)

    P = rec.positions[lo:hi]
    Q = rec.orientations[lo:hi]
    up = u[:, None, None]
    pos = P[idx] + up * (P[idx + 1] - P[idx])
    ori = slerp(Q[idx], Q[idx + 1], np.broadcast_to(u[:, None], (n_out, 3)))
    return grid, pos, ori


def resample(rec: Recording, rate: float = RATE, gap_seconds: float = GAP_SECONDS,
             diagnostics: Optional[list] = None) -> Recording:
    """Resample each tracking-loss segment onto ``t_first + k / rate``.

    Segments with fewer than two frames are skipped; a diagnostic is appended
    to ``diagnostics`` when given.
    """
    ts, ps, qs = [], [], []
    for lo, hi in segment_bounds(rec.t, gap_seconds):
        if hi - lo < 2:
            msg = f"segment at frame {lo} too short to resample ({hi - lo} frame)"
            log.info(msg)
            if diagnostics is not None:
                diagnostics.append(Diagnostic(lo, "short-segment", msg))
            continue
        g, p, q = _resample_segment(rec, lo, hi, rate)
        ts.append(g)
        ps.append(p)
        qs.append(q)
    if not ts:
        return Recording(rec.participant_id, rec.session_index, np.empty(0),
                         np.empty((0, 3, 3)), np.empty((0, 3, 4)), rate)
    return Recording(rec.participant_id, rec.session_index, np.concatenate(ts),
                     np.concatenate(ps), np.concatenate(qs), rate)


@dataclass(frozen=True)
class BodyRelativeFrame:
    left_pos: np.ndarray
    left_q: np.ndarray
    right_pos: np.ndarray
    right_q: np.ndarray
    head_q: np.ndarray

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.left_pos, self.left_q, self.right_pos,
                               self.right_q, self.head_q])

    @classmethod
    def from_vector(cls, v) -> "BodyRelativeFrame":
        v = np.asarray(v, dtype=float)
        return cls(v[LEFT_POS], v[LEFT_Q], v[RIGHT_POS], v[RIGHT_Q], v[HEAD_Q])


def head_yaw(head_q, prev_yaw: Optional[float] = None) -> np.ndarray:
    """Yaw (about +Y) of the horizontally projected head forward, per frame.

    Frames looking straight up or down reuse the last valid yaw (or
    ``prev_yaw``, or 0 when there is none).
    """
    fwd = quat.rotate(head_q, FORWARD)
    fx, fz = fwd[..., 0], fwd[..., 2]
    yaw = np.arctan2(-fx, -fz)
    bad = np.hypot(fx, fz) < DEGENERATE_FORWARD
    if np.any(bad):
        yaw = np.atleast_1d(yaw).astype(float)
        bad = np.atleast_1d(bad)
        last = 0.0 if prev_yaw is None else float(prev_yaw)
        for i in range(len(yaw)):
            if bad[i]:
                yaw[i] = last
            else:
                last = yaw[i]
    return yaw


def body_relative_arrays(positions, orientations,
                         prev_yaw: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Stream form of :func:`body_relative`: (n,3,3), (n,3,4) -> (n,18), yaw (n,)."""
    positions = np.asarray(positions, dtype=float)
    orientations = np.asarray(orientations, dtype=float)
    yaw = head_yaw(orientations[:, 0], prev_yaw)
    undo = quat.about_y(-yaw)
    rel = positions[:, 1:] - positions[:, :1]
    rel = quat.rotate(undo[:, None, :], rel)
    ori = quat.canonical_sign(quat.multiply(undo[:, None, :], orientations))
    out = np.concatenate([rel[:, 0], ori[:, 1], rel[:, 1], ori[:, 2], ori[:, 0]], axis=1)
    return out, yaw


def body_relative(frame: PoseFrame,
                  prev_yaw: Optional[float] = None) -> Tuple[BodyRelativeFrame, float]:
    """Remove head position and head yaw from one frame; returns the yaw used."""
    P = np.stack([frame.head.position, frame.left.position, frame.right.position])[None]
    Q = np.stack([frame.head.orientation, frame.left.orientation,
                  frame.right.orientation])[None]
    v, yaw = body_relative_arrays(P, Q, prev_yaw)
    return BodyRelativeFrame.from_vector(v[0]), float(yaw[0])


def align_hemispheres(q: np.ndarray) -> np.ndarray:
    """Flip signs along a quaternion stream so consecutive dots are >= 0."""
    q = np.asarray(q, dtype=float)
    if len(q) < 2:
        return q.copy()
    flips = np.sum(q[1:] * q[:-1], axis=-1) < 0
    sign = np.concatenate([[1.0], np.where(np.cumsum(flips) % 2 == 1, -1.0, 1.0)])
    return q * sign[:, None]


def derivatives(frames: Union[np.ndarray, Sequence[BodyRelativeFrame]],
                rate: float = RATE) -> np.ndarray:
    """Velocity and acceleration of a uniform 18-channel stream.

    Returns an (n - 2, 36) array; the first two frames lack history and are
    dropped.
    """
    if not isinstance(frames, np.ndarray):
        frames = np.array([f.as_vector() for f in frames])
    x = np.array(frames, dtype=float)
    if x.ndim != 2 or x.shape[1] != 18:
        raise ValueError(f"expected (n, 18) body-relative frames, got {x.shape}")
    if len(x) < 3:
        raise ValueError(f"need at least 3 frames for derivatives, got {len(x)}")
    for s in QUAT_SLICES:
        x[:, s] = align_hemispheres(x[:, s])
    v = np.diff(x, axis=0) * rate
    a = np.diff(v, axis=0) * rate
    return np.concatenate([v[1:], a], axis=1)


@dataclass(frozen=True, eq=False)
class FeatureStream:
    """Contiguous features for one tracking segment; frame k is at ``start_t + k / rate``."""

    participant_id: str
    session_index: int
    start_t: float
    data: np.ndarray
    rate: float = RATE

    def __len__(self) -> int:
        return len(self.data)

    @property
    def end_t(self) -> float:
        return self.start_t + len(self.data) / self.rate

    def between(self, start_s: float, end_s: float) -> "FeatureStream":
        """Frames whose timestamps fall in ``[start_s, end_s)``."""
        lo = int(np.ceil((start_s - self.start_t) * self.rate - 1e-6))
        hi = int(np.ceil((end_s - self.start_t) * self.rate - 1e-6))
        lo = min(max(lo, 0), len(self.data))
        hi = min(max(hi, lo), len(self.data))
        return FeatureStream(self.participant_id, self.session_index,
                             self.start_t + lo / self.rate, self.data[lo:hi], self.rate)


@dataclass(frozen=True, eq=False)
class FeatureWindow:
    data: np.ndarray
    participant_id: str
    session_index: int
    start_t: float


def preprocess_recording(rec: Recording, rate: float = RATE, gap_seconds: float = GAP_SECONDS,
                         diagnostics: Optional[list] = None) -> List[FeatureStream]:
    """Full pipeline up to continuous feature streams (one per usable segment)."""
    rs = resample(rec, rate, gap_seconds, diagnostics)
    streams = []
    prev_yaw = None
    for lo, hi in segment_bounds(rs.t, gap_seconds):
        feats, yaw = body_relative_arrays(rs.positions[lo:hi], rs.orientations[lo:hi], prev_yaw)
        prev_yaw = float(yaw[-1])
        if hi - lo < 3:
            if diagnostics is not None:
                diagnostics.append(Diagnostic(lo, "short-segment",
                                              "segment too short for derivatives"))
            continue
        streams.append(FeatureStream(rec.participant_id, rec.session_index,
                                     float(rs.t[lo + 2]), derivatives(feats, rate), rate))
    return streams


def make_windows(features, mode: str = "train", participant_id: str = "",
                 session_index: int = 0, start_t: float = 0.0, rate: float = RATE,
                 window: int = WINDOW_FRAMES, step: int = INFER_STEP) -> List[FeatureWindow]:
    """Cut a feature stream into windows.

    ``train`` gives non-overlapping windows (remainder dropped); ``infer``
    slides by ``step`` frames. Windows share memory with ``features``.
    """
    if isinstance(features, FeatureStream):
        participant_id = features.participant_id
        session_index = features.session_index
        start_t = features.start_t
        rate = features.rate
        features = features.data
    features = np.asarray(features)
    if mode == "train":
        stride = window
    elif mode == "infer":
        stride = step
    else:
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    n = len(features)
    if n < window:
        log.debug("stream of %d frames shorter than one %d-frame window", n, window)
        return []
    views = sliding_window_view(features, window, axis=0)[::stride]
    return [FeatureWindow(v.T, participant_id, session_index, start_t + (k * stride) / rate)
            for k, v in enumerate(views)]


def write_feature_file(path: Union[str, Path], blocks: Sequence, participant_id: str,
                       session_index: int, mode: str = "stream",
                       start_t: Optional[Sequence[float]] = None, rate: float = RATE) -> Path:
    """Header JSON line followed by little-endian float32, row-major [block][frame][channel].

    ``blocks`` may be FeatureStreams, FeatureWindows or raw (frames, 36) arrays.
    """
    arrays, starts = [], []
    for i, b in enumerate(blocks):
        data = getattr(b, "data", b)
        arrays.append(np.asarray(data, dtype="<f4"))
        starts.append(float(getattr(b, "start_t", start_t[i] if start_t is not None else 0.0)))
    header = {
        "participant": participant_id, "session": session_index, "windows": len(arrays),
        "mode": mode, "layout": LAYOUT_VERSION, "channels": N_CHANNELS, "rate": rate,
        "frames": [len(a) for a in arrays], "start_t": starts,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write((json.dumps(header) + "\n").encode("utf-8"))
        for a in arrays:
            fh.write(np.ascontiguousarray(a).tobytes())
    return path


def read_feature_file(path: Union[str, Path]) -> Tuple[dict, List[FeatureStream]]:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        raw = np.frombuffer(fh.read(), dtype="<f4")
    if header.get("layout") != LAYOUT_VERSION:
        raise ValueError(f"{path}: unsupported feature layout {header.get('layout')!r}")
    ch = header["channels"]
    if raw.size != sum(header["frames"]) * ch:
        raise ValueError(f"{path}: payload size does not match header")
    blocks, off = [], 0
    for n, t0 in zip(header["frames"], header["start_t"]):
        data = raw[off:off + n * ch].reshape(n, ch)
        off += n * ch
        blocks.append(FeatureStream(header["participant"], header["session"], t0, data,
                                    header["rate"]))
    return header, blocks
