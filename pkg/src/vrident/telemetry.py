"""Pose telemetry data model and the JSON-Lines recording format.

A recording file holds one frame per line::

    {"t": 0.0, "head": {"p": [x, y, z], "q": [x, y, z, w]}, "left": {...}, "right": {...}}

with a sidecar ``<name>.meta.json`` holding ``participant``, ``session`` and
``nominal_rate``. Positions are meters in a right-handed, +Y up, forward -Z
world frame; quaternions are stored in (x, y, z, w) order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Union

import numpy as np

DEVICES = ("head", "left", "right")

NORM_TOLERANCE = 1e-2
UNIT_TOLERANCE = 1e-6
POSITION_BOUND = 100.0
GAP_SECONDS = 0.5


class TelemetryError(ValueError):
    """A recording violates the file grammar or a data-model invariant."""

    def __init__(self, reason: str, line: Optional[int] = None):
        self.reason = reason
        self.line = line
        msg = reason if line is None else f"line {line}: {reason}"
        super().__init__(msg)


def normalize_quaternion(q) -> np.ndarray:
    """Renormalize ``q``; raise if it is degenerate or too far from unit."""
    q = np.asarray(q, dtype=float)
    n = float(np.linalg.norm(q))
    if not math.isfinite(n) or n < 1e-12:
        raise TelemetryError("degenerate quaternion")
    if abs(n - 1.0) > NORM_TOLERANCE:
        raise TelemetryError(f"quaternion norm {n:.6g} out of tolerance")
    return q / n


@dataclass(frozen=True)
class DevicePose:
    position: np.ndarray
    orientation: np.ndarray  # (x, y, z, w)


@dataclass(frozen=True)
class PoseFrame:
    t: float
    head: DevicePose
    left: DevicePose
    right: DevicePose

    def device(self, name: str) -> DevicePose:
        return getattr(self, name)


@dataclass(frozen=True, eq=False)
class Recording:
    """A single session of tracked motion.

    Frames are stored column-wise: ``t`` has shape (n,), ``positions`` has
    shape (n, 3, 3) and ``orientations`` shape (n, 3, 4), with the device
    axis ordered as :data:`DEVICES`. Arrays are made read-only on
    construction.
    """

    participant_id: str
    session_index: int
    t: np.ndarray
    positions: np.ndarray
    orientations: np.ndarray
    nominal_rate: float = 90.0

    def __post_init__(self):
        t = np.array(self.t, dtype=float).reshape(-1)
        p = np.array(self.positions, dtype=float)
        q = np.array(self.orientations, dtype=float)
        n = len(t)
        if p.shape != (n, 3, 3) or q.shape != (n, 3, 4):
            raise TelemetryError(
                f"expected positions (n,3,3) and orientations (n,3,4) for n={n}, "
                f"got {p.shape} and {q.shape}")
        for a in (t, p, q):
            a.setflags(write=False)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "positions", p)
        object.__setattr__(self, "orientations", q)

    def __len__(self) -> int:
        return len(self.t)

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0]) if len(self.t) else 0.0

    def frame(self, i: int) -> PoseFrame:
        poses = [DevicePose(self.positions[i, d], self.orientations[i, d])
                 for d in range(3)]
        return PoseFrame(float(self.t[i]), *poses)

    def frames(self) -> List[PoseFrame]:
        return [self.frame(i) for i in range(len(self))]

    @classmethod
    def from_frames(cls, participant_id: str, session_index: int,
                    frames: Iterable[PoseFrame], nominal_rate: float = 90.0) -> "Recording":
        frames = list(frames)
        t = [f.t for f in frames]
        p = [[f.device(d).position for d in DEVICES] for f in frames]
        q = [[f.device(d).orientation for d in DEVICES] for f in frames]
        return cls(participant_id, session_index, np.asarray(t, dtype=float),
                   np.asarray(p, dtype=float).reshape(-1, 3, 3),
                   np.asarray(q, dtype=float).reshape(-1, 3, 4), nominal_rate)

    def slice(self, start: int, stop: int) -> "Recording":
        return Recording(self.participant_id, self.session_index, self.t[start:stop],
                         self.positions[start:stop], self.orientations[start:stop],
                         self.nominal_rate)


@dataclass(frozen=True)
class Diagnostic:
    frame: int
    kind: str
    reason: str


def _parse_device(obj, name: str, lineno: int):
    dev = obj.get(name)
    if not isinstance(dev, dict):
        raise TelemetryError(f"missing device '{name}'", lineno)
    p, q = dev.get("p"), dev.get("q")
    if not (isinstance(p, list) and len(p) == 3):
        raise TelemetryError(f"device '{name}': 'p' must be a 3-element list", lineno)
    if not (isinstance(q, list) and len(q) == 4):
        raise TelemetryError(f"device '{name}': 'q' must be a 4-element list", lineno)
    try:
        p = [float(v) for v in p]
        q = [float(v) for v in q]
    except (TypeError, ValueError):
        raise TelemetryError(f"device '{name}': non-numeric component", lineno) from None
    if not all(math.isfinite(v) for v in p):
        raise TelemetryError(f"device '{name}': non-finite position", lineno)
    if any(abs(v) >= POSITION_BOUND for v in p):
        raise TelemetryError(f"device '{name}': position outside +/-{POSITION_BOUND:g} m", lineno)
    try:
        q = normalize_quaternion(q)
    except TelemetryError as e:
        raise TelemetryError(f"device '{name}': {e.reason}", lineno) from None
    return p, q


def _parse_line(line: str, lineno: int):
    """Slow path: fully validate one line, raising with the specific rule broken."""
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as e:
        raise TelemetryError(f"malformed JSON ({e.msg})", lineno) from None
    if not isinstance(obj, dict):
        raise TelemetryError("frame must be a JSON object", lineno)
    t = obj.get("t")
    if isinstance(t, bool) or not isinstance(t, (int, float)) or not math.isfinite(t):
        raise TelemetryError("missing or non-numeric timestamp 't'", lineno)
    if t < 0:
        raise TelemetryError("negative timestamp", lineno)
    ps, qs = [], []
    for name in DEVICES:
        p, q = _parse_device(obj, name, lineno)
        ps.append(p)
        qs.append(q)
    return float(t), ps, qs


def parse_recording(data: Union[bytes, str, Iterable[str]], participant_id: str = "",
                    session_index: int = 1, nominal_rate: float = 90.0) -> Recording:
    """Parse JSON-Lines telemetry into a validated :class:`Recording`.

    Blank lines are ignored. Every rejection raises :class:`TelemetryError`
    carrying the 1-based line number. Quaternions within the norm tolerance
    are renormalized.
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    lines = data.splitlines() if isinstance(data, str) else data
    if session_index < 1:
        raise TelemetryError(f"session index must be >= 1, got {session_index}")

    linenos, rows = [], []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        # fast path: flat row of 22 numbers; anything odd is re-parsed strictly
        try:
            obj = json.loads(line)
            row = [obj["t"]]
            for name in DEVICES:
                dev = obj[name]
                p, q = dev["p"], dev["q"]
                if len(p) != 3 or len(q) != 4:
                    raise ValueError
                row += p
                row += q
            if not all(type(v) in (int, float) for v in row):
                raise ValueError
        except (ValueError, KeyError, TypeError):
            _parse_line(line, lineno)
            raise TelemetryError("non-numeric component", lineno) from None
        linenos.append(lineno)
        rows.append(row)

    if not rows:
        raise TelemetryError("recording contains no frames")
    arr = np.asarray(rows, dtype=float)
    t = arr[:, 0]
    P = arr[:, 1:].reshape(-1, 3, 7)[:, :, :3]
    Q = arr[:, 1:].reshape(-1, 3, 7)[:, :, 3:]

    def fail(mask, reason):
        i = int(np.flatnonzero(mask)[0])
        raise TelemetryError(reason, linenos[i])

    bad = ~np.isfinite(arr).all(axis=1)
    if bad.any():
        fail(bad, "non-finite value")
    if (t < 0).any():
        fail(t < 0, "negative timestamp")
    back = np.concatenate([[False], np.diff(t) <= 0])
    if back.any():
        i = int(np.flatnonzero(back)[0])
        raise TelemetryError(f"non-monotonic timestamp {t[i]!r} after {t[i - 1]!r}", linenos[i])
    far = (np.abs(P) >= POSITION_BOUND).any(axis=(1, 2))
    if far.any():
        fail(far, f"position outside +/-{POSITION_BOUND:g} m")
    norms = np.linalg.norm(Q, axis=2)
    if (norms < 1e-12).any():
        fail((norms < 1e-12).any(axis=1), "degenerate quaternion")
    off = (np.abs(norms - 1.0) > NORM_TOLERANCE).any(axis=1)
    if off.any():
        fail(off, "quaternion norm out of tolerance")
    Q = Q / norms[:, :, None]
    # a single frame parses; its zero duration is left for validate_recording
    return Recording(participant_id, session_index, t, P, Q, nominal_rate)


_LINE = ('{"t": %r, ' + ", ".join(
    f'"{d}": {{"p": [%r, %r, %r], "q": [%r, %r, %r, %r]}}' for d in DEVICES) + "}")


def serialize_recording(rec: Recording) -> str:
    """Inverse of :func:`parse_recording`; floats are written with ``repr``."""
    flat = np.concatenate([rec.t[:, None], np.concatenate(
        [rec.positions, rec.orientations], axis=2).reshape(len(rec), -1)], axis=1)
    return "".join(_LINE % tuple(row) + "\n" for row in flat.tolist())


def metadata_path(path: Union[str, Path]) -> Path:
    path = Path(path)
    return path.with_name(path.name.rsplit(".", 1)[0] + ".meta.json")


def write_recording(rec: Recording, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(serialize_recording(rec), encoding="utf-8")
    meta = {"participant": rec.participant_id, "session": rec.session_index,
            "nominal_rate": rec.nominal_rate}
    metadata_path(path).write_text(json.dumps(meta) + "\n", encoding="utf-8")
    return path


def load_recording(path: Union[str, Path]) -> Recording:
    path = Path(path)
    meta_file = metadata_path(path)
    try:
        meta = json.loads(meta_file.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise TelemetryError(f"missing metadata sidecar {meta_file.name}") from None
    except json.JSONDecodeError as e:
        raise TelemetryError(f"{meta_file.name}: malformed JSON ({e.msg})") from None
    if not isinstance(meta.get("session"), int) or "participant" not in meta:
        raise TelemetryError(f"{meta_file.name}: needs 'participant' and integer 'session'")
    with open(path, encoding="utf-8") as fh:
        return parse_recording(fh, str(meta["participant"]), meta["session"],
                               float(meta.get("nominal_rate", 90.0)))


def validate_recording(rec: Recording, gap_seconds: float = GAP_SECONDS) -> List[Diagnostic]:
    """Check all invariants; returns an empty list iff they hold.

    Gaps longer than ``gap_seconds`` are reported as ``tracking-loss``
    boundaries.
    """
    diags: List[Diagnostic] = []
    n = len(rec)
    if n == 0:
        return [Diagnostic(0, "empty", "recording has no frames")]
    if rec.session_index < 1:
        diags.append(Diagnostic(0, "session", f"session index {rec.session_index} < 1"))
    if rec.duration <= 0:
        diags.append(Diagnostic(0, "duration", "duration must be positive"))

    t = rec.t
    if t[0] < 0:
        diags.append(Diagnostic(0, "timestamp", "negative timestamp"))
    if not np.all(np.isfinite(t)):
        for i in np.flatnonzero(~np.isfinite(t)):
            diags.append(Diagnostic(int(i), "timestamp", "non-finite timestamp"))
    dt = np.diff(t)
    for i in np.flatnonzero(dt == 0):
        diags.append(Diagnostic(int(i) + 1, "duplicate-timestamp", f"duplicate timestamp {t[i]!r}"))
    for i in np.flatnonzero(dt < 0):
        diags.append(Diagnostic(int(i) + 1, "non-monotonic", f"timestamp decreases to {t[i + 1]!r}"))
    for i in np.flatnonzero(dt > gap_seconds):
        diags.append(Diagnostic(int(i) + 1, "tracking-loss", f"gap of {dt[i]:.3f} s"))

    P, Q = rec.positions, rec.orientations
    bad_p = ~np.isfinite(P).all(axis=(1, 2)) | (np.abs(P) >= POSITION_BOUND).any(axis=(1, 2))
    for i in np.flatnonzero(bad_p):
        diags.append(Diagnostic(int(i), "position", "non-finite or out-of-bounds position"))
    norms = np.linalg.norm(Q, axis=2)
    for i in np.flatnonzero((np.abs(norms - 1.0) > UNIT_TOLERANCE).any(axis=1)):
        diags.append(Diagnostic(int(i), "quaternion", "orientation is not a unit quaternion"))
    diags.sort(key=lambda d: d.frame)
    return diags


def segment_bounds(t: np.ndarray, gap_seconds: float = GAP_SECONDS) -> List[tuple]:
    """Split frame indices into ``[start, stop)`` runs at tracking-loss gaps."""
    if len(t) == 0:
        return []
    cuts = np.flatnonzero(np.diff(t) > gap_seconds) + 1
    edges = [0, *cuts.tolist(), len(t)]
    return list(zip(edges[:-1], edges[1:]))
