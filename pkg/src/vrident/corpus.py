"""Session store, participant eligibility, and train/test split planning.

All times in a :class:`Span` are session-relative seconds (the telemetry
``t`` axis). A session covers ``[start_t, start_t + duration]``.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

BUFFER_SECONDS = 120.0
MIN_TRAIN_SPAN = 30.0
MIN_DURATION_SESSION = 480.0
EPS = 1e-9


class CorpusError(ValueError):
    pass


@dataclass
class SessionEntry:
    duration: float
    features: Optional[str] = None
    telemetry: Optional[str] = None
    start_t: float = 0.0


@dataclass
class CorpusIndex:
    entries: Dict[str, Dict[int, SessionEntry]] = field(default_factory=dict)
    max_week: int = 8
    root: Optional[str] = None

    def __post_init__(self):
        for pid, sessions in self.entries.items():
            for s, e in sessions.items():
                if e.duration <= 0:
                    raise CorpusError(f"{pid} session {s}: duration must be positive")
                if not 1 <= s <= self.max_week:
                    raise CorpusError(f"{pid} session {s}: outside [1, {self.max_week}]")

    @property
    def participants(self) -> List[str]:
        return sorted(self.entries)

    def sessions(self, pid: str) -> List[int]:
        return sorted(self.entries.get(pid, {}))

    def entry(self, pid: str, session: int) -> SessionEntry:
        return self.entries[pid][session]

    def total_seconds(self, pid: str) -> float:
        return sum(e.duration for e in self.entries[pid].values())

    def weeks(self) -> List[int]:
        return sorted({s for v in self.entries.values() for s in v})

    def n_sessions(self) -> int:
        return sum(len(v) for v in self.entries.values())

    def resolve(self, path: Optional[str]) -> Optional[Path]:
        if path is None:
            return None
        p = Path(path)
        if not p.is_absolute() and self.root is not None:
            p = Path(self.root) / p
        return p

    def subset(self, pids: Iterable[str]) -> "CorpusIndex":
        keep = set(pids)
        return CorpusIndex({p: dict(v) for p, v in self.entries.items() if p in keep},
                           self.max_week, self.root)

    def to_json(self) -> dict:
        return {
            "max_week": self.max_week,
            "participants": {
                pid: {str(s): asdict(e) for s, e in sorted(v.items())}
                for pid, v in sorted(self.entries.items())
            },
        }

    @classmethod
    def from_json(cls, obj: dict, root: Optional[str] = None) -> "CorpusIndex":
        entries = {
            pid: {int(s): SessionEntry(**e) for s, e in v.items()}
            for pid, v in obj["participants"].items()
        }
        return cls(entries, int(obj.get("max_week", 8)), root)

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_json(), indent=1) + "\n")
        return path

    @classmethod
    def load(cls, path) -> "CorpusIndex":
        path = Path(path)
        try:
            obj = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise CorpusError(f"cannot read corpus index {path}: {e}") from None
        return cls.from_json(obj, root=str(path.parent))


@dataclass(frozen=True)
class Span:
    participant: str
    session: int
    start_s: float
    end_s: float

    @property
    def seconds(self) -> float:
        return self.end_s - self.start_s


@dataclass
class SplitPlan:
    kind: str  # "between" | "within"
    train: List[Span]
    test: List[Span]
    metadata: dict = field(default_factory=dict)

    def train_participants(self) -> List[str]:
        return sorted({s.participant for s in self.train})

    def test_participants(self) -> List[str]:
        return sorted({s.participant for s in self.test})

    def train_seconds(self) -> Dict[str, float]:
        out: Dict[str, float] = {}
        for s in self.train:
            out[s.participant] = out.get(s.participant, 0.0) + s.seconds
        return out

    def to_json(self) -> dict:
        rows = [dict(participant=s.participant, session=s.session, start_s=s.start_s,
                     end_s=s.end_s, role=role)
                for role, spans in (("train", self.train), ("test", self.test))
                for s in spans]
        return {"kind": self.kind, "metadata": self.metadata, "spans": rows}

    @classmethod
    def from_json(cls, obj: dict) -> "SplitPlan":
        train, test = [], []
        for r in obj["spans"]:
            span = Span(r["participant"], int(r["session"]), float(r["start_s"]),
                        float(r["end_s"]))
            (train if r["role"] == "train" else test).append(span)
        return cls(obj["kind"], train, test, dict(obj.get("metadata", {})))


def validate_plan(plan: SplitPlan, buffer_seconds: float = BUFFER_SECONDS) -> List[str]:
    """Audit a plan span by span; returns human-readable violations (empty when valid)."""
    problems = []
    if plan.kind not in ("between", "within"):
        problems.append(f"unknown plan kind {plan.kind!r}")
    for role, spans in (("train", plan.train), ("test", plan.test)):
        for s in spans:
            if not s.end_s > s.start_s:
                problems.append(f"{role} span {s} is empty or reversed")
    train_pairs: Dict[Tuple[str, int], List[Span]] = {}
    for s in plan.train:
        train_pairs.setdefault((s.participant, s.session), []).append(s)
    enrolled = {s.participant for s in plan.train}
    for s in plan.test:
        if s.participant not in enrolled:
            problems.append(f"test participant {s.participant} not enrolled in train")
        key = (s.participant, s.session)
        if key not in train_pairs:
            continue
        if plan.kind == "between":
            problems.append(f"between plan reuses session {key} in both roles")
            continue
        for tr in train_pairs[key]:
            if s.start_s < tr.end_s + buffer_seconds - EPS:
                problems.append(
                    f"test span {s} starts {s.start_s - tr.end_s:.3f} s after train end "
                    f"(< {buffer_seconds} s buffer)")
    return problems


def filter_participants(idx: CorpusIndex, min_sessions: int = 5,
                        min_total_seconds: float = 7200.0) -> CorpusIndex:
    """Keep participants with at least ``min_sessions`` sessions and ``min_total_seconds`` of data."""
    keep = [p for p in idx.participants
            if len(idx.entries[p]) >= min_sessions
            and idx.total_seconds(p) >= min_total_seconds - EPS]
    return idx.subset(keep)


def _full_span(idx: CorpusIndex, pid: str, s: int) -> Span:
    e = idx.entry(pid, s)
    return Span(pid, s, e.start_t, e.start_t + e.duration)


def plan_between(idx: CorpusIndex, train_weeks: Iterable[int] = range(1, 7),
                 test_weeks: Iterable[int] = (7, 8)) -> SplitPlan:
    train_weeks, test_weeks = set(train_weeks), set(test_weeks)
    if train_weeks & test_weeks:
        raise CorpusError(f"train and test weeks overlap: {sorted(train_weeks & test_weeks)}")
    train, test = [], []
    for pid in idx.participants:
        tr = [s for s in idx.sessions(pid) if s in train_weeks]
        if not tr:
            continue
        train += [_full_span(idx, pid, s) for s in tr]
        test += [_full_span(idx, pid, s) for s in idx.sessions(pid) if s in test_weeks]
    return SplitPlan("between", train, test, {
        "train_weeks": sorted(train_weeks), "test_weeks": sorted(test_weeks)})


def within_geometry(duration: float, start_t: float = 0.0, train_fraction: float = 0.8,
                    buffer_seconds: float = BUFFER_SECONDS):
    """Train ``[0, f*D - buffer]`` and test ``[f*D, D]``, offset by ``start_t``."""
    cut = train_fraction * duration
    return (start_t, start_t + cut - buffer_seconds), (start_t + cut, start_t + duration)


def plan_within(idx: CorpusIndex, train_fraction: float = 0.8,
                buffer_seconds: float = BUFFER_SECONDS) -> SplitPlan:
    if not 0.0 < train_fraction < 1.0:
        raise CorpusError(f"train_fraction must be in (0, 1), got {train_fraction}")
    train, test = [], []
    for pid in idx.participants:
        for s in idx.sessions(pid):
            e = idx.entry(pid, s)
            (a, b), (c, d) = within_geometry(e.duration, e.start_t, train_fraction,
                                             buffer_seconds)
            if b - a < MIN_TRAIN_SPAN:
                continue
            train.append(Span(pid, s, a, b))
            test.append(Span(pid, s, c, d))
    return SplitPlan("within", train, test, {
        "train_fraction": train_fraction, "buffer_seconds": buffer_seconds})


def plan_delay_cell(idx: CorpusIndex, train_week: int, test_week: int) -> SplitPlan:
    if train_week == test_week:
        raise CorpusError("train and test week must differ")
    plan = plan_between(idx, {train_week}, {test_week})
    plan.metadata.update(train_week=train_week, test_week=test_week,
                         delay=test_week - train_week)
    return plan


def participant_rng(seed: int, pid: str) -> np.random.Generator:
    return np.random.default_rng([int(seed), zlib.crc32(pid.encode("utf-8"))])


def plan_duration_cell(idx: CorpusIndex, n_sessions: int, minutes: float, seed: int,
                       kind: str = "between", train_fraction: float = 0.8,
                       buffer_seconds: float = BUFFER_SECONDS,
                       min_session_seconds: float = MIN_DURATION_SESSION) -> SplitPlan:
    """Training set of at most ``n_sessions`` sessions × ``minutes`` per session.

    Session choice is a seeded per-participant permutation truncated to
    ``min(n_sessions, available - 1)``, so the training sets for larger
    ``n_sessions`` contain the smaller ones. Train spans start at the
    session start and stop before the within-session buffer. ``kind``
    selects the test side: the unused sessions (``between``) or the
    reserved tail of each training session (``within``).
    """
    if kind not in ("between", "within"):
        raise CorpusError(f"kind must be 'between' or 'within', got {kind!r}")
    if n_sessions < 1 or minutes <= 0:
        raise CorpusError("n_sessions and minutes must be positive")
    train, test = [], []
    realized_delays, train_secs = [], []
    for pid in idx.participants:
        avail = [s for s in idx.sessions(pid)
                 if idx.entry(pid, s).duration >= min_session_seconds - EPS]
        if len(avail) < 2:
            continue
        order = participant_rng(seed, pid).permutation(avail).tolist()
        k = min(n_sessions, len(avail) - 1)
        chosen, held = sorted(order[:k]), sorted(order[k:])
        spans = []
        for s in chosen:
            e = idx.entry(pid, s)
            (a, b), (c, d) = within_geometry(e.duration, e.start_t, train_fraction,
                                             buffer_seconds)
            end = min(a + 60.0 * minutes, b)
            if end <= a:
                continue
            spans.append(Span(pid, s, a, end))
            if kind == "within":
                test.append(Span(pid, s, c, d))
        if not spans:
            continue
        train += spans
        train_secs.append(sum(sp.seconds for sp in spans))
        if kind == "between":
            test += [_full_span(idx, pid, s) for s in held]
            realized_delays += [min(abs(h - c) for c in chosen) for h in held]
    meta = {"sessions_per_participant": n_sessions, "per_session_minutes": minutes,
            "seed": seed, "mean_train_seconds": float(np.mean(train_secs)) if train_secs else 0.0}
    if realized_delays:
        meta["mean_delay_weeks"] = float(np.mean(realized_delays))
    return SplitPlan(kind, train, test, meta)


def load_plan(path) -> SplitPlan:
    return SplitPlan.from_json(json.loads(Path(path).read_text()))


def save_plan(plan: SplitPlan, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(plan.to_json(), indent=1) + "\n")
    return path
