"""Corpus ingestion, batch preprocessing, and span-based window access."""

from __future__ import annotations

import logging
from collections import OrderedDict
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import List, Tuple

from .corpus import CorpusError, CorpusIndex, SessionEntry, Span
from .preprocess import (INFER_STEP, RATE, WINDOW_FRAMES, FeatureStream, FeatureWindow,
                         make_windows, preprocess_recording, read_feature_file,
                         write_feature_file)
from .telemetry import TelemetryError, load_recording, validate_recording

log = logging.getLogger(__name__)


def ingest_directory(telemetry_dir, index_path=None, max_week: int = 8) -> CorpusIndex:
    """Index every ``*.jsonl`` recording (with its sidecar) below ``telemetry_dir``.

    Recordings that fail to parse raise :class:`TelemetryError` naming the
    file. Paths are stored relative to the index location.
    """
    telemetry_dir = Path(telemetry_dir)
    root = Path(index_path).parent if index_path else telemetry_dir
    entries = {}
    files = sorted(telemetry_dir.rglob("*.jsonl"))
    if not files:
        raise CorpusError(f"no .jsonl recordings under {telemetry_dir}")
    for path in files:
        try:
            rec = load_recording(path)
        except TelemetryError as e:
            raise TelemetryError(f"{path}: {e}") from None
        for d in validate_recording(rec):
            if d.kind != "tracking-loss":
                log.warning("%s frame %d: %s", path, d.frame, d.reason)
        if rec.session_index in entries.get(rec.participant_id, {}):
            raise CorpusError(f"duplicate session {rec.session_index} for {rec.participant_id}")
        rel = path.resolve().relative_to(root.resolve()) if _inside(path, root) else path.resolve()
        entries.setdefault(rec.participant_id, {})[rec.session_index] = SessionEntry(
            duration=rec.duration, telemetry=str(rel), start_t=float(rec.t[0]))
    max_week = max([max_week] + [s for v in entries.values() for s in v])
    idx = CorpusIndex(entries, max_week, str(root))
    if index_path:
        idx.save(index_path)
    return idx


def _inside(path: Path, root: Path) -> bool:
    try:
        path.resolve().relative_to(root.resolve())
        return True
    except ValueError:
        return False


def _preprocess_one(args) -> Tuple[str, int, str, int]:
    pid, session, telemetry_path, feature_path, rate = args
    rec = load_recording(telemetry_path)
    diags: list = []
    streams = preprocess_recording(rec, rate, diagnostics=diags)
    for d in diags:
        log.info("%s: %s", telemetry_path, d.reason)
    write_feature_file(feature_path, streams, pid, session, mode="stream", rate=rate)
    return pid, session, str(feature_path), sum(len(s) for s in streams)


def preprocess_corpus(idx: CorpusIndex, features_dir=None, rate: float = RATE,
                      workers: int = 1, index_path=None) -> CorpusIndex:
    """Write one stream-mode feature file per session and record it in the index."""
    root = Path(idx.root or ".")
    features_dir = Path(features_dir) if features_dir else root / "features"
    jobs = []
    for pid in idx.participants:
        for s in idx.sessions(pid):
            e = idx.entry(pid, s)
            if e.telemetry is None:
                raise CorpusError(f"{pid} session {s} has no telemetry file")
            out = features_dir / pid / f"week{s:02d}.f32"
            jobs.append((pid, s, str(idx.resolve(e.telemetry)), str(out), rate))
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_preprocess_one, jobs))
    else:
        results = [_preprocess_one(j) for j in jobs]
    for pid, s, path, n in results:
        p = Path(path)
        idx.entries[pid][s].features = str(p.resolve().relative_to(root.resolve())) \
            if _inside(p, root) else str(p.resolve())
        if n == 0:
            log.warning("%s session %d produced no features", pid, s)
    if index_path:
        idx.save(index_path)
    return idx


class SessionStore:
    """Loads feature streams on demand (with a bounded cache) and cuts spans into windows."""

    def __init__(self, idx: CorpusIndex, cache_size: int = 256,
                 window: int = WINDOW_FRAMES, step: int = INFER_STEP):
        self.idx = idx
        self.window = window
        self.step = step
        self._cache: "OrderedDict[Tuple[str, int], List[FeatureStream]]" = OrderedDict()
        self._cache_size = cache_size

    def streams(self, pid: str, session: int) -> List[FeatureStream]:
        key = (pid, session)
        if key in self._cache:
            self._cache.move_to_end(key)
            return self._cache[key]
        e = self.idx.entry(pid, session)
        if e.features is None:
            raise CorpusError(f"{pid} session {session} has not been preprocessed")
        _, blocks = read_feature_file(self.idx.resolve(e.features))
        self._cache[key] = blocks
        if len(self._cache) > self._cache_size:
            self._cache.popitem(last=False)
        return blocks

    def windows(self, span: Span, mode: str) -> List[FeatureWindow]:
        out = []
        for block in self.streams(span.participant, span.session):
            part = block.between(span.start_s, span.end_s)
            out += make_windows(part, mode, window=self.window, step=self.step)
        return out
