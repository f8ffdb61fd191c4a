"""End-to-end experiments: train/test split tables, delay matrix, duration grid.

Every experiment cell trains one classifier on the plan's train spans
(non-overlapping windows), scores sliding windows over the test spans, and
reports metrics at two levels:

* window level: ``rank1``, ``multiclass_auc`` and ``n_class_accuracy``;
* unit level (a session, or a participant for the pooled ``table1`` rows):
  ``accuracy`` from the aggregated prediction and ``unit_auc`` on the
  aggregated score rows.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import metrics as M
from .classifier import (RecurrentFunnelConfig, ScoreMatrix, aggregate_session, baseline_predict,
                         baseline_train, predict_windows, train)
from .classifier.scores import LabelSpace
from .corpus import (CorpusError, CorpusIndex, Span, SplitPlan, filter_participants,
                     plan_between, plan_delay_cell, plan_duration_cell, plan_within, save_plan,
                     validate_plan, within_geometry)
from .heatmap import HeatmapSpec, emit_heatmap
from .store import SessionStore

log = logging.getLogger(__name__)

EXPERIMENTS = ("table1", "delay-matrix", "duration-grid")
AUC_CLIP = 1e-6

CSV_COLUMNS = [
    "experiment", "split", "test", "train_week", "test_week", "sessions", "minutes",
    "n_participants", "accuracy", "rank1", "multiclass_auc", "n_class_accuracy", "n_units",
    "n_class_n", "unit_auc", "n_windows", "delay", "mean_train_seconds", "mean_test_seconds",
    "mean_delay_weeks", "unit_ties",
]


@dataclass
class ExperimentConfig:
    corpus: str
    experiment: str
    seed: int
    out: str = "results"
    classifier: str = "funnel"
    aggregate: str = "logsum"
    n_class: int = 30
    workers: int = 1
    min_sessions: int = 5
    min_total_seconds: float = 7200.0
    window_frames: int = 900
    infer_step: int = 30
    widths: Tuple[int, ...] = (256, 128, 64)
    learning_rate: float = 0.001
    batch_size: int = 64
    max_epochs: int = 100
    patience: int = 10
    session_counts: Tuple[int, ...] = (1, 2, 4, 7)
    minutes: Tuple[float, ...] = (1, 3, 10, 30)
    n_boot: int = 2000
    write_plans: bool = True

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"experiment must be one of {EXPERIMENTS}")
        if self.classifier not in ("funnel", "baseline"):
            raise ValueError("classifier must be 'funnel' or 'baseline'")
        if self.aggregate not in ("logsum", "vote"):
            raise ValueError("aggregate must be 'logsum' or 'vote'")
        if self.seed is None:
            raise ValueError("a seed is required")
        self.widths = tuple(self.widths)
        self.session_counts = tuple(self.session_counts)
        self.minutes = tuple(self.minutes)

    def funnel_config(self, seed: int) -> RecurrentFunnelConfig:
        return RecurrentFunnelConfig(widths=self.widths, learning_rate=self.learning_rate,
                                     batch_size=self.batch_size, max_epochs=self.max_epochs,
                                     patience=self.patience, seed=seed)

    @classmethod
    def load(cls, path, **overrides) -> "ExperimentConfig":
        obj = json.loads(Path(path).read_text())
        obj.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**obj)


@dataclass
class EvalReport:
    experiment: str
    rows: List[dict]
    heatmaps: Dict[str, HeatmapSpec] = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n",
                           extrasaction="ignore")
        w.writeheader()
        for r in self.rows:
            w.writerow({k: _fmt(r.get(k)) for k in CSV_COLUMNS})
        return buf.getvalue()

    def to_json(self) -> dict:
        return {"experiment": self.experiment, "rows": self.rows,
                "heatmaps": {k: v.to_json() for k, v in self.heatmaps.items()}, **self.extra}


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def cell_seed(seed: int, *coords) -> int:
    return zlib.crc32(repr((int(seed), *coords)).encode("utf-8"))


def load_corpus(cfg: ExperimentConfig) -> CorpusIndex:
    idx = CorpusIndex.load(cfg.corpus)
    idx = filter_participants(idx, cfg.min_sessions, cfg.min_total_seconds)
    if len(idx.participants) < 2:
        raise CorpusError(f"corpus has {len(idx.participants)} eligible participants; need >= 2")
    return idx


# ---------------------------------------------------------------- cell evaluation

def fit_classifier(cfg: ExperimentConfig, windows, seed: int):
    if cfg.classifier == "baseline":
        model = baseline_train(windows)
        return model, lambda ws: baseline_predict(model, ws)
    model = train(windows, cfg.funnel_config(seed), window_frames=cfg.window_frames)
    return model, lambda ws: predict_windows(model, ws)


def train_windows(store: SessionStore, plan: SplitPlan):
    wins = []
    for span in plan.train:
        wins += store.windows(span, "train")
    if len({w.participant_id for w in wins}) < 2:
        raise CorpusError("train spans yield windows for fewer than two participants")
    return wins


def score_plan(cfg: ExperimentConfig, store: SessionStore, predict, labels: LabelSpace,
               test_spans: Sequence[Span], unit: str, seed: int) -> dict:
    """Score test spans; ``unit`` is ``session`` or ``participant``."""
    groups: Dict[tuple, List[Span]] = {}
    for s in test_spans:
        if s.participant not in labels.ids:
            continue
        key = (s.participant, s.session) if unit == "session" else (s.participant,)
        groups.setdefault(key, []).append(s)
    keys, windows, owner, test_secs = [], [], [], []
    for key in sorted(groups):
        ws = []
        for s in groups[key]:
            ws += store.windows(s, "infer")
        if not ws:
            continue
        owner += [len(keys)] * len(ws)
        keys.append(key)
        windows += ws
        test_secs.append(sum(s.seconds for s in groups[key]))
    if not windows:
        raise CorpusError("test spans yield no windows")
    W: ScoreMatrix = predict(windows)
    y = W.true_indices()
    owner = np.asarray(owner)

    records = M.rank_records(W, y, seed)
    c = len(labels)
    n_eff = min(cfg.n_class, c)
    out = {
        "n_windows": len(windows),
        "rank1": M.rank1(records),
        "multiclass_auc": M.multiclass_auc(W, y) if len(np.unique(y)) >= 2 else None,
        "n_class_n": n_eff,
        "n_class_accuracy": M.n_class_accuracy(records, n_eff) if n_eff >= 2 else None,
    }
    unit_rows, unit_true, correct, ties = [], [], 0, 0
    for k, key in enumerate(keys):
        d = aggregate_session(W.scores[owner == k], cfg.aggregate, seed=cell_seed(seed, key))
        t = labels.index(key[0])
        unit_rows.append(d.row)
        unit_true.append(t)
        correct += d.index == t
        ties += d.tie
    unit_true = np.asarray(unit_true)
    out.update({
        "n_units": len(keys),
        "accuracy": correct / len(keys),
        "unit_auc": (M.multiclass_auc(np.asarray(unit_rows), unit_true)
                     if len(np.unique(unit_true)) >= 2 else None),
        "unit_ties": ties,
        "mean_test_seconds": float(np.mean(test_secs)),
        "n_participants": len({k[0] for k in keys}),
    })
    return out


def tail_spans(idx: CorpusIndex, spans: Sequence[Span], train_fraction: float = 0.8) -> List[Span]:
    """The within-split test geometry applied to whole sessions (the ~5-minute tail)."""
    out = []
    for s in spans:
        e = idx.entry(s.participant, s.session)
        _, (c, d) = within_geometry(e.duration, e.start_t, train_fraction)
        out.append(Span(s.participant, s.session, c, d))
    return out


def _check(plan: SplitPlan):
    problems = validate_plan(plan)
    if problems:
        raise CorpusError("invalid split plan: " + "; ".join(problems[:3]))


# Cell jobs are plain tuples so they can run in worker processes.

def _run_cell(job):
    cfg, idx, kind, coords, plans = job
    store = SessionStore(idx, window=cfg.window_frames, step=cfg.infer_step)
    seed = cell_seed(cfg.seed, kind, *coords)
    first = plans[0][1]
    model, predict = fit_classifier(cfg, train_windows(store, first), seed)
    labels = model.labels
    rows = []
    for tag, plan, test_spans, unit, base in plans:
        r = dict(base)
        r.update(score_plan(cfg, store, predict, labels, test_spans, unit, seed))
        r["mean_train_seconds"] = float(np.mean(list(plan.train_seconds().values())))
        rows.append(r)
    return rows


def _run_jobs(cfg: ExperimentConfig, jobs) -> List[dict]:
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(cfg.workers) as ex:
            results = list(ex.map(_run_cell, jobs))
    else:
        results = [_run_cell(j) for j in jobs]
    return [r for rows in results for r in rows]


def _save_plans(cfg: ExperimentConfig, named_plans):
    if not cfg.write_plans:
        return
    d = Path(cfg.out) / "plans" / cfg.experiment
    for name, plan in named_plans:
        save_plan(plan, d / f"{name}.json")


# ---------------------------------------------------------------- experiments

def run_table1(cfg: ExperimentConfig, idx: Optional[CorpusIndex] = None) -> EvalReport:
    idx = idx or load_corpus(cfg)
    between = plan_between(idx)
    within = plan_within(idx)
    for p in (between, within):
        _check(p)
    if len(between.train_participants()) < 2 or not between.test:
        raise CorpusError("between split needs >= 2 participants with train and test weeks")
    base = {"experiment": "table1"}
    b_short = tail_spans(idx, between.test)
    jobs = [
        (cfg, idx, "between", (), [
            ("short", between, b_short, "session", dict(base, split="between", test="short")),
            ("full", between, between.test, "participant",
             dict(base, split="between", test="full")),
        ]),
        (cfg, idx, "within", (), [
            ("short", within, within.test, "session", dict(base, split="within", test="short")),
            ("full", within, within.test, "participant", dict(base, split="within", test="full")),
        ]),
    ]
    _save_plans(cfg, [("between", between), ("within", within)])
    return EvalReport("table1", _run_jobs(cfg, jobs))


def run_delay_matrix(cfg: ExperimentConfig, idx: Optional[CorpusIndex] = None) -> EvalReport:
    idx = idx or load_corpus(cfg)
    weeks = idx.weeks()
    if len(weeks) < 3:
        raise CorpusError(f"delay matrix needs >= 3 weeks, corpus has {len(weeks)}")
    jobs, named = [], []
    for tr in weeks:
        for te in weeks:
            if tr == te:
                continue
            plan = plan_delay_cell(idx, tr, te)
            if len(plan.train_participants()) < 2 or not plan.test:
                log.warning("skipping cell train=%d test=%d: not enough data", tr, te)
                continue
            _check(plan)
            named.append((f"train{tr:02d}_test{te:02d}", plan))
            base = {"experiment": "delay-matrix", "split": "between", "test": "session",
                    "train_week": tr, "test_week": te, "delay": abs(te - tr)}
            jobs.append((cfg, idx, "delay", (tr, te),
                         [("cell", plan, plan.test, "session", base)]))
    _save_plans(cfg, named)
    rows = _run_jobs(cfg, jobs)

    obs = [M.DelayObservation(r["train_week"], r["test_week"],
                              float(np.clip(r["multiclass_auc"], AUC_CLIP, 1 - AUC_CLIP)))
           for r in rows if r["multiclass_auc"] is not None]
    extra = {}
    if len({o.delay for o in obs}) >= 2:
        fit = M.fit_delay_model(obs)
        lo, hi = M.bootstrap_slope(obs, cfg.n_boot, 0.9, seed=cell_seed(cfg.seed, "boot"))
        extra["delay_fit"] = dict(fit.to_json(), slope_ci90=[lo, hi],
                                  clipped=sum(o.auc in (AUC_CLIP, 1 - AUC_CLIP) for o in obs))
    grid = {(r["train_week"], r["test_week"]): r["multiclass_auc"] for r in rows}
    spec = HeatmapSpec([str(w) for w in weeks], [str(w) for w in weeks],
                       [[grid.get((tr, te)) for te in weeks] for tr in weeks],
                       title="Multiclass AUC by training and testing week",
                       x_title="Testing week", y_title="Training week")
    return EvalReport("delay-matrix", rows, {"delay": spec}, extra)


def run_duration_grid(cfg: ExperimentConfig, idx: Optional[CorpusIndex] = None) -> EvalReport:
    idx = idx or load_corpus(cfg)
    if max(len(idx.sessions(p)) for p in idx.participants) < 2:
        raise CorpusError("duration grid needs participants with >= 2 sessions")
    jobs, named = [], []
    # one session draw per participant for the whole grid, so cells differ
    # only in how much of it is used for training
    seed = cell_seed(cfg.seed, "duration-plan")
    for n in cfg.session_counts:
        for m in cfg.minutes:
            pb = plan_duration_cell(idx, n, m, seed, "between")
            pw = plan_duration_cell(idx, n, m, seed, "within")
            if len(pb.train_participants()) < 2:
                raise CorpusError("not enough eligible sessions for the duration grid")
            for p in (pb, pw):
                _check(p)
            named += [(f"s{n}_m{m:g}_between", pb), (f"s{n}_m{m:g}_within", pw)]
            base = {"experiment": "duration-grid", "sessions": n, "minutes": float(m)}
            jobs.append((cfg, idx, "duration", (n, float(m)), [
                ("between", pb, pb.test, "session",
                 dict(base, split="between", test="session",
                      mean_delay_weeks=pb.metadata.get("mean_delay_weeks"))),
                ("within", pw, pw.test, "session", dict(base, split="within", test="session")),
            ]))
    _save_plans(cfg, named)
    rows = _run_jobs(cfg, jobs)
    return EvalReport("duration-grid", rows, duration_heatmaps(rows, cfg.session_counts,
                                                                cfg.minutes))


def duration_heatmaps(rows, session_counts, minutes) -> Dict[str, HeatmapSpec]:
    specs = {}
    for split in ("between", "within"):
        grid = {(int(r["sessions"]), float(r["minutes"])): r["multiclass_auc"]
                for r in rows if r["split"] == split}
        specs[split] = HeatmapSpec(
            [f"{m:g}" for m in minutes], [str(n) for n in session_counts],
            [[grid.get((int(n), float(m))) for m in minutes] for n in session_counts],
            title=f"Multiclass AUC, {split}-session test",
            x_title="Training minutes per session", y_title="Training sessions")
    return specs


RUNNERS = {"table1": run_table1, "delay-matrix": run_delay_matrix,
           "duration-grid": run_duration_grid}


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> EvalReport:
    report = RUNNERS[cfg.experiment](cfg)
    if write:
        write_report(report, cfg)
    return report


def write_report(report: EvalReport, cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{report.experiment}.csv").write_text(report.to_csv())
    payload = dict(report.to_json(), config=asdict(cfg))
    (out / f"{report.experiment}.json").write_text(json.dumps(payload, indent=1) + "\n")
    for name, spec in report.heatmaps.items():
        emit_heatmap(spec, out / f"{report.experiment}-{name}.svg")
    return out


INT_COLUMNS = {"train_week", "test_week", "sessions", "n_participants", "n_units", "n_class_n",
               "n_windows", "delay", "unit_ties"}


def read_report_csv(path) -> List[dict]:
    rows = []
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            row = {}
            for k, v in r.items():
                if v == "":
                    row[k] = None
                elif k in ("experiment", "split", "test"):
                    row[k] = v
                elif k in INT_COLUMNS:
                    row[k] = int(v)
                else:
                    row[k] = float(v)
            rows.append(row)
    return rows


def rerender(csv_path, out_dir) -> List[Path]:
    """Rebuild the heatmaps of a saved report from its CSV alone."""
    rows = read_report_csv(csv_path)
    if not rows:
        raise CorpusError(f"{csv_path} has no rows")
    exp = rows[0]["experiment"]
    out_dir = Path(out_dir)
    paths = []
    if exp == "delay-matrix":
        weeks = sorted({r["train_week"] for r in rows} | {r["test_week"] for r in rows})
        grid = {(r["train_week"], r["test_week"]): r["multiclass_auc"] for r in rows}
        spec = HeatmapSpec([str(w) for w in weeks], [str(w) for w in weeks],
                           [[grid.get((a, b)) for b in weeks] for a in weeks],
                           title="Multiclass AUC by training and testing week",
                           x_title="Testing week", y_title="Training week")
        paths.append(emit_heatmap(spec, out_dir / "delay-matrix-delay.svg"))
    elif exp == "duration-grid":
        sessions = sorted({int(r["sessions"]) for r in rows})
        minutes = sorted({float(r["minutes"]) for r in rows})
        for name, spec in duration_heatmaps(rows, sessions, minutes).items():
            paths.append(emit_heatmap(spec, out_dir / f"duration-grid-{name}.svg"))
    else:
        raise CorpusError(f"no figures for experiment {exp!r}")
    return paths
