"""Command line entry point: ``vrident synth|ingest|preprocess|run|report``.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .classifier.scores import ClassifierError
from .corpus import CorpusError, CorpusIndex
from .metrics import MetricError
from .telemetry import TelemetryError

DATA_ERRORS = (TelemetryError, CorpusError, ClassifierError, MetricError, FileNotFoundError,
               json.JSONDecodeError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _int_list(text):
    return tuple(int(x) for x in text.split(","))


def _float_list(text):
    return tuple(float(x) for x in text.split(","))


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="vrident", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a synthetic telemetry corpus")
    s.add_argument("--config", help="generator config JSON")
    s.add_argument("--participants", type=int)
    s.add_argument("--weeks", type=int)
    s.add_argument("--minutes", type=float)
    s.add_argument("--rate", type=float)
    s.add_argument("--drift", type=float, help="drift preset level (0 disables drift)")
    s.add_argument("--thin", type=float, help="probability of dropping each session")
    s.add_argument("--noise", type=float, dest="noise_level",
                   help="tracking-noise multiplier (default 1)")
    s.add_argument("--seed", type=int)
    s.add_argument("--preprocess", action="store_true", help="also write feature files")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out", required=True)

    s = sub.add_parser("ingest", help="index a directory of telemetry recordings")
    s.add_argument("telemetry_dir")
    s.add_argument("--out", required=True, help="index JSON to write")

    s = sub.add_parser("preprocess", help="write feature files for every indexed session")
    s.add_argument("index")
    s.add_argument("--features", help="feature directory (default: <index dir>/features)")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out", help="updated index path (default: overwrite)")

    s = sub.add_parser("run", help="run an experiment")
    s.add_argument("experiment", choices=["table1", "delay-matrix", "duration-grid"])
    s.add_argument("--config", help="experiment config JSON")
    s.add_argument("--corpus", help="corpus index JSON")
    s.add_argument("--seed", type=int)
    s.add_argument("--classifier", choices=["funnel", "baseline"])
    s.add_argument("--aggregate", choices=["logsum", "vote"])
    s.add_argument("--workers", type=int)
    s.add_argument("--out")
    s.add_argument("--n-class", type=int, dest="n_class")
    s.add_argument("--min-sessions", type=int, dest="min_sessions")
    s.add_argument("--min-seconds", type=float, dest="min_total_seconds")
    s.add_argument("--widths", type=_int_list, help="funnel widths, e.g. 64,32")
    s.add_argument("--epochs", type=int, dest="max_epochs")
    s.add_argument("--session-counts", type=_int_list, dest="session_counts")
    s.add_argument("--minutes", type=_float_list)

    s = sub.add_parser("report", help="re-render figures from a report CSV")
    s.add_argument("csv")
    s.add_argument("--out", help="output directory (default: next to the CSV)")
    return p


def cmd_synth(args):
    from .synthgen import DriftModel, GeneratorConfig, gen_corpus_from_config
    try:
        cfg = GeneratorConfig.load(args.config) if args.config else GeneratorConfig()
    except TypeError as e:
        raise UsageError(f"bad generator config: {e}") from None
    for attr, val in (("n_participants", args.participants), ("weeks", args.weeks),
                      ("minutes_per_session", args.minutes), ("rate", args.rate),
                      ("thin_prob", args.thin), ("seed", args.seed),
                      ("noise_level", args.noise_level)):
        if val is not None:
            setattr(cfg, attr, val)
    if args.drift is not None:
        cfg.drift = DriftModel.scaled(args.drift)
    if cfg.n_participants < 2:
        raise UsageError("need at least 2 participants")
    idx = gen_corpus_from_config(cfg, args.out)
    if args.preprocess:
        from .store import preprocess_corpus
        preprocess_corpus(idx, workers=args.workers, index_path=Path(args.out) / "index.json")
    print(f"wrote {idx.n_sessions()} sessions for {len(idx.participants)} participants "
          f"to {args.out}")


def cmd_ingest(args):
    from .store import ingest_directory
    idx = ingest_directory(args.telemetry_dir, args.out)
    print(f"indexed {idx.n_sessions()} sessions for {len(idx.participants)} participants")


def cmd_preprocess(args):
    from .store import preprocess_corpus
    idx = CorpusIndex.load(args.index)
    preprocess_corpus(idx, args.features, workers=args.workers,
                      index_path=args.out or args.index)
    print(f"preprocessed {idx.n_sessions()} sessions")


def cmd_run(args):
    from .harness import ExperimentConfig, run_experiment
    overrides = {k: getattr(args, k) for k in (
        "corpus", "seed", "classifier", "aggregate", "workers", "out", "n_class", "min_sessions",
        "min_total_seconds", "widths", "max_epochs", "session_counts", "minutes")}
    overrides["experiment"] = args.experiment
    try:
        if args.config:
            cfg = ExperimentConfig.load(args.config, **overrides)
        else:
            if overrides["corpus"] is None or overrides["seed"] is None:
                raise UsageError("--corpus and --seed are required without --config")
            cfg = ExperimentConfig(**{k: v for k, v in overrides.items() if v is not None})
    except TypeError as e:
        raise UsageError(f"bad experiment config: {e}") from None
    report = run_experiment(cfg)
    print(report.to_csv(), end="")
    fit = report.extra.get("delay_fit")
    if fit:
        print(f"delay slope {fit['slope']:.4f} logits/week "
              f"(90% CI {fit['slope_ci90'][0]:.4f} .. {fit['slope_ci90'][1]:.4f}), "
              f"pooled intercept {fit['pooled_intercept']:.4f}")


def cmd_report(args):
    from .harness import rerender
    out = args.out or str(Path(args.csv).parent)
    for p in rerender(args.csv, out):
        print(p)


COMMANDS = {"synth": cmd_synth, "ingest": cmd_ingest, "preprocess": cmd_preprocess,
            "run": cmd_run, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except UsageError as e:
        print(f"vrident: usage error: {e}", file=sys.stderr)
        return 1
    except DATA_ERRORS as e:
        print(f"vrident: data error: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        # config validation (bad experiment settings) is a usage problem
        print(f"vrident: usage error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
