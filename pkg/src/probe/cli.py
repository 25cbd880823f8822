"""The ``probe`` command line: validate, score, sweep, report, fixture.

Exit codes: 0 success, 1 validation/config error, 2 backend error,
3 partial sweep (some steps failed).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .dataset import (
    DatasetError,
    default_fixture_spec,
    fixture_spec_from_dict,
    generate_fixture,
    parse_dataset,
    serialize_dataset,
    validate_dataset,
)
from .metrics import MetricsError
from .report import ReportError, ReportSpec, emit_report
from .runner import (
    ConfigError,
    ResultSet,
    RunnerError,
    load_config,
    run_experiment,
    sweep_checkpoints,
    sweep_status,
)
from .scorer import ScorerError, TransportError

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_BACKEND = 2
EXIT_PARTIAL = 3


def _cmd_validate(args: argparse.Namespace) -> int:
    path = Path(args.dataset)
    dataset = parse_dataset(path.read_bytes(), name=path.stem)
    report = validate_dataset(dataset)
    if args.json:
        print(json.dumps(report.to_dict(), indent=2, ensure_ascii=False))
    else:
        print(f"dataset {dataset.name}: {report.item_count} items (hash {dataset.source_hash[:12]})")
        for cell, count in report.cell_counts.items():
            print(f"  {'/'.join(cell)}: {count}")
        for feature, ratios in report.value_ratios.items():
            shares = ", ".join(f"{value}={ratio:.3f}" for value, ratio in ratios.items())
            print(f"  {feature} split: {shares}")
        for violation in report.violations:
            print(f"  VIOLATION {violation.item_id}: {violation.rule}")
    return EXIT_OK if report.ok else EXIT_INVALID


def _cmd_score(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    if cfg.checkpoints is not None and not cfg.scorers:
        raise ConfigError("config defines a checkpoint family and no scorers; use `probe sweep`")
    result = run_experiment(cfg)
    print(f"scored {len(result.rows)} rows ({result.manifest['reject_tally']} rejects)")
    for summary in result.summaries:
        key = ", ".join(f"{k}={v}" for k, v in summary.group_key.items()) or "all"
        print(f"  [{key}] n={summary.n} binary={summary.mean_binary:.4f} pd={summary.mean_pd:.4f}")
    print(f"results written to {cfg.output_dir}")
    return EXIT_OK


def _cmd_sweep(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    result = sweep_checkpoints(cfg)
    status = sweep_status(result)
    ok = sum(1 for e in result.manifest["entries"] if e["status"] == "ok")
    failed = sum(1 for e in result.manifest["entries"] if e["status"] == "failed")
    print(f"sweep {status}: {ok} ok, {failed} failed; {len(result.rows)} rows")
    print(f"results written to {cfg.output_dir}")
    if status == "failed":
        return EXIT_BACKEND
    return EXIT_PARTIAL if status == "partial" else EXIT_OK


def _cmd_report(args: argparse.Namespace) -> int:
    result = ResultSet.read(args.results)
    baselines = {}
    for item in args.baseline or []:
        name, _, value = item.partition("=")
        if not name or not value:
            raise ReportError(f"--baseline expects name=value, got {item!r}")
        baselines[name] = float(value)
    spec = ReportSpec(
        kind=args.kind,
        metric=args.metric,
        fmt=args.format,
        baselines=baselines or None,
        condition_detail=args.condition_detail,
    )
    out_dir = Path(args.out) if args.out else Path(args.results) / "reports"
    path = emit_report(result, spec, out_dir)
    print(f"wrote {path}")
    return EXIT_OK


def _cmd_fixture(args: argparse.Namespace) -> int:
    if args.spec:
        spec = fixture_spec_from_dict(json.loads(Path(args.spec).read_text(encoding="utf-8")))
    else:
        spec = default_fixture_spec()
    if args.per_cell is not None:
        from dataclasses import replace

        spec = replace(spec, per_cell=args.per_cell)
    name = Path(args.spec).stem if args.spec else "fixture"
    dataset = generate_fixture(spec, seed=args.seed, name=name)
    text = serialize_dataset(dataset)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote {len(dataset)} items to {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="probe",
        description="Minimal-pair agreement probing: score datasets against pluggable backends.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_validate = sub.add_parser("validate", help="parse a dataset and report design-cell counts")
    p_validate.add_argument("dataset", help="JSON-lines stimulus file")
    p_validate.add_argument("--json", action="store_true", help="machine-readable report")
    p_validate.set_defaults(func=_cmd_validate)

    p_score = sub.add_parser("score", help="run an experiment from a config file")
    p_score.add_argument("--config", required=True)
    p_score.set_defaults(func=_cmd_score)

    p_sweep = sub.add_parser("sweep", help="run a checkpoint sweep from a config file")
    p_sweep.add_argument("--config", required=True)
    p_sweep.set_defaults(func=_cmd_sweep)

    p_report = sub.add_parser("report", help="render reports from a persisted result set")
    p_report.add_argument("--results", required=True, help="output dir of a previous run")
    p_report.add_argument("--kind", required=True, choices=["overall", "by_condition", "learning_curve", "metric_comparison", "attraction"])
    p_report.add_argument("--metric", default="both", choices=["binary", "pd", "both"])
    p_report.add_argument("--format", default="csv", choices=["csv", "svg"])
    p_report.add_argument("--baseline", action="append", metavar="NAME=VALUE", help="learning-curve reference line (repeatable)")
    p_report.add_argument("--condition-detail", action="store_true", help="split learning curves by length/attractor")
    p_report.add_argument("--out", help="report directory (default: <results>/reports)")
    p_report.set_defaults(func=_cmd_report)

    p_fixture = sub.add_parser("fixture", help="emit a synthetic counterbalanced dataset")
    p_fixture.add_argument("--spec", help="fixture spec JSON (defaults to the built-in lexicon)")
    p_fixture.add_argument("--seed", type=int, default=0)
    p_fixture.add_argument("--per-cell", type=int, default=None, help="override items per condition cell")
    p_fixture.add_argument("--out", help="output path (default: stdout)")
    p_fixture.set_defaults(func=_cmd_fixture)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DatasetError, ConfigError, MetricsError, ReportError, RunnerError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except TransportError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except ScorerError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
