#!/usr/bin/env python3
"""Demo experiment: synthetic fixture scored by three built-in baselines.

Generates a counterbalanced fixture, scores it with a uniform scorer, a
frequency scorer, and a preset score table, then renders every report kind
into <out>/reports. Usage: python scripts/run_demo.py [out_dir]
"""

from __future__ import annotations

import sys
from pathlib import Path

from probe.dataset import default_fixture_spec, generate_fixture, serialize_dataset
from probe.report import ReportSpec, emit_report
from probe.runner import ExperimentConfig, run_experiment
from probe.scorer import ScorerDescriptor, ScorerKind, frequency_scorer_from_counts


def main() -> int:
    out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo-output")
    out.mkdir(parents=True, exist_ok=True)

    dataset = generate_fixture(default_fixture_spec(per_cell=4, max_reuse=4), seed=7, name="demo")
    ds_path = out / "demo.jsonl"
    ds_path.write_text(serialize_dataset(dataset), encoding="utf-8")
    print(f"fixture: {len(dataset)} items -> {ds_path}")

    counts: dict[str, int] = {}
    for i, item in enumerate(dataset):
        counts[item.correct_form] = 3 + i % 3
        counts.setdefault(item.wrong_form, 1)
    scorers = (
        ScorerDescriptor("uniform-30k", ScorerKind.UNIFORM, params={"vocab_size": 30_000}),
        frequency_scorer_from_counts(counts, scorer_id="unigram"),
        ScorerDescriptor("preset-table", ScorerKind.TABLE, params={"default": [0.62, 0.31]}),
    )
    cfg = ExperimentConfig(
        datasets=(str(ds_path),),
        scorers=scorers,
        dims=("scorer", "dependency", "length", "attractor"),
        cache_dir=str(out / "cache"),
        output_dir=str(out / "results"),
    )
    result = run_experiment(cfg)
    print(f"scored {len(result.rows)} rows, {result.manifest['reject_tally']} rejects")

    reports_dir = out / "results" / "reports"
    for kind in ("overall", "by_condition", "metric_comparison", "attraction"):
        for fmt in ("csv", "svg"):
            path = emit_report(result, ReportSpec(kind=kind, metric="both", fmt=fmt), reports_dir)
            print(f"  wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
