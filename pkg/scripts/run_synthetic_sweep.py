#!/usr/bin/env python3
"""Synthetic 17-checkpoint sweep (25k..425k by 25k) with improving scores.

Produces the long-format learning-curve table plus CSV/SVG curve reports with
a reference baseline, mirroring a real checkpoint-family evaluation at desk
scale. Usage: python scripts/run_synthetic_sweep.py [out_dir]
"""

from __future__ import annotations

import sys
from pathlib import Path

from probe.dataset import default_fixture_spec, generate_fixture, serialize_dataset
from probe.report import ReportSpec, emit_report
from probe.runner import CheckpointFamily, ExperimentConfig, sweep_checkpoints, sweep_status
from probe.scorer import ScorerDescriptor, ScorerKind

STEPS = tuple(range(25_000, 425_001, 25_000))


def main() -> int:
    out = Path(sys.argv[1] if len(sys.argv) > 1 else "sweep-output")
    out.mkdir(parents=True, exist_ok=True)

    dataset = generate_fixture(default_fixture_spec(per_cell=2, max_reuse=4), seed=11, name="sweep-demo")
    ds_path = out / "sweep-demo.jsonl"
    ds_path.write_text(serialize_dataset(dataset), encoding="utf-8")

    # scores climb from near-chance to a strong preference over the sweep
    by_steps = {
        str(s): {"default": [0.52 + 0.38 * i / (len(STEPS) - 1), 0.48 - 0.38 * i / (len(STEPS) - 1)]}
        for i, s in enumerate(STEPS)
    }
    family = CheckpointFamily(
        template=ScorerDescriptor("check-demo-{steps}", ScorerKind.TABLE, params={"by_steps": by_steps}),
        steps=STEPS,
    )
    cfg = ExperimentConfig(
        datasets=(str(ds_path),),
        checkpoints=family,
        dims=("scorer", "dependency"),
        cache_dir=str(out / "cache"),
        output_dir=str(out / "results"),
    )
    result = sweep_checkpoints(cfg)
    print(f"sweep {sweep_status(result)}: {len(result.rows)} rows over {len(STEPS)} checkpoints")
    print(f"learning-curve table: {Path(cfg.output_dir) / 'learning_curve.csv'}")

    reports_dir = out / "results" / "reports"
    for fmt in ("csv", "svg"):
        spec = ReportSpec(
            kind="learning_curve", metric="both", fmt=fmt, baselines={"reference-model": 0.55}
        )
        print(f"  wrote {emit_report(result, spec, reports_dir)}")
    detail = ReportSpec(kind="learning_curve", metric="pd", fmt="svg", condition_detail=True)
    print(f"  wrote {emit_report(result, detail, reports_dir)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
