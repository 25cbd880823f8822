"""Acceptance suite: one test per release criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines; every criterion also enforces its own runtime budget.
"""

from __future__ import annotations

import itertools
import random
import time
from contextlib import contextmanager
from pathlib import Path

import pytest

from probe.dataset import default_fixture_spec, generate_fixture, parse_dataset, serialize_dataset, validate_dataset
from probe.metrics import (
    GROUP_DIMENSIONS,
    aggregate,
    attraction_effect,
    binary_value,
    metric_rows,
    pd_value,
)
from probe.runner import (
    MANIFEST_FILE,
    ROWS_FILE,
    SUMMARIES_FILE,
    run_experiment,
    sweep_checkpoints,
    sweep_status,
)
from probe.scorer import ScoreRecord, ScorerDescriptor, ScorerKind, score_batch

from _helpers import stub_command
from test_metrics import brute_force_aggregate
from test_runner import STEPS_17, improving_family, make_config, table_descriptor


@contextmanager
def criterion(name: str, budget_s: float):
    start = time.time()
    try:
        yield
    except Exception:
        print(f"\nACCEPTANCE {name}: FAIL ({time.time() - start:.2f}s)")
        raise
    elapsed = time.time() - start
    print(f"\nACCEPTANCE {name}: PASS ({elapsed:.2f}s)")
    assert elapsed < budget_s, f"{name} exceeded its runtime budget ({elapsed:.2f}s >= {budget_s}s)"


def random_score_pair(rng: random.Random) -> tuple[float, float]:
    """A valid, non-degenerate minimal-pair distribution slice (sum <= 1)."""
    total = 10.0 ** rng.uniform(-8, 0)
    frac = rng.random()
    return total * frac, total * (1.0 - frac)


def test_pd_formula_reproduction():
    with criterion("pd-formula-reproduction", budget_s=5.0):
        value = pd_value(0.1856, 0.0030)
        assert value == pytest.approx(0.9682, abs=5e-4)
        assert f"{value:.3f}" == "0.968"


def test_pd_binary_relationship_suite():
    with criterion("pd-binary-relationship-suite", budget_s=5.0):
        rng = random.Random(20260809)
        checked = 0
        for _ in range(10_000):
            p_c, p_w = random_score_pair(rng)
            record = ScoreRecord("i", "s", p_c, p_w)
            pd = pd_value(record.p_correct, record.p_wrong)
            binary = binary_value(record.p_correct, record.p_wrong)
            assert -1.0 <= pd <= 1.0
            assert (binary == 1) == (pd > 0.0)
            for k in (1e-6, 1.0, 1e3):
                assert abs(pd_value(k * p_c, k * p_w) - pd) <= 1e-9
            assert abs(pd_value(p_w, p_c) + pd) <= 1e-15
            if binary == 1:
                assert binary_value(p_w, p_c) == 0
            assert pd <= binary
            checked += 1
        assert checked == 10_000


def test_metric_comparison_dominance():
    with criterion("metric-comparison-dominance", budget_s=5.0):
        rng = random.Random(99)
        dims_choices = [
            (),
            ("scorer",),
            ("dependency",),
            ("scorer", "dependency", "length", "attractor"),
            ("feature", "value"),
            ("dependency", "length", "attractor"),
        ]
        for seed in range(5):
            dataset = generate_fixture(default_fixture_spec(per_cell=3, max_reuse=4), seed=seed)
            records = []
            for item in dataset:
                p_c, p_w = random_score_pair(rng)
                records.append(ScoreRecord(item.id, f"s{seed % 2}", p_c, p_w))
            rows, _ = metric_rows(records, dataset)
            for dims in dims_choices:
                for summary in aggregate(rows, dims):
                    assert summary.mean_pd <= summary.mean_binary + 1e-12


def test_aggregation_oracle_equivalence():
    with criterion("aggregation-oracle-equivalence", budget_s=10.0):
        dataset = generate_fixture(default_fixture_spec(per_cell=8, max_reuse=4), seed=13)
        assert len(dataset) == 64
        rng = random.Random(7)
        records = [
            ScoreRecord(item.id, f"s{i % 3}", *random_score_pair(rng))
            for i, item in enumerate(dataset)
        ]
        rows, _ = metric_rows(records, dataset)
        checkpointed = [
            r if i % 2 else type(r)(r.item_id, r.scorer_id, 25_000, r.condition, r.binary, r.pd)
            for i, r in enumerate(rows)
        ]
        subset_count = 0
        for size in range(len(GROUP_DIMENSIONS) + 1):
            for dims in itertools.combinations(GROUP_DIMENSIONS, size):
                got = {
                    tuple(sorted(s.group_key.items(), key=lambda kv: kv[0])): (
                        s.n,
                        s.mean_binary,
                        s.mean_pd,
                    )
                    for s in aggregate(checkpointed, dims)
                }
                expected = brute_force_aggregate(checkpointed, dims)
                assert got == expected  # dict equality on floats == bit-for-bit
                subset_count += 1
        assert subset_count == 2 ** len(GROUP_DIMENSIONS)


def test_end_to_end_oracle_run(tmp_path):
    with criterion("end-to-end-oracle-run", budget_s=5.0):
        dataset = generate_fixture(default_fixture_spec(per_cell=1), seed=7)
        ds_path = tmp_path / "fixture.jsonl"
        ds_path.write_text(serialize_dataset(dataset), encoding="utf-8")
        cfg = make_config(tmp_path, ds_path)  # table backend, 0.9/0.1 everywhere
        result = run_experiment(cfg)
        expected_pd = pd_value(0.9, 0.1)
        assert expected_pd == 0.8
        assert len(result.summaries) == 8
        for summary in result.summaries:
            assert summary.mean_binary == 1.0
            assert summary.mean_pd == 0.8
        effects = attraction_effect(aggregate(result.rows, ("dependency", "length", "attractor")))
        assert len(effects) == 4
        for effect in effects:
            assert effect.delta_binary == 0.0
            assert effect.delta_pd == 0.0


def test_sweep_shape_17_steps(tmp_path):
    with criterion("sweep-shape-17-steps", budget_s=10.0):
        dataset = generate_fixture(default_fixture_spec(per_cell=1), seed=7)
        ds_path = tmp_path / "fixture.jsonl"
        ds_path.write_text(serialize_dataset(dataset), encoding="utf-8")
        cfg = make_config(
            tmp_path,
            ds_path,
            scorers=(),
            checkpoints=improving_family(),
            dims=("scorer", "dependency"),
        )
        result = sweep_checkpoints(cfg)
        assert sweep_status(result) == "ok"
        curve_csv = (Path(cfg.output_dir) / "learning_curve.csv").read_text(encoding="utf-8")
        series: dict = {}
        for line in curve_csv.splitlines()[1:]:
            scorer, steps, dep, length, attr, metric, value = line.split(",")
            series.setdefault((scorer, dep, length, attr, metric), []).append(
                (int(steps), float(value))
            )
        assert series
        for points in series.values():
            steps_axis = [s for s, _ in points]
            assert len(steps_axis) == 17
            assert steps_axis == sorted(steps_axis) == list(STEPS_17)
            values = [v for _, v in points]
            assert all(b >= a for a, b in zip(values, values[1:]))


def test_resume_determinism(tmp_path):
    with criterion("resume-determinism", budget_s=10.0):
        dataset = generate_fixture(default_fixture_spec(per_cell=1), seed=7)
        ds_path = tmp_path / "fixture.jsonl"
        ds_path.write_text(serialize_dataset(dataset), encoding="utf-8")
        log = tmp_path / "backend_calls.log"
        external = ScorerDescriptor(
            "ext-stub",
            ScorerKind.EXTERNAL,
            command=stub_command("--name", "ext-stub", "--log", str(log)),
        )
        cfg = make_config(tmp_path, ds_path, scorers=(external,), timeout_s=30.0)

        # simulate a killed run: three records were persisted before the crash
        from probe.scorer import ScoreCache, open_backend

        cache = ScoreCache(cfg.cache_dir)
        with open_backend(external, timeout_s=30.0) as backend:
            for item in dataset.items[:3]:
                cache.put("ext-stub", dataset.source_hash, backend.score(item))
        calls_before = len(log.read_text().splitlines())
        assert calls_before == 3

        result_a = run_experiment(cfg)
        out = Path(cfg.output_dir)
        bytes_a = {name: (out / name).read_bytes() for name in (ROWS_FILE, SUMMARIES_FILE, MANIFEST_FILE)}
        calls_a = len(log.read_text().splitlines())
        assert calls_a == len(dataset)  # only the 5 missing items were re-requested

        result_b = run_experiment(cfg)  # warm rerun, same config, same output dir
        bytes_b = {name: (out / name).read_bytes() for name in (ROWS_FILE, SUMMARIES_FILE, MANIFEST_FILE)}
        calls_b = len(log.read_text().splitlines())
        assert calls_b == calls_a  # zero backend calls on the rerun
        assert bytes_b == bytes_a
        assert result_b.rows == result_a.rows
        assert result_b.summaries == result_a.summaries


def test_dataset_validation_counterbalance(tmp_path):
    with criterion("dataset-validation-counterbalance", budget_s=5.0):
        dataset = generate_fixture(default_fixture_spec(per_cell=4), seed=3)
        report = validate_dataset(dataset)
        assert report.item_count == 32
        assert set(report.cell_counts.values()) == {4}
        assert len(report.cell_counts) == 8
        for feature in ("gender", "number"):
            for share in report.value_ratios[feature].values():
                assert share == 0.5
        assert report.violations == ()

        # paper-scale item counts are format-compatible (content is out of scope)
        big = generate_fixture(default_fixture_spec(per_cell=264, max_reuse=16), seed=5)
        assert len(big) == 2_112
        round_tripped = parse_dataset(serialize_dataset(big), name=big.name)
        assert len(round_tripped) == 2_112
        assert validate_dataset(round_tripped).violations == ()
