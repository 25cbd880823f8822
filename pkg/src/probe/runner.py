"""End-to-end experiment orchestration with caching, resume, and checkpoint sweeps.

A run scores every (scorer x dataset) pair through the cache, joins metrics,
aggregates over the configured dimensions, and persists the result set
atomically. Reruns with a warm cache never touch the backends and reproduce
the persisted bytes exactly (wall-clock timing lives in a separate
``run_meta.json`` sidecar for that reason). Checkpoint sweeps run one step at
a time; a failing step is recorded in the manifest and the sweep continues,
leaving explicit gaps in the learning-curve table.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import re
import time
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

from .dataset import Dataset, DatasetError, condition_from_labels, parse_dataset
from .metrics import (
    GROUP_DIMENSIONS,
    GroupSummary,
    MetricRow,
    MetricsError,
    RejectedScore,
    aggregate,
    metric_rows,
)
from .scorer import (
    ScoreCache,
    ScorerDescriptor,
    ScorerError,
    score_batch,
)

CACHE_DIR_ENV = "PROBE_CACHE_DIR"

ROWS_FILE = "rows.jsonl"
SUMMARIES_FILE = "summaries.jsonl"
MANIFEST_FILE = "manifest.json"
CURVE_FILE = "learning_curve.csv"
RUN_META_FILE = "run_meta.json"
LOCK_FILE = ".probe.lock"

CURVE_COLUMNS = ("scorer", "steps", "dependency", "length", "attractor", "metric", "value")


class RunnerError(RuntimeError):
    """Configuration or orchestration failure (not a backend fault)."""


class ConfigError(RunnerError):
    """The experiment configuration is invalid."""


@dataclass(frozen=True)
class CheckpointFamily:
    """A template descriptor instantiated once per training-step count.

    Every string in the template's command, endpoint, params, and scorer_id
    has ``{steps}`` substituted; params additionally receive the integer under
    the key "steps". Step counts must be strictly increasing positives.
    """

    template: ScorerDescriptor
    steps: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "steps", tuple(int(s) for s in self.steps))
        if not self.steps:
            raise ConfigError("checkpoint family needs at least one step")
        if any(s <= 0 for s in self.steps):
            raise ConfigError("checkpoint steps must be positive")
        if any(b <= a for a, b in zip(self.steps, self.steps[1:])):
            raise ConfigError(f"checkpoint steps must be strictly increasing: {self.steps}")


@dataclass(frozen=True)
class ExperimentConfig:
    datasets: tuple[str, ...]
    scorers: tuple[ScorerDescriptor, ...] = ()
    checkpoints: Optional[CheckpointFamily] = None
    dims: tuple[str, ...] = ("scorer", "dependency")
    cache_dir: str = ".probe-cache"
    output_dir: str = "probe-out"
    concurrency: int = 4
    seed: int = 0
    timeout_s: float = 120.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "datasets", tuple(self.datasets))
        object.__setattr__(self, "scorers", tuple(self.scorers))
        object.__setattr__(self, "dims", tuple(self.dims))
        if not self.datasets:
            raise ConfigError("config needs at least one dataset")
        if not self.scorers and self.checkpoints is None:
            raise ConfigError("config needs at least one scorer or a checkpoint family")
        for dim in self.dims:
            if dim not in GROUP_DIMENSIONS:
                raise ConfigError(f"unknown grouping dimension {dim!r}")
        if self.concurrency < 1:
            raise ConfigError("concurrency must be >= 1")

    def digest(self) -> str:
        """Digest of the experiment identity: inputs, scorers, dims, seed.

        Execution details (cache/output location, concurrency, timeout) are
        excluded so relocating caches or tuning parallelism never disowns
        previous results.
        """
        semantic = {
            "datasets": list(self.datasets),
            "scorers": [s.to_dict() for s in self.scorers],
            "checkpoints": (
                {"template": self.checkpoints.template.to_dict(), "steps": list(self.checkpoints.steps)}
                if self.checkpoints
                else None
            ),
            "dims": list(self.dims),
            "seed": self.seed,
        }
        blob = json.dumps(semantic, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    @classmethod
    def from_dict(cls, data: Mapping) -> "ExperimentConfig":
        try:
            scorers = tuple(ScorerDescriptor.from_dict(s) for s in data.get("scorers", []))
            checkpoints = None
            if data.get("checkpoints") is not None:
                raw = data["checkpoints"]
                checkpoints = CheckpointFamily(
                    template=ScorerDescriptor.from_dict(raw["template"]),
                    steps=tuple(raw["steps"]),
                )
            return cls(
                datasets=tuple(data["datasets"]),
                scorers=scorers,
                checkpoints=checkpoints,
                dims=tuple(data.get("dims", ("scorer", "dependency"))),
                cache_dir=data.get("cache_dir", ".probe-cache"),
                output_dir=data.get("output_dir", "probe-out"),
                concurrency=int(data.get("concurrency", 4)),
                seed=int(data.get("seed", 0)),
                timeout_s=float(data.get("timeout_s", 120.0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"malformed config: {exc!r}") from None


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """Read a JSON config file; PROBE_CACHE_DIR overrides its cache directory."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    cfg = ExperimentConfig.from_dict(data)
    env_cache = os.environ.get(CACHE_DIR_ENV)
    if env_cache:
        cfg = replace(cfg, cache_dir=env_cache)
    return cfg


def family_label(template_scorer_id: str) -> str:
    """The family's display name: the template id with the {steps} slot removed."""
    label = re.sub(r"[@._-]*\{steps\}[@._-]*", "", template_scorer_id)
    return label or template_scorer_id


def instantiate_checkpoint(template: ScorerDescriptor, steps: int) -> ScorerDescriptor:
    """Resolve a family template for one step count.

    ``{steps}`` is substituted in every string field; the scorer_id gets an
    ``@<steps>`` suffix when the template does not place the step count
    itself, so per-step cache shards never collide.
    """

    def subst(value):
        if isinstance(value, str):
            return value.replace("{steps}", str(steps))
        if isinstance(value, Mapping):
            return {k: subst(v) for k, v in value.items()}
        if isinstance(value, (list, tuple)):
            return [subst(v) for v in value]
        return value

    scorer_id = template.scorer_id.replace("{steps}", str(steps))
    if scorer_id == template.scorer_id:
        scorer_id = f"{template.scorer_id}@{steps}"
    params = dict(subst(dict(template.params)))
    params["steps"] = steps
    return ScorerDescriptor(
        scorer_id=scorer_id,
        kind=template.kind,
        command=tuple(subst(list(template.command))) if template.command is not None else None,
        endpoint=subst(template.endpoint) if template.endpoint is not None else None,
        params=params,
    )


# --- result set persistence ----------------------------------------------------


def _row_to_dict(row: MetricRow) -> dict:
    return {
        "item_id": row.item_id,
        "scorer": row.scorer_id,
        "checkpoint": row.checkpoint_steps,
        "dep": row.condition.dependency.value,
        "length": row.condition.length.value,
        "attr": row.condition.attractor.value,
        "feature": row.condition.agreement_feature.value,
        "value": row.condition.target_value.value,
        "binary": row.binary,
        "pd": row.pd,
    }


def _row_from_dict(data: Mapping) -> MetricRow:
    return MetricRow(
        item_id=data["item_id"],
        scorer_id=data["scorer"],
        checkpoint_steps=data["checkpoint"],
        condition=condition_from_labels(
            data["dep"], data["length"], data["attr"], data["feature"], data["value"]
        ),
        binary=data["binary"],
        pd=data["pd"],
    )


def _atomic_write(path: Path, content: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(content, encoding="utf-8")
    os.replace(tmp, path)


@dataclass
class ResultSet:
    """Metric rows, group summaries, and the run manifest, as persisted on disk."""

    rows: list[MetricRow]
    summaries: list[GroupSummary]
    manifest: dict
    curve: Optional[list[dict]] = None
    run_meta: dict = field(default_factory=dict)

    def write(self, output_dir: Union[str, Path]) -> Path:
        """Persist atomically (temp-then-rename per file).

        rows/summaries/manifest/learning-curve bytes are fully determined by
        the config and the scores; run_meta.json carries the wall-clock side.
        """
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        _atomic_write(
            out / ROWS_FILE,
            "".join(
                json.dumps(_row_to_dict(r), sort_keys=True, ensure_ascii=False, separators=(",", ":")) + "\n"
                for r in self.rows
            ),
        )
        _atomic_write(
            out / SUMMARIES_FILE,
            "".join(
                json.dumps(
                    {"key": dict(s.group_key), "n": s.n, "mean_binary": s.mean_binary, "mean_pd": s.mean_pd},
                    sort_keys=True,
                    ensure_ascii=False,
                    separators=(",", ":"),
                )
                + "\n"
                for s in self.summaries
            ),
        )
        _atomic_write(out / MANIFEST_FILE, json.dumps(self.manifest, sort_keys=True, indent=2) + "\n")
        if self.curve is not None:
            lines = [",".join(CURVE_COLUMNS)]
            for row in self.curve:
                # value uses repr so the table reads back bit-exact
                lines.append(
                    ",".join(
                        "" if row[col] is None else (repr(row[col]) if col == "value" else str(row[col]))
                        for col in CURVE_COLUMNS
                    )
                )
            _atomic_write(out / CURVE_FILE, "\n".join(lines) + "\n")
        _atomic_write(out / RUN_META_FILE, json.dumps(self.run_meta, sort_keys=True, indent=2) + "\n")
        return out

    @classmethod
    def read(cls, output_dir: Union[str, Path]) -> "ResultSet":
        out = Path(output_dir)
        manifest_path = out / MANIFEST_FILE
        if not manifest_path.exists():
            raise RunnerError(f"no result set in {out} (missing {MANIFEST_FILE})")
        rows = [
            _row_from_dict(json.loads(line))
            for line in (out / ROWS_FILE).read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]
        summaries = []
        for line in (out / SUMMARIES_FILE).read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            data = json.loads(line)
            summaries.append(
                GroupSummary(
                    group_key=data["key"],
                    n=data["n"],
                    mean_binary=data["mean_binary"],
                    mean_pd=data["mean_pd"],
                )
            )
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        curve = None
        curve_path = out / CURVE_FILE
        if curve_path.exists():
            curve = []
            with curve_path.open("r", encoding="utf-8", newline="") as fh:
                for rec in csv.DictReader(fh):
                    curve.append(
                        {
                            "scorer": rec["scorer"],
                            "steps": int(rec["steps"]),
                            "dependency": rec["dependency"],
                            "length": rec["length"],
                            "attractor": rec["attractor"],
                            "metric": rec["metric"],
                            "value": float(rec["value"]) if rec["value"] != "" else None,
                        }
                    )
        run_meta = {}
        meta_path = out / RUN_META_FILE
        if meta_path.exists():
            run_meta = json.loads(meta_path.read_text(encoding="utf-8"))
        return cls(rows=rows, summaries=summaries, manifest=manifest, curve=curve, run_meta=run_meta)


@contextmanager
def _output_lock(output_dir: Path):
    """One runner per output directory, enforced by an exclusive lock file."""
    output_dir.mkdir(parents=True, exist_ok=True)
    lock_path = output_dir / LOCK_FILE
    try:
        fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise RunnerError(
            f"output dir {output_dir} is locked by another run (stale? remove {lock_path})"
        ) from None
    try:
        os.write(fd, f"{os.getpid()}\n".encode())
        os.close(fd)
        yield
    finally:
        try:
            lock_path.unlink()
        except OSError:
            pass


def _check_existing_digest(output_dir: Path, digest: str) -> None:
    manifest_path = output_dir / MANIFEST_FILE
    if not manifest_path.exists():
        return
    try:
        existing = json.loads(manifest_path.read_text(encoding="utf-8")).get("config_digest")
    except (OSError, json.JSONDecodeError):
        return
    if existing is not None and existing != digest:
        raise RunnerError(
            f"output dir {output_dir} holds results for a different config "
            f"(digest {existing[:12]}… != {digest[:12]}…); refusing to overwrite"
        )


def _load_datasets(cfg: ExperimentConfig) -> list[tuple[str, Dataset]]:
    datasets = []
    for path in cfg.datasets:
        p = Path(path)
        try:
            raw = p.read_bytes()
        except OSError as exc:
            raise ConfigError(f"cannot read dataset {path}: {exc}") from None
        datasets.append((path, parse_dataset(raw, name=p.stem)))
    return datasets


def _score_one(
    descriptor: ScorerDescriptor,
    dataset_path: str,
    dataset: Dataset,
    cache: ScoreCache,
    cfg: ExperimentConfig,
    checkpoint_steps: Optional[int],
) -> tuple[list[MetricRow], list[RejectedScore], dict]:
    records = score_batch(
        descriptor,
        dataset,
        cache,
        oov_policy="record",
        timeout_s=cfg.timeout_s,
        max_inflight=cfg.concurrency,
    )
    rows, rejects = metric_rows(records, dataset, checkpoint_steps=checkpoint_steps)
    handshake = cache.load(descriptor.scorer_id, dataset.source_hash)[1]
    entry = {
        "scorer": descriptor.scorer_id,
        "dataset": dataset_path,
        "steps": checkpoint_steps,
        "status": "ok",
        "items": len(dataset),
        "rejects": len(rejects),
        "handshake": handshake,
        "error": None,
    }
    return rows, rejects, entry


def _manifest(cfg: ExperimentConfig, datasets, entries: list[dict], reject_tally: int) -> dict:
    entries = sorted(
        entries, key=lambda e: (e["scorer"], e["dataset"], -1 if e["steps"] is None else e["steps"])
    )
    return {
        "config_digest": cfg.digest(),
        "seed": cfg.seed,
        "dims": list(cfg.dims),
        "datasets": {path: ds.source_hash for path, ds in datasets},
        "entries": entries,
        "reject_tally": reject_tally,
    }


def _run_meta(started: float) -> dict:
    return {
        "started_at": datetime.fromtimestamp(started, tz=timezone.utc).isoformat(),
        "finished_at": datetime.now(tz=timezone.utc).isoformat(),
        "duration_s": round(time.time() - started, 3),
    }


def run_experiment(cfg: ExperimentConfig) -> ResultSet:
    """Score every (scorer x dataset) pair, aggregate, persist, return the ResultSet.

    Deterministic backends plus an identical config reproduce the persisted
    rows/summaries/manifest bytes exactly, warm or cold cache alike.
    """
    started = time.time()
    output_dir = Path(cfg.output_dir)
    with _output_lock(output_dir):
        _check_existing_digest(output_dir, cfg.digest())
        datasets = _load_datasets(cfg)
        cache = ScoreCache(cfg.cache_dir)
        all_rows: list[MetricRow] = []
        entries: list[dict] = []
        reject_tally = 0
        for descriptor in cfg.scorers:
            for path, dataset in datasets:
                rows, rejects, entry = _score_one(descriptor, path, dataset, cache, cfg, None)
                all_rows.extend(rows)
                reject_tally += len(rejects)
                entries.append(entry)
        summaries = aggregate(all_rows, cfg.dims)
        result = ResultSet(
            rows=all_rows,
            summaries=summaries,
            manifest=_manifest(cfg, datasets, entries, reject_tally),
            curve=None,
            run_meta=_run_meta(started),
        )
        result.write(output_dir)
    return result


def _curve_rows(
    rows: Sequence[MetricRow],
    failed: Sequence[tuple[str, int]],
    cells: Sequence[tuple[str, str, str]],
) -> list[dict]:
    """Long-format learning-curve table; failed steps appear as explicit nulls."""
    curve: list[dict] = []
    sweep_rows = [r for r in rows if r.checkpoint_steps is not None]
    for summary in aggregate(sweep_rows, ("scorer", "checkpoint", "dependency", "length", "attractor")):
        key = summary.group_key
        for metric, value in (("binary", summary.mean_binary), ("pd", summary.mean_pd)):
            curve.append(
                {
                    "scorer": key["scorer"],
                    "steps": key["checkpoint"],
                    "dependency": key["dependency"],
                    "length": key["length"],
                    "attractor": key["attractor"],
                    "metric": metric,
                    "value": value,
                }
            )
    for scorer_id, steps in failed:
        for dep, length, attr in cells:
            for metric in ("binary", "pd"):
                curve.append(
                    {
                        "scorer": scorer_id,
                        "steps": steps,
                        "dependency": dep,
                        "length": length,
                        "attractor": attr,
                        "metric": metric,
                        "value": None,
                    }
                )
    curve.sort(
        key=lambda r: (r["scorer"], r["dependency"], r["length"], r["attractor"], r["metric"], r["steps"])
    )
    return curve


def sweep_checkpoints(cfg: ExperimentConfig) -> ResultSet:
    """Run the experiment once per checkpoint step and emit the learning-curve table.

    A failing step is recorded with status "failed" and the sweep continues;
    its learning-curve points are explicit nulls, never interpolated.
    """
    if cfg.checkpoints is None:
        raise ConfigError("sweep_checkpoints needs a checkpoint family in the config")
    started = time.time()
    output_dir = Path(cfg.output_dir)
    label = family_label(cfg.checkpoints.template.scorer_id)
    with _output_lock(output_dir):
        _check_existing_digest(output_dir, cfg.digest())
        datasets = _load_datasets(cfg)
        cells = sorted({item.condition.cell for _, ds in datasets for item in ds.items})
        cache = ScoreCache(cfg.cache_dir)
        all_rows: list[MetricRow] = []
        entries: list[dict] = []
        failed: list[tuple[str, int]] = []
        reject_tally = 0
        # Static scorers (if any) run once, without a steps column; they get
        # summaries but no learning-curve points.
        for descriptor in cfg.scorers:
            for path, dataset in datasets:
                rows, rejects, entry = _score_one(descriptor, path, dataset, cache, cfg, None)
                all_rows.extend(rows)
                reject_tally += len(rejects)
                entries.append(entry)
        for steps in cfg.checkpoints.steps:
            descriptor = instantiate_checkpoint(cfg.checkpoints.template, steps)
            step_failed = False
            for path, dataset in datasets:
                if step_failed:
                    entries.append(
                        {
                            "scorer": descriptor.scorer_id,
                            "dataset": path,
                            "steps": steps,
                            "status": "failed",
                            "items": len(dataset),
                            "rejects": 0,
                            "handshake": None,
                            "error": "skipped: earlier dataset failed at this step",
                        }
                    )
                    continue
                try:
                    rows, rejects, entry = _score_one(descriptor, path, dataset, cache, cfg, steps)
                except (ScorerError, DatasetError, MetricsError) as exc:
                    step_failed = True
                    failed.append((label, steps))
                    entries.append(
                        {
                            "scorer": descriptor.scorer_id,
                            "dataset": path,
                            "steps": steps,
                            "status": "failed",
                            "items": len(dataset),
                            "rejects": 0,
                            "handshake": None,
                            "error": str(exc),
                        }
                    )
                    continue
                # Rows carry the family label so all steps form one series;
                # the per-step scorer_id still keys the cache shards.
                all_rows.extend(replace(row, scorer_id=label) for row in rows)
                reject_tally += len(rejects)
                entries.append(entry)
        dims = cfg.dims if "checkpoint" in cfg.dims else ("checkpoint",) + cfg.dims
        summaries = aggregate(all_rows, dims)
        result = ResultSet(
            rows=all_rows,
            summaries=summaries,
            manifest=_manifest(cfg, datasets, entries, reject_tally),
            curve=_curve_rows(all_rows, failed, cells),
            run_meta=_run_meta(started),
        )
        result.write(output_dir)
    return result


def sweep_status(result: ResultSet) -> str:
    """"ok" when every manifest entry succeeded, "failed" when none did, else "partial"."""
    statuses = [entry["status"] for entry in result.manifest.get("entries", [])]
    if not statuses or all(s == "ok" for s in statuses):
        return "ok"
    if all(s == "failed" for s in statuses):
        return "failed"
    return "partial"
