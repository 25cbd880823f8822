"""Per-item 0/1 and probability-distance accuracy, grouped means, attraction contrasts.

Binary accuracy is 1 iff the correct form outscores the wrong one (ties count
as failures). Probability-distance (PD) accuracy is the normalized margin
(p_correct - p_wrong) / (p_correct + p_wrong), a value in [-1, 1] that is
invariant under rescaling both probabilities and antisymmetric under swapping
them. The two are sign-coupled: binary = 1 exactly when pd > 0, and pd never
exceeds binary on any row, so grouped PD means never exceed binary means.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Mapping, NamedTuple, Optional, Sequence

from .dataset import Condition, Dataset
from .scorer import ScoreRecord


class MetricsError(ValueError):
    """Invalid metric input: degenerate scores, unknown items or dimensions."""


class DegenerateScoreError(MetricsError):
    """Both probabilities are zero; the pair carries no information."""


GROUP_DIMENSIONS = ("scorer", "checkpoint", "dependency", "length", "attractor", "feature", "value")


def binary_value(p_correct: float, p_wrong: float) -> int:
    if p_correct == 0.0 and p_wrong == 0.0:
        raise DegenerateScoreError("both probabilities are zero")
    return 1 if p_correct > p_wrong else 0


def pd_value(p_correct: float, p_wrong: float) -> float:
    total = p_correct + p_wrong
    if total <= 0.0:
        raise DegenerateScoreError("both probabilities are zero")
    return (p_correct - p_wrong) / total


def binary_accuracy(record: ScoreRecord) -> int:
    """1 iff the correct form received strictly higher probability, else 0."""
    return binary_value(record.p_correct, record.p_wrong)


def pd_accuracy(record: ScoreRecord) -> float:
    """Normalized probability margin within the minimal pair, in [-1, 1]."""
    return pd_value(record.p_correct, record.p_wrong)


@dataclass(frozen=True)
class MetricRow:
    """Both metrics for one scored item, joined with its condition labels."""

    item_id: str
    scorer_id: str
    checkpoint_steps: Optional[int]
    condition: Condition
    binary: int
    pd: float

    def __post_init__(self) -> None:
        if self.binary not in (0, 1):
            raise MetricsError(f"binary must be 0 or 1, got {self.binary!r}")
        if not -1.0 <= self.pd <= 1.0:
            raise MetricsError(f"pd out of range: {self.pd!r}")
        if (self.binary == 1) != (self.pd > 0.0):
            raise MetricsError(f"sign coupling broken: binary={self.binary}, pd={self.pd!r}")


@dataclass(frozen=True)
class RejectedScore:
    item_id: str
    scorer_id: str
    checkpoint_steps: Optional[int]
    reason: str


class MetricRowsResult(NamedTuple):
    rows: list[MetricRow]
    rejects: list[RejectedScore]


def metric_rows(
    records: Sequence[ScoreRecord],
    dataset: Dataset,
    checkpoint_steps: Optional[int] = None,
) -> MetricRowsResult:
    """Join score records to their conditions and compute both metrics per row.

    Degenerate (0, 0) records are excluded from the rows and tallied as
    rejects instead; a record whose item_id is not in the dataset is an error.
    """
    index = dataset.by_id()
    rows: list[MetricRow] = []
    rejects: list[RejectedScore] = []
    for record in records:
        item = index.get(record.item_id)
        if item is None:
            raise MetricsError(f"record for unknown item {record.item_id!r}")
        try:
            binary = binary_accuracy(record)
            pd = pd_accuracy(record)
        except DegenerateScoreError:
            reason = "degenerate_score"
            if record.meta and isinstance(record.meta, Mapping):
                reason = str(record.meta.get("reject", reason))
            rejects.append(
                RejectedScore(record.item_id, record.scorer_id, checkpoint_steps, reason)
            )
            continue
        rows.append(
            MetricRow(
                item_id=record.item_id,
                scorer_id=record.scorer_id,
                checkpoint_steps=checkpoint_steps,
                condition=item.condition,
                binary=binary,
                pd=pd,
            )
        )
    return MetricRowsResult(rows, rejects)


def _dim_value(row: MetricRow, dim: str):
    if dim == "scorer":
        return row.scorer_id
    if dim == "checkpoint":
        return row.checkpoint_steps
    if dim == "dependency":
        return row.condition.dependency.value
    if dim == "length":
        return row.condition.length.value
    if dim == "attractor":
        return row.condition.attractor.value
    if dim == "feature":
        return row.condition.agreement_feature.value
    if dim == "value":
        return row.condition.target_value.value
    raise MetricsError(f"unknown grouping dimension {dim!r}")


@dataclass(frozen=True)
class GroupSummary:
    """Arithmetic means of both metrics over the rows matching ``group_key``."""

    group_key: Mapping[str, object]
    n: int
    mean_binary: float
    mean_pd: float


def aggregate(rows: Sequence[MetricRow], dims: Sequence[str]) -> list[GroupSummary]:
    """Group rows by the given dimensions and return exact per-group means.

    Empty groups are omitted (never emitted as NaN); output is sorted by the
    group key values in dimension order for determinism. Accumulation follows
    row encounter order, so means are reproducible bit for bit.
    """
    dims = tuple(dims)
    for dim in dims:
        if dim not in GROUP_DIMENSIONS:
            raise MetricsError(f"unknown grouping dimension {dim!r}")
    groups: dict[tuple, tuple[list[int], list[float]]] = {}
    for row in rows:
        key = tuple(_dim_value(row, dim) for dim in dims)
        bucket = groups.get(key)
        if bucket is None:
            bucket = groups[key] = ([], [])
        bucket[0].append(row.binary)
        bucket[1].append(row.pd)
    summaries = []
    for key in sorted(groups, key=lambda k: tuple((v is None, v) for v in k)):
        binaries, pds = groups[key]
        n = len(binaries)
        summaries.append(
            GroupSummary(
                group_key=dict(zip(dims, key)),
                n=n,
                mean_binary=sum(binaries) / n,
                mean_pd=sum(pds) / n,
            )
        )
    return summaries


@dataclass(frozen=True)
class AttractionEffect:
    """Accuracy drop attributable to the attractor: absent-mean minus present-mean."""

    dependency: str
    length: str
    delta_binary: float
    delta_pd: float


def attraction_effect(summaries: Sequence[GroupSummary]) -> list[AttractionEffect]:
    """Attractor contrasts from summaries grouped by {dependency, length, attractor}.

    Positive deltas indicate an attraction effect. Raises when either
    attractor level is missing for some (dependency, length) pair.
    """
    expected = {"dependency", "length", "attractor"}
    buckets: dict[tuple[str, str], dict[str, GroupSummary]] = {}
    for summary in summaries:
        if set(summary.group_key) != expected:
            raise MetricsError(
                "attraction_effect expects summaries grouped by dependency, length, attractor; "
                f"got {sorted(summary.group_key)}"
            )
        pair = (str(summary.group_key["dependency"]), str(summary.group_key["length"]))
        buckets.setdefault(pair, {})[str(summary.group_key["attractor"])] = summary
    effects = []
    for pair in sorted(buckets):
        levels = buckets[pair]
        for level in ("absent", "present"):
            if level not in levels:
                raise MetricsError(f"missing attractor level {level!r} for {pair}")
        absent, present = levels["absent"], levels["present"]
        effects.append(
            AttractionEffect(
                dependency=pair[0],
                length=pair[1],
                delta_binary=absent.mean_binary - present.mean_binary,
                delta_pd=absent.mean_pd - present.mean_pd,
            )
        )
    return effects


def bootstrap_interval(
    values: Sequence[float],
    n_resamples: int = 1000,
    seed: int = 0,
    level: float = 0.95,
) -> tuple[float, float]:
    """Seed-controlled percentile bootstrap interval for a mean; report add-on."""
    if not values:
        raise MetricsError("cannot bootstrap an empty sample")
    rng = random.Random(seed)
    n = len(values)
    means = sorted(
        sum(values[rng.randrange(n)] for _ in range(n)) / n for _ in range(n_resamples)
    )
    alpha = (1.0 - level) / 2.0
    lo_idx = min(n_resamples - 1, max(0, math.floor(alpha * n_resamples)))
    hi_idx = min(n_resamples - 1, max(0, math.ceil((1.0 - alpha) * n_resamples) - 1))
    return means[lo_idx], means[hi_idx]
