"""Targeted agreement probing: datasets, scorers, metrics, runs, reports."""

from .dataset import (
    AgreementFeature,
    AttractorPresence,
    Condition,
    Dataset,
    DatasetError,
    Dependency,
    FixtureSpec,
    Length,
    StimulusItem,
    TargetValue,
    ValidationReport,
    default_fixture_spec,
    filter_by_vocabulary,
    generate_fixture,
    parse_dataset,
    serialize_dataset,
    validate_dataset,
)
from .metrics import (
    AttractionEffect,
    DegenerateScoreError,
    GroupSummary,
    MetricRow,
    MetricsError,
    aggregate,
    attraction_effect,
    binary_accuracy,
    metric_rows,
    pd_accuracy,
)
from .runner import (
    CheckpointFamily,
    ConfigError,
    ExperimentConfig,
    ResultSet,
    RunnerError,
    load_config,
    run_experiment,
    sweep_checkpoints,
)
from .report import ReportSpec, emit_report
from .scorer import (
    OutOfVocabularyError,
    ScoreCache,
    ScoreRecord,
    ScorerDescriptor,
    ScorerError,
    ScorerKind,
    TransportError,
    frequency_scorer_from_counts,
    score_batch,
    score_item,
)

__version__ = "0.1.0"
