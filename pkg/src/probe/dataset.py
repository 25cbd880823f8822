"""Minimal-pair agreement stimuli: parsing, validation, filtering, synthesis.

A stimulus is one sentence frame with a single ``{MASK}`` slot, the correct
and incorrect target forms for that slot, and the labels of the factorial
cell it instantiates (dependency x length x attractor presence), plus the
agreement feature under test and the feature value of the correct form.

Datasets are stored as UTF-8 JSON lines, one object per stimulus, with the
required keys ``id``, ``template``, ``correct``, ``wrong``, ``dep``,
``length``, ``attr``, ``feature``, ``value``. Unknown extra keys survive a
parse/serialize round trip.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import IO, Iterable, Iterator, Mapping, Sequence, Union

MASK_PLACEHOLDER = "{MASK}"

REQUIRED_KEYS = ("id", "template", "correct", "wrong", "dep", "length", "attr", "feature", "value")


class DatasetError(ValueError):
    """A stimulus stream, dataset, or fixture spec is structurally invalid."""


class Dependency(str, Enum):
    NOUN_ADJ = "noun_adj"
    SUBJ_VERB = "subj_verb"


class Length(str, Enum):
    SHORT = "short"
    LONG = "long"


class AttractorPresence(str, Enum):
    ABSENT = "absent"
    PRESENT = "present"


class AgreementFeature(str, Enum):
    GENDER = "gender"
    NUMBER = "number"


class TargetValue(str, Enum):
    MASCULINE = "masculine"
    FEMININE = "feminine"
    SINGULAR = "singular"
    PLURAL = "plural"


FEATURE_FOR_DEPENDENCY = {
    Dependency.NOUN_ADJ: AgreementFeature.GENDER,
    Dependency.SUBJ_VERB: AgreementFeature.NUMBER,
}

VALUES_FOR_FEATURE = {
    AgreementFeature.GENDER: (TargetValue.MASCULINE, TargetValue.FEMININE),
    AgreementFeature.NUMBER: (TargetValue.SINGULAR, TargetValue.PLURAL),
}

# The eight cells of the 2x2x2 design, in canonical (report) order:
# absent comes before present within each length.
CONDITION_CELLS: tuple[tuple[Dependency, Length, AttractorPresence], ...] = tuple(
    (dep, length, attr) for dep in Dependency for length in Length for attr in AttractorPresence
)


@dataclass(frozen=True)
class Condition:
    """One cell of the factorial design plus the tested feature and target value."""

    dependency: Dependency
    length: Length
    attractor: AttractorPresence
    agreement_feature: AgreementFeature
    target_value: TargetValue

    def __post_init__(self) -> None:
        expected = FEATURE_FOR_DEPENDENCY[self.dependency]
        if self.agreement_feature is not expected:
            raise DatasetError(
                f"dependency {self.dependency.value!r} requires agreement feature "
                f"{expected.value!r}, got {self.agreement_feature.value!r}"
            )
        if self.target_value not in VALUES_FOR_FEATURE[self.agreement_feature]:
            raise DatasetError(
                f"target value {self.target_value.value!r} is not a "
                f"{self.agreement_feature.value} value"
            )

    @property
    def cell(self) -> tuple[str, str, str]:
        return (self.dependency.value, self.length.value, self.attractor.value)


def condition_from_labels(dep: str, length: str, attr: str, feature: str, value: str) -> Condition:
    """Build a Condition from raw string labels; unknown labels are DatasetErrors."""
    try:
        return Condition(
            dependency=Dependency(dep),
            length=Length(length),
            attractor=AttractorPresence(attr),
            agreement_feature=AgreementFeature(feature),
            target_value=TargetValue(value),
        )
    except ValueError as exc:
        if isinstance(exc, DatasetError):
            raise
        raise DatasetError(f"unknown condition label: {exc}") from None


@dataclass(frozen=True)
class StimulusItem:
    """One minimal-pair stimulus; ``extra`` carries unknown keys from the source file."""

    id: str
    sentence_template: str
    correct_form: str
    wrong_form: str
    condition: Condition
    extra: Mapping[str, object] = field(default_factory=dict)

    def rule_violations(self) -> list[str]:
        """Names of the per-item rules this item breaks; empty when well formed."""
        broken: list[str] = []
        if self.sentence_template.count(MASK_PLACEHOLDER) != 1:
            broken.append("template_mask_count")
        for label, form in (("correct_form", self.correct_form), ("wrong_form", self.wrong_form)):
            if not form or any(ch.isspace() for ch in form):
                broken.append(f"{label}_not_a_word")
        if self.correct_form == self.wrong_form:
            broken.append("forms_identical")
        return broken


def item_record(item: StimulusItem) -> dict:
    """The item's JSON-lines record; extra keys are merged in (never shadowing required ones)."""
    rec: dict = {
        "id": item.id,
        "template": item.sentence_template,
        "correct": item.correct_form,
        "wrong": item.wrong_form,
        "dep": item.condition.dependency.value,
        "length": item.condition.length.value,
        "attr": item.condition.attractor.value,
        "feature": item.condition.agreement_feature.value,
        "value": item.condition.target_value.value,
    }
    for key, value in item.extra.items():
        if key not in rec:
            rec[key] = value
    return rec


def serialize_items(items: Sequence[StimulusItem]) -> str:
    """Canonical serialization: sorted keys, compact separators, one record per line."""
    return "".join(
        json.dumps(item_record(it), sort_keys=True, ensure_ascii=False, separators=(",", ":")) + "\n"
        for it in items
    )


@dataclass(frozen=True)
class Dataset:
    """An ordered, immutable collection of stimuli with a content digest for cache keying."""

    items: tuple[StimulusItem, ...]
    name: str
    source_hash: str = field(init=False, default="")

    def __post_init__(self) -> None:
        object.__setattr__(self, "items", tuple(self.items))
        digest = hashlib.sha256(serialize_items(self.items).encode("utf-8")).hexdigest()
        object.__setattr__(self, "source_hash", digest)

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def by_id(self) -> dict[str, StimulusItem]:
        return {it.id: it for it in self.items}


def serialize_dataset(dataset: Dataset) -> str:
    return serialize_items(dataset.items)


def _decode_source(source: Union[bytes, str, IO[bytes], IO[str]]) -> str:
    if isinstance(source, bytes):
        return source.decode("utf-8")
    if isinstance(source, str):
        return source
    data = source.read()
    return data.decode("utf-8") if isinstance(data, bytes) else data


def parse_dataset(source: Union[bytes, str, IO[bytes], IO[str]], name: str) -> Dataset:
    """Parse a JSON-lines stimulus stream into a Dataset.

    Raises DatasetError with the offending line number for malformed JSON,
    missing keys, unknown condition labels, mask-count violations, malformed
    target forms, and duplicate ids. Input order is preserved; blank lines
    are skipped.
    """
    items: list[StimulusItem] = []
    seen_ids: set[str] = set()
    for lineno, line in enumerate(_decode_source(source).splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"line {lineno}: malformed JSON: {exc.msg}") from None
        if not isinstance(rec, dict):
            raise DatasetError(f"line {lineno}: record is not a JSON object")
        for key in REQUIRED_KEYS:
            if key not in rec:
                raise DatasetError(f"line {lineno}: missing key {key!r}")
            if not isinstance(rec[key], str):
                raise DatasetError(f"line {lineno}: key {key!r} must be a string")
        try:
            condition = condition_from_labels(
                rec["dep"], rec["length"], rec["attr"], rec["feature"], rec["value"]
            )
        except DatasetError as exc:
            raise DatasetError(f"line {lineno}: {exc}") from None
        item = StimulusItem(
            id=rec["id"],
            sentence_template=rec["template"],
            correct_form=rec["correct"],
            wrong_form=rec["wrong"],
            condition=condition,
            extra={k: v for k, v in rec.items() if k not in REQUIRED_KEYS},
        )
        broken = item.rule_violations()
        if broken:
            raise DatasetError(f"line {lineno}: item {item.id!r} violates {', '.join(broken)}")
        if item.id in seen_ids:
            raise DatasetError(f"line {lineno}: duplicate id {item.id!r}")
        seen_ids.add(item.id)
        items.append(item)
    return Dataset(items=tuple(items), name=name)


@dataclass(frozen=True)
class Violation:
    item_id: str
    rule: str


@dataclass(frozen=True)
class ValidationReport:
    """Cell counts for the 2x2x2 design, target-value counterbalance, and rule violations."""

    item_count: int
    cell_counts: Mapping[tuple[str, str, str], int]
    value_counts: Mapping[str, Mapping[str, int]]
    value_ratios: Mapping[str, Mapping[str, float]]
    violations: tuple[Violation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {
            "item_count": self.item_count,
            "cell_counts": {"/".join(cell): n for cell, n in self.cell_counts.items()},
            "value_counts": {f: dict(v) for f, v in self.value_counts.items()},
            "value_ratios": {f: dict(v) for f, v in self.value_ratios.items()},
            "violations": [{"item_id": v.item_id, "rule": v.rule} for v in self.violations],
        }


def validate_dataset(dataset: Dataset) -> ValidationReport:
    """Count items per design cell and per target value, and list rule violations.

    Imbalanced cells are reported, not failed: only per-item rule breaks and
    duplicate ids count as violations.
    """
    cell_counts = {(d.value, l.value, a.value): 0 for d, l, a in CONDITION_CELLS}
    value_counts = {
        feature.value: {value.value: 0 for value in values}
        for feature, values in VALUES_FOR_FEATURE.items()
    }
    violations: list[Violation] = []
    seen_ids: set[str] = set()
    for item in dataset.items:
        cell_counts[item.condition.cell] += 1
        value_counts[item.condition.agreement_feature.value][item.condition.target_value.value] += 1
        for rule in item.rule_violations():
            violations.append(Violation(item.id, rule))
        if item.id in seen_ids:
            violations.append(Violation(item.id, "duplicate_id"))
        seen_ids.add(item.id)
    value_ratios = {
        feature: {
            value: (count / total if (total := sum(counts.values())) else 0.0)
            for value, count in counts.items()
        }
        for feature, counts in value_counts.items()
    }
    return ValidationReport(
        item_count=len(dataset.items),
        cell_counts=cell_counts,
        value_counts=value_counts,
        value_ratios=value_ratios,
        violations=tuple(violations),
    )


def filter_by_vocabulary(dataset: Dataset, vocab: Iterable[str]) -> Dataset:
    """Keep exactly the items whose correct and wrong forms are both in ``vocab``."""
    vocab_set = set(vocab)
    kept = tuple(
        it for it in dataset.items if it.correct_form in vocab_set and it.wrong_form in vocab_set
    )
    return Dataset(items=kept, name=dataset.name)


# --- synthetic fixtures -----------------------------------------------------

_ID_DEP_ABBREV = {Dependency.NOUN_ADJ: "na", Dependency.SUBJ_VERB: "sv"}
_ID_ATTR_ABBREV = {AttractorPresence.ABSENT: "n", AttractorPresence.PRESENT: "y"}


@dataclass(frozen=True)
class DependencyLexicon:
    """Building blocks for one dependency type.

    ``frames`` are sentence templates with ``{head}``, ``{span}``, ``{attr}``
    and ``{MASK}`` slots. ``heads`` and ``attractors`` are keyed by the
    feature value the phrase itself carries; ``pairs`` list the target forms
    in the feature's canonical value order (masculine/feminine or
    singular/plural).
    """

    frames: tuple[str, ...]
    heads: Mapping[str, tuple[str, ...]]
    spans: Mapping[str, tuple[str, ...]]
    attractors: Mapping[str, tuple[str, ...]]
    pairs: tuple[tuple[str, str], ...]


@dataclass(frozen=True)
class FixtureSpec:
    """Per-cell item count plus lexicons for both dependency types."""

    per_cell: int
    lexicons: Mapping[Dependency, DependencyLexicon]
    max_reuse: int = 2

    def __post_init__(self) -> None:
        if self.per_cell < 0:
            raise DatasetError("per_cell must be >= 0")
        if self.max_reuse < 1:
            raise DatasetError("max_reuse must be >= 1")
        for dep in Dependency:
            if dep not in self.lexicons:
                raise DatasetError(f"fixture spec missing lexicon for {dep.value!r}")


def fixture_spec_from_dict(data: Mapping) -> FixtureSpec:
    """Parse a JSON-shaped fixture spec (see ``default_fixture_spec`` for the layout)."""
    try:
        lexicons = {}
        for dep in Dependency:
            raw = data["lexicons"][dep.value]
            lexicons[dep] = DependencyLexicon(
                frames=tuple(raw["frames"]),
                heads={k: tuple(v) for k, v in raw["heads"].items()},
                spans={k: tuple(v) for k, v in raw["spans"].items()},
                attractors={k: tuple(v) for k, v in raw["attractors"].items()},
                pairs=tuple((p[0], p[1]) for p in raw["pairs"]),
            )
        return FixtureSpec(
            per_cell=int(data["per_cell"]),
            lexicons=lexicons,
            max_reuse=int(data.get("max_reuse", 2)),
        )
    except (KeyError, TypeError, IndexError) as exc:
        raise DatasetError(f"malformed fixture spec: {exc!r}") from None


def default_fixture_spec(per_cell: int = 1, max_reuse: int = 2) -> FixtureSpec:
    """A small built-in Galician-style lexicon covering all eight cells."""
    noun_adj = DependencyLexicon(
        frames=("{head} {span}{attr} é {MASK}.",),
        heads={
            "masculine": ("O neno que cantaba", "O rapaz que durmía", "O veciño que paseaba"),
            "feminine": ("A nena que cantaba", "A rapaza que durmía", "A veciña que paseaba"),
        },
        spans={
            "short": ("onte", "alí", "na casa"),
            "long": (
                "na praza vella a carón do río",
                "nunha tenda pequena do barrio antigo",
                "no xardín grande detrás da igrexa",
            ),
        },
        attractors={
            "masculine": ("co seu curmán", "co outro rapaz"),
            "feminine": ("coa súa curmá", "coa outra rapaza"),
        },
        pairs=(("alto", "alta"), ("baixo", "baixa"), ("canso", "cansa"), ("rico", "rica")),
    )
    subj_verb = DependencyLexicon(
        frames=("{head} {span}{attr} {MASK} na televisión.",),
        heads={
            "singular": ("O neno que cantaba", "A avoa que paseaba", "O mestre que durmía"),
            "plural": ("Os nenos que cantaban", "As avoas que paseaban", "Os mestres que durmían"),
        },
        spans={
            "short": ("onte", "alí", "na casa"),
            "long": (
                "na praza vella a carón do río",
                "nunha tenda pequena do barrio antigo",
                "no xardín grande detrás da igrexa",
            ),
        },
        attractors={
            "singular": ("co seu amigo", "coa veciña"),
            "plural": ("cos seus amigos", "coas veciñas"),
        },
        pairs=(("aparece", "aparecen"), ("canta", "cantan"), ("traballa", "traballan"), ("dorme", "dormen")),
    )
    return FixtureSpec(
        per_cell=per_cell,
        lexicons={Dependency.NOUN_ADJ: noun_adj, Dependency.SUBJ_VERB: subj_verb},
        max_reuse=max_reuse,
    )


def _cell_combos(
    lexicon: DependencyLexicon,
    length: Length,
    attr: AttractorPresence,
    value: TargetValue,
    other: TargetValue,
) -> list[tuple]:
    heads = lexicon.heads.get(value.value, ())
    spans = lexicon.spans.get(length.value, ())
    pairs = lexicon.pairs
    if attr is AttractorPresence.PRESENT:
        attractors: tuple[str, ...] = lexicon.attractors.get(other.value, ())
    else:
        attractors = ("",)
    return list(itertools.product(lexicon.frames, heads, spans, attractors, pairs))


def generate_fixture(spec: FixtureSpec, seed: int, name: str = "fixture") -> Dataset:
    """Emit a counterbalanced synthetic dataset covering all eight cells.

    Deterministic for a given (spec, seed). Target values alternate within
    each cell with a per-cell phase shift, so the per-feature split is exactly
    50/50 whenever ``4 * per_cell`` is even. Raises DatasetError when the
    lexicon cannot supply enough distinct combinations within ``max_reuse``.
    """
    rng = random.Random(seed)
    items: list[StimulusItem] = []
    for cell_index, (dep, length, attr) in enumerate(CONDITION_CELLS):
        lexicon = spec.lexicons[dep]
        feature = FEATURE_FOR_DEPENDENCY[dep]
        values = VALUES_FOR_FEATURE[feature]
        wanted = [values[(i + cell_index) % 2] for i in range(spec.per_cell)]
        picks: dict[TargetValue, Iterator[tuple]] = {}
        for value in values:
            need = wanted.count(value)
            if need == 0:
                continue
            other = values[1 - values.index(value)]
            combos = _cell_combos(lexicon, length, attr, value, other)
            if not combos or need > len(combos) * spec.max_reuse:
                raise DatasetError(
                    f"lexicon too small for cell {dep.value}/{length.value}/{attr.value} "
                    f"target {value.value}: need {need}, have {len(combos)} combos "
                    f"x max_reuse {spec.max_reuse}"
                )
            shuffled = combos[:]
            rng.shuffle(shuffled)
            reps = math.ceil(need / len(shuffled))
            picks[value] = iter((shuffled * reps)[:need])
        seq = 0
        for value in wanted:
            frame, head, span, attractor, pair = next(picks[value])
            other = values[1 - values.index(value)]
            template = (
                frame.replace("{head}", head)
                .replace("{span}", span)
                .replace("{attr}", f" {attractor}" if attractor else "")
            )
            correct = pair[values.index(value)]
            wrong = pair[values.index(other)]
            seq += 1
            items.append(
                StimulusItem(
                    id=f"{_ID_DEP_ABBREV[dep]}_{length.value[0]}_{_ID_ATTR_ABBREV[attr]}_{seq:04d}",
                    sentence_template=template,
                    correct_form=correct,
                    wrong_form=wrong,
                    condition=Condition(dep, length, attr, feature, value),
                )
            )
    return Dataset(items=tuple(items), name=name)
