"""Paraphrase augmentation pipeline for span-annotated training data.

Stages: sample sentence units from the train split, render a prompt per unit,
obtain a paraphrase from the configured provider, check that every mention
surface survived (case-insensitive, whitespace-normalized, with multiplicity),
re-align mention offsets onto the candidate text, monitor label drift between
the source sample and the accepted set, and merge accepted candidates back in
as new train documents.

Every provider response is kept verbatim in an AugmentationRecord regardless
of verdict; the record log is JSONL with a fixed key order, written in
(source doc, unit start) order so runs are bit-identical no matter how many
workers were used.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import NamedTuple

from .corpus import Corpus, EventLabel, MentionSpan, Split, atomic_write_text
from .providers import ParaphraseProvider, ProviderError, TokenBucket, call_with_retries
from .textproc import SentenceUnit, split_sentences

RECORD_SCHEMA_VERSION = 1

STATUS_ACCEPTED = "accepted"
STATUS_MISSING_ENTITY = "rejected_missing_entity"
STATUS_REALIGN_FAILURE = "rejected_realign_failure"
STATUS_PROVIDER_ERROR = "provider_error"


class AugmentError(Exception):
    pass


class NoEligibleUnits(AugmentError):
    pass


class EmptyAcceptedSet(AugmentError):
    pass


class IdCollision(AugmentError):
    def __init__(self, doc_id: str):
        super().__init__(f"augmented document id {doc_id!r} already exists")
        self.doc_id = doc_id


class RealignFailure(AugmentError):
    def __init__(self, mention_id: str, surface: str):
        super().__init__(f"no free occurrence of {surface!r} left for {mention_id}")
        self.mention_id = mention_id


@dataclass(frozen=True)
class AugmentConfig:
    """Declarative pipeline configuration; ``seed`` is mandatory for reproducibility."""

    seed: int
    fraction: float = 0.10
    max_retries_per_unit: int = 2
    paraphrases_per_unit: int = 1
    drift_threshold: float = 0.2
    prompt_template_id: str = "default"
    template_dir: str | None = None
    provider: str = "mock"
    endpoint: str | None = None
    model: str | None = None
    api_key_env: str = "MEDAUG_API_KEY"
    temperature: float = 0.7
    concurrency: int = 1
    rate_limit_per_sec: float | None = None
    http_max_retries: int = 3
    input_dir: str | None = None

    def __post_init__(self) -> None:
        if not 0 < self.fraction <= 1:
            raise ValueError("fraction must be in (0, 1]")
        if not 0 <= self.drift_threshold <= 2:
            raise ValueError("drift threshold must be in [0, 2]")
        if self.max_retries_per_unit < 0:
            raise ValueError("retries must be non-negative")
        if self.paraphrases_per_unit < 1:
            raise ValueError("paraphrases_per_unit must be at least 1")
        if self.concurrency < 1:
            raise ValueError("concurrency must be at least 1")


def load_config(path: str | Path) -> AugmentConfig:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if "seed" not in raw:
        raise ValueError("config must set a seed")
    known = {f for f in AugmentConfig.__dataclass_fields__}
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return AugmentConfig(**raw)


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    body: str

    def __post_init__(self) -> None:
        if "{TEXT}" not in self.body or "{ENTITY_LIST}" not in self.body:
            raise ValueError(
                f"template {self.template_id!r} must contain {{TEXT}} and {{ENTITY_LIST}}"
            )


def load_template(template_id: str, template_dir: str | None = None) -> PromptTemplate:
    """Load a template by id from a directory, falling back to the packaged set."""
    if template_dir is not None:
        path = Path(template_dir) / f"{template_id}.txt"
        return PromptTemplate(template_id, path.read_text(encoding="utf-8"))
    body = resources.files("medaug").joinpath(f"templates/{template_id}.txt").read_text("utf-8")
    return PromptTemplate(template_id, body)


_PLACEHOLDER = re.compile(r"\{TEXT\}|\{ENTITY_LIST\}")


def render_prompt(template: PromptTemplate, unit: SentenceUnit) -> str:
    """Substitute the two placeholder tokens; braces in unit text pass through untouched."""
    entity_list = ", ".join(m.surface for m in unit.mentions)
    values = {"{TEXT}": unit.text, "{ENTITY_LIST}": entity_list}
    rendered = _PLACEHOLDER.sub(lambda m: values[m.group(0)], template.body)
    assert rendered
    return rendered


def _half_up(x: Fraction) -> int:
    return int(x + Fraction(1, 2))


def eligible_units(corpus: Corpus) -> list[SentenceUnit]:
    """Mention-bearing sentence units of the train split, in (doc, start) order."""
    units: list[SentenceUnit] = []
    for doc in corpus.docs_in_split(Split.TRAIN):
        units.extend(u for u in split_sentences(doc) if u.mentions)
    return units


def sample_size(fraction: float, n: int) -> int:
    return max(1, _half_up(Fraction(fraction) * n))


def sample_units(corpus: Corpus, cfg: AugmentConfig) -> list[SentenceUnit]:
    """Draw max(1, round(fraction*N)) units without replacement, seeded."""
    import random

    units = eligible_units(corpus)
    if not units:
        raise NoEligibleUnits("train split has no mention-bearing sentence units")
    k = sample_size(cfg.fraction, len(units))
    rng = random.Random(cfg.seed)
    chosen = sorted(rng.sample(range(len(units)), k))
    return [units[i] for i in chosen]


class EntityCheck(NamedTuple):
    eligible: bool
    missing: tuple[str, ...]


def _normalize(text: str) -> str:
    return " ".join(text.lower().split())


def validate_candidate(unit: SentenceUnit, candidate: str) -> EntityCheck:
    """Eligible iff every mention surface occurs in the candidate at least as
    often as in the unit (case-insensitive, whitespace-normalized)."""
    haystack = _normalize(candidate)
    required = Counter(_normalize(m.surface) for m in unit.mentions)
    first_casing = {}
    for m in unit.mentions:
        first_casing.setdefault(_normalize(m.surface), m.surface)
    missing = tuple(
        first_casing[surface]
        for surface, count in sorted(required.items())
        if haystack.count(surface) < count
    )
    return EntityCheck(not missing, missing)


def _surface_pattern(surface: str) -> re.Pattern:
    return re.compile(r"\s+".join(re.escape(w) for w in surface.split()), re.IGNORECASE)


def realign_entities(unit: SentenceUnit, candidate: str) -> list[MentionSpan]:
    """Bind mentions left-to-right to the leftmost unused occurrence of their surface.

    Occurrences are case-insensitive and whitespace-flexible; the new span keeps
    the candidate's casing and the source label.
    """
    used: list[tuple[int, int]] = []
    realigned: list[MentionSpan] = []
    for m in unit.mentions:
        bound = None
        for match in _surface_pattern(m.surface).finditer(candidate):
            if all(match.start() >= e or match.end() <= s for s, e in used):
                bound = (match.start(), match.end())
                break
        if bound is None:
            raise RealignFailure(m.mention_id, m.surface)
        used.append(bound)
        realigned.append(
            replace(
                m,
                start=bound[0],
                end=bound[1],
                surface=candidate[bound[0] : bound[1]],
            )
        )
    return realigned


@dataclass(frozen=True)
class AugmentationRecord:
    """Provenance of one provider attempt for one sampled unit."""

    record_id: str
    source_doc_id: str
    unit_start: int
    unit_end: int
    attempt: int
    prompt: str
    candidate_text: str
    status: str
    missing: tuple[str, ...] = ()
    error_kind: str | None = None
    realigned_mentions: tuple[MentionSpan, ...] = ()

    def to_json_line(self) -> str:
        payload = {
            "schema_version": RECORD_SCHEMA_VERSION,
            "record_id": self.record_id,
            "source_doc_id": self.source_doc_id,
            "unit_start": self.unit_start,
            "unit_end": self.unit_end,
            "attempt": self.attempt,
            "prompt": self.prompt,
            "candidate_text": self.candidate_text,
            "status": self.status,
            "missing": list(self.missing),
            "error_kind": self.error_kind,
            "realigned_mentions": [
                {
                    "mention_id": m.mention_id,
                    "start": m.start,
                    "end": m.end,
                    "surface": m.surface,
                    "label": "Drug" if m.from_drug_label else m.label.value,
                }
                for m in self.realigned_mentions
            ],
        }
        return json.dumps(payload, ensure_ascii=False)


def record_from_json_line(line: str) -> AugmentationRecord:
    data = json.loads(line)
    from .corpus import parse_label

    mentions = []
    for m in data["realigned_mentions"]:
        label, from_drug = parse_label(m["label"])
        mentions.append(
            MentionSpan(m["mention_id"], m["start"], m["end"], m["surface"], label, from_drug)
        )
    return AugmentationRecord(
        record_id=data["record_id"],
        source_doc_id=data["source_doc_id"],
        unit_start=data["unit_start"],
        unit_end=data["unit_end"],
        attempt=data["attempt"],
        prompt=data["prompt"],
        candidate_text=data["candidate_text"],
        status=data["status"],
        missing=tuple(data["missing"]),
        error_kind=data["error_kind"],
        realigned_mentions=tuple(mentions),
    )


def write_records(records: list[AugmentationRecord], path: str | Path) -> None:
    atomic_write_text(path, "".join(r.to_json_line() + "\n" for r in records))


def read_records(path: str | Path) -> list[AugmentationRecord]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [record_from_json_line(line) for line in lines if line.strip()]


@dataclass(frozen=True)
class DriftReport:
    source_dist: dict[EventLabel, float]
    accepted_dist: dict[EventLabel, float]
    l1_distance: float
    verdict: str  # pass | warn | fail
    threshold: float

    def to_dict(self) -> dict:
        return {
            "source_dist": {k.value: v for k, v in self.source_dist.items()},
            "accepted_dist": {k.value: v for k, v in self.accepted_dist.items()},
            "l1_distance": self.l1_distance,
            "verdict": self.verdict,
            "threshold": self.threshold,
        }


def _label_distribution(labels: list[EventLabel]) -> dict[EventLabel, float]:
    counts = Counter(labels)
    total = sum(counts.values())
    return {label: counts.get(label, 0) / total for label in EventLabel}


def monitor_drift(
    source_units: list[SentenceUnit],
    accepted_records: list[AugmentationRecord],
    threshold: float = 0.2,
) -> DriftReport:
    """Compare label proportions (by mention counts) between source and accepted sets."""
    accepted_labels = [m.label for r in accepted_records for m in r.realigned_mentions]
    if not accepted_labels:
        raise EmptyAcceptedSet("no accepted mentions to monitor")
    source_labels = [m.label for u in source_units for m in u.mentions]
    source_dist = _label_distribution(source_labels)
    accepted_dist = _label_distribution(accepted_labels)
    l1 = sum(abs(source_dist[k] - accepted_dist[k]) for k in EventLabel)
    if l1 <= threshold / 2:
        verdict = "pass"
    elif l1 <= threshold:
        verdict = "warn"
    else:
        verdict = "fail"
    return DriftReport(source_dist, accepted_dist, l1, verdict, threshold)


def merge_corpus(original: Corpus, accepted: list[AugmentationRecord]) -> Corpus:
    """Append each accepted record as a new train-split document ``<source>#aug<k>``."""
    from .corpus import AnnotatedDocument

    documents = dict(original.documents)
    split = dict(original.split)
    per_source: Counter[str] = Counter()
    ordered = sorted(accepted, key=lambda r: (r.source_doc_id, r.unit_start, r.attempt))
    for record in ordered:
        if record.status != STATUS_ACCEPTED:
            raise AugmentError(f"record {record.record_id} is not accepted")
        per_source[record.source_doc_id] += 1
        doc_id = f"{record.source_doc_id}#aug{per_source[record.source_doc_id]}"
        if doc_id in documents:
            raise IdCollision(doc_id)
        mentions = tuple(sorted(record.realigned_mentions, key=MentionSpan.sort_key))
        documents[doc_id] = AnnotatedDocument(doc_id, record.candidate_text, mentions, augmented=True)
        split[doc_id] = Split.TRAIN
    return Corpus(name=original.name, documents=documents, split=split)


@dataclass
class AugmentStats:
    eligible: int = 0
    sampled: int = 0
    generated: int = 0
    accepted: int = 0
    rejected_missing_entity: int = 0
    rejected_realign_failure: int = 0
    provider_errors: int = 0
    rejected_units: int = 0


@dataclass
class AugmentOutcome:
    records: list[AugmentationRecord]
    accepted: list[AugmentationRecord]
    drift: DriftReport | None
    stats: AugmentStats
    sampled_units: list[SentenceUnit] = field(default_factory=list)


def _augment_unit(
    unit: SentenceUnit,
    template: PromptTemplate,
    provider: ParaphraseProvider,
    cfg: AugmentConfig,
    bucket: TokenBucket | None,
) -> list[AugmentationRecord]:
    """Collect up to ``paraphrases_per_unit`` accepted paraphrases for one unit.

    The attempt counter runs across the whole unit so every provider ask is
    distinguishable; each wanted paraphrase gets at most
    ``max_retries_per_unit + 1`` asks before the unit gives up on it.
    """
    records: list[AugmentationRecord] = []
    prompt = render_prompt(template, unit)
    base_id = f"{unit.doc_id}:{unit.start}-{unit.end}"
    attempt = 0
    for _ in range(cfg.paraphrases_per_unit):
        accepted = False
        for _ in range(cfg.max_retries_per_unit + 1):
            attempt += 1
            record_id = f"{base_id}#a{attempt}"
            try:
                candidate = call_with_retries(
                    provider,
                    prompt,
                    unit=unit,
                    attempt=attempt,
                    max_retries=cfg.http_max_retries,
                    bucket=bucket,
                )
            except ProviderError as err:
                records.append(
                    AugmentationRecord(
                        record_id, unit.doc_id, unit.start, unit.end, attempt,
                        prompt, "", STATUS_PROVIDER_ERROR, error_kind=err.kind,
                    )
                )
                continue
            check = validate_candidate(unit, candidate)
            if not check.eligible:
                records.append(
                    AugmentationRecord(
                        record_id, unit.doc_id, unit.start, unit.end, attempt,
                        prompt, candidate, STATUS_MISSING_ENTITY, missing=check.missing,
                    )
                )
                continue
            try:
                realigned = realign_entities(unit, candidate)
            except RealignFailure:
                records.append(
                    AugmentationRecord(
                        record_id, unit.doc_id, unit.start, unit.end, attempt,
                        prompt, candidate, STATUS_REALIGN_FAILURE,
                    )
                )
                continue
            records.append(
                AugmentationRecord(
                    record_id, unit.doc_id, unit.start, unit.end, attempt,
                    prompt, candidate, STATUS_ACCEPTED,
                    realigned_mentions=tuple(realigned),
                )
            )
            accepted = True
            break
        if not accepted:
            break  # a unit that cannot produce one paraphrase will not produce more
    return records


def run_augmentation(
    corpus: Corpus,
    cfg: AugmentConfig,
    provider: ParaphraseProvider,
) -> AugmentOutcome:
    """Run the full sample-generate-validate-monitor pipeline.

    Provider calls may run concurrently (``cfg.concurrency``); the record list
    is sorted by (source doc, unit start, attempt) afterwards so the output is
    independent of completion order.
    """
    template = load_template(cfg.prompt_template_id, cfg.template_dir)
    units = eligible_units(corpus)
    if not units:
        raise NoEligibleUnits("train split has no mention-bearing sentence units")
    sampled = sample_units(corpus, cfg)
    bucket = (
        TokenBucket(cfg.rate_limit_per_sec) if cfg.rate_limit_per_sec else None
    )

    stats = AugmentStats(eligible=len(units), sampled=len(sampled))
    if cfg.concurrency == 1:
        per_unit = [_augment_unit(u, template, provider, cfg, bucket) for u in sampled]
    else:
        with ThreadPoolExecutor(max_workers=cfg.concurrency) as pool:
            per_unit = list(
                pool.map(lambda u: _augment_unit(u, template, provider, cfg, bucket), sampled)
            )

    records = sorted(
        (r for group in per_unit for r in group),
        key=lambda r: (r.source_doc_id, r.unit_start, r.attempt),
    )
    for record in records:
        if record.status == STATUS_ACCEPTED:
            stats.accepted += 1
        elif record.status == STATUS_MISSING_ENTITY:
            stats.rejected_missing_entity += 1
        elif record.status == STATUS_REALIGN_FAILURE:
            stats.rejected_realign_failure += 1
        else:
            stats.provider_errors += 1
        if record.candidate_text:
            stats.generated += 1
    accepted = [r for r in records if r.status == STATUS_ACCEPTED]
    accepted_unit_keys = {(r.source_doc_id, r.unit_start) for r in accepted}
    stats.rejected_units = len(sampled) - len(accepted_unit_keys)

    drift = (
        monitor_drift(sampled, accepted, cfg.drift_threshold) if accepted else None
    )
    return AugmentOutcome(records, accepted, drift, stats, sampled_units=sampled)
