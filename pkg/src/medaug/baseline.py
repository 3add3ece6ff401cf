"""Dependency-free reference tagger and synthetic corpus generator.

The tagger pairs a gazetteer (distinct lowercased mention surfaces harvested
from a training split) with ordered trigger rules that assign an event label
from a small window of left context. It exists so the whole pipeline and the
scorer can be exercised end to end without any ML runtime; the synthetic
generator stands in for the access-restricted clinical data by emitting
templated sentences whose gold labels are consistent with the trigger words
actually rendered.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .corpus import AnnotatedDocument, Corpus, EventLabel, MentionSpan, Split
from .textproc import Token, tokenize

DISPOSITION_TRIGGERS = frozenset(
    {"start", "begin", "increase", "decrease", "stop", "discontinue", "switch", "hold"}
)
NO_DISPOSITION_TRIGGERS = frozenset({"continue", "takes", "remains", "maintain"})

DEFAULT_MEDICATIONS = (
    "Lipitor",
    "metformin",
    "aspirin",
    "warfarin",
    "insulin",
    "insulin glargine",
    "atorvastatin",
    "lisinopril",
    "metoprolol",
    "prednisone",
    "furosemide",
    "omeprazole",
)

_NEUTRAL_CONTEXTS = (
    "Medication list shows",
    "Home medications include",
    "Patient reports using",
    "Notes mention",
)
_DOSES = ("10mg", "20mg", "40mg", "81mg", "100mg", "250mg", "500mg", "15units")
_FREQUENCIES = ("daily", "nightly", "weekly")


class BaselineError(Exception):
    pass


class EmptyTrainingSet(BaselineError):
    pass


def _normalize_surface(surface: str) -> str:
    return " ".join(surface.lower().split())


@dataclass(frozen=True)
class Gazetteer:
    entries: frozenset[str]
    built_from: str

    def __contains__(self, surface: str) -> bool:
        return _normalize_surface(surface) in self.entries

    def max_phrase_tokens(self) -> int:
        return max(len(tokenize(entry)) for entry in self.entries)


@dataclass(frozen=True)
class Rule:
    lexicon: frozenset[str]
    window: int
    label: EventLabel


@dataclass(frozen=True)
class RuleSet:
    """Ordered label rules; the first rule with a trigger in the window wins."""

    rules: tuple[Rule, ...]
    default: EventLabel = EventLabel.UNDETERMINED


def default_ruleset(window: int = 3) -> RuleSet:
    return RuleSet(
        rules=(
            Rule(DISPOSITION_TRIGGERS, window, EventLabel.DISPOSITION),
            Rule(NO_DISPOSITION_TRIGGERS, window, EventLabel.NO_DISPOSITION),
        )
    )


def build_gazetteer(train: Corpus) -> Gazetteer:
    """Collect distinct lowercased mention surfaces from the train split only."""
    entries = {
        _normalize_surface(m.surface)
        for doc in train.docs_in_split(Split.TRAIN)
        for m in doc.mentions
    }
    entries = {e for e in entries if e and "\n" not in e}
    if not entries:
        raise EmptyTrainingSet(f"corpus {train.name!r} has no train-split mentions")
    return Gazetteer(frozenset(entries), built_from=train.name)


def _classify(tokens: list[Token], first_index: int, rules: RuleSet) -> EventLabel:
    for rule in rules.rules:
        near = {t.surface.lower() for t in tokens[max(0, first_index - rule.window) : first_index]}
        if near & rule.lexicon:
            return rule.label
    return rules.default


def tag(text: str, gazetteer: Gazetteer, rules: RuleSet) -> list[MentionSpan]:
    """Predict mention spans by longest-first gazetteer lookup over token n-grams."""
    tokens = tokenize(text)
    max_len = gazetteer.max_phrase_tokens()
    spans: list[MentionSpan] = []
    i = 0
    while i < len(tokens):
        matched = False
        for length in range(min(max_len, len(tokens) - i), 0, -1):
            start = tokens[i].start
            end = tokens[i + length - 1].end
            if text[start:end] in gazetteer:
                label = _classify(tokens, i, rules)
                spans.append(
                    MentionSpan(f"T{len(spans) + 1}", start, end, text[start:end], label)
                )
                i += length
                matched = True
                break
        if not matched:
            i += 1
    return spans


def tag_document(doc: AnnotatedDocument, gazetteer: Gazetteer, rules: RuleSet) -> list[MentionSpan]:
    return tag(doc.text, gazetteer, rules)


@dataclass(frozen=True)
class SyntheticSpec:
    """Deterministic recipe for a stand-in corpus; the seed fixes it exactly."""

    n_documents: int = 200
    sentences_per_doc: tuple[int, int] = (3, 8)
    medications: tuple[str, ...] = DEFAULT_MEDICATIONS
    label_mix: dict[EventLabel, float] = field(
        default_factory=lambda: {
            EventLabel.DISPOSITION: 0.35,
            EventLabel.NO_DISPOSITION: 0.45,
            EventLabel.UNDETERMINED: 0.20,
        }
    )
    split_mix: tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 0
    name: str = "synthetic"

    def __post_init__(self) -> None:
        if abs(sum(self.label_mix.values()) - 1.0) > 1e-9:
            raise ValueError("label mix proportions must sum to 1")
        if abs(sum(self.split_mix) - 1.0) > 1e-9:
            raise ValueError("split proportions must sum to 1")
        if self.n_documents < 1:
            raise ValueError("need at least one document")


def _quota(total: int, proportions: list[float]) -> list[int]:
    """Largest-remainder allocation of ``total`` into integer counts."""
    raw = [total * p for p in proportions]
    counts = [int(r) for r in raw]
    remainders = sorted(range(len(raw)), key=lambda i: (raw[i] - counts[i], -i), reverse=True)
    for i in remainders[: total - sum(counts)]:
        counts[i] += 1
    return counts


def _sentence(
    rng: random.Random, label: EventLabel, drug: str
) -> tuple[str, int, int]:
    """Render one sentence; returns (text, drug_start, drug_end)."""
    if label is EventLabel.DISPOSITION:
        lead = rng.choice(sorted(DISPOSITION_TRIGGERS)).capitalize()
    elif label is EventLabel.NO_DISPOSITION:
        trigger = rng.choice(sorted(NO_DISPOSITION_TRIGGERS))
        lead = {"takes": "Patient takes", "remains": "Remains on"}.get(
            trigger, trigger.capitalize()
        )
    else:
        lead = rng.choice(_NEUTRAL_CONTEXTS)
    dose = rng.choice(_DOSES)
    freq = rng.choice(_FREQUENCIES)
    prefix = f"{lead} "
    text = f"{prefix}{drug} {dose} {freq}."
    return text, len(prefix), len(prefix) + len(drug)


def generate_synthetic(spec: SyntheticSpec) -> Corpus:
    """Build a corpus whose gold labels match the trigger words emitted.

    Every medication in the vocabulary is guaranteed to occur in the train
    split, so a gazetteer built from train covers dev and test too.
    """
    rng = random.Random(spec.seed)
    n = spec.n_documents
    sent_counts = [rng.randint(*spec.sentences_per_doc) for _ in range(n)]
    total_sentences = sum(sent_counts)

    labels = list(spec.label_mix)
    label_schedule: list[EventLabel] = []
    for label, count in zip(labels, _quota(total_sentences, [spec.label_mix[l] for l in labels])):
        label_schedule.extend([label] * count)
    rng.shuffle(label_schedule)

    n_train, n_dev, n_test = _quota(n, list(spec.split_mix))
    split_schedule = [Split.TRAIN] * n_train + [Split.DEV] * n_dev + [Split.TEST] * n_test
    rng.shuffle(split_schedule)

    pending_coverage = list(spec.medications)
    documents: dict[str, AnnotatedDocument] = {}
    split: dict[str, Split] = {}
    width = len(str(n))
    cursor = 0
    for doc_index in range(n):
        doc_id = f"synth-{doc_index + 1:0{width}d}"
        doc_split = split_schedule[doc_index]
        pieces: list[str] = []
        mentions: list[MentionSpan] = []
        offset = 0
        for _ in range(sent_counts[doc_index]):
            label = label_schedule[cursor]
            cursor += 1
            if doc_split is Split.TRAIN and pending_coverage:
                drug = pending_coverage.pop(0)
            else:
                drug = rng.choice(spec.medications)
            sentence, d_start, d_end = _sentence(rng, label, drug)
            if pieces:
                sep = rng.choice((" ", "\n"))
                pieces.append(sep)
                offset += len(sep)
            pieces.append(sentence)
            mentions.append(
                MentionSpan(
                    f"T{len(mentions) + 1}",
                    offset + d_start,
                    offset + d_end,
                    drug,
                    label,
                )
            )
            offset += len(sentence)
        text = "".join(pieces)
        documents[doc_id] = AnnotatedDocument(
            doc_id, text, tuple(sorted(mentions, key=MentionSpan.sort_key))
        )
        split[doc_id] = doc_split
    return Corpus(name=spec.name, documents=documents, split=split)
