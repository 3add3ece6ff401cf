from __future__ import annotations

import random

import pytest

from medaug.corpus import (
    AnnotatedDocument,
    Corpus,
    EventLabel,
    MentionSpan,
    Split,
    parse_document,
)

FIXTURE_TEXT = "Start Lipitor 20mg daily. Continue metformin."
FIXTURE_ANN = "T1\tDisposition 6 13\tLipitor\nT2\tNoDisposition 35 44\tmetformin"


@pytest.fixture
def fixture_doc() -> AnnotatedDocument:
    return parse_document("d1", FIXTURE_TEXT, FIXTURE_ANN)


@pytest.fixture
def fixture_corpus(fixture_doc: AnnotatedDocument) -> Corpus:
    return Corpus("fixture", {"d1": fixture_doc}, {"d1": Split.TRAIN})


def make_doc(doc_id: str, text: str, spans: list[tuple[int, int, EventLabel]]) -> AnnotatedDocument:
    mentions = tuple(
        sorted(
            (
                MentionSpan(f"T{i + 1}", start, end, text[start:end], label)
                for i, (start, end, label) in enumerate(spans)
            ),
            key=MentionSpan.sort_key,
        )
    )
    return AnnotatedDocument(doc_id, text, mentions)


def random_scorer_corpus(
    rng: random.Random,
    max_docs: int = 20,
    max_mentions: int = 10,
) -> tuple[Corpus, dict[str, list[MentionSpan]], bool]:
    """Random gold corpus plus predictions derived from it by perturbation and noise.

    Returns (corpus, predictions, any_gold_overlap). Gold spans may overlap;
    predictions mix exact copies, boundary shifts, label flips, drops, and
    spurious spans so every matching regime is exercised.
    """
    labels = list(EventLabel)
    documents: dict[str, AnnotatedDocument] = {}
    split: dict[str, Split] = {}
    predictions: dict[str, list[MentionSpan]] = {}
    any_overlap = False
    # Half the corpora keep gold spans disjoint so the greedy==maximum
    # equality guarantee gets exercised on a substantial subset.
    keep_gold_disjoint = rng.random() < 0.5
    for d in range(rng.randint(1, max_docs)):
        doc_id = f"r{d:03d}"
        length = rng.randint(12, 120)
        text = "".join(rng.choice("abcdefghij ") for _ in range(length))
        spans = []
        for _ in range(rng.randint(0, max_mentions)):
            start = rng.randrange(0, length - 1)
            end = rng.randint(start + 1, min(length, start + rng.randint(1, 12)))
            if keep_gold_disjoint and any(start < e and end > s for s, e, _ in spans):
                continue
            spans.append((start, end, rng.choice(labels)))
        doc = make_doc(doc_id, text, spans)
        ordered = doc.mentions
        if any(a.overlaps(b) for a, b in zip(ordered, ordered[1:])):
            any_overlap = True
        documents[doc_id] = doc
        split[doc_id] = Split.TRAIN

        preds: list[MentionSpan] = []
        for m in doc.mentions:
            roll = rng.random()
            if roll < 0.35:
                preds.append(m)
            elif roll < 0.70:
                start = min(max(0, m.start + rng.randint(-3, 3)), length - 1)
                end = min(length, max(start + 1, m.end + rng.randint(-3, 3)))
                label = m.label if rng.random() < 0.7 else rng.choice(labels)
                preds.append(MentionSpan(f"P{len(preds)}", start, end, text[start:end], label))
            elif roll < 0.85:
                pass  # dropped gold
            else:
                preds.append(MentionSpan(f"P{len(preds)}", m.start, m.end, m.surface, rng.choice(labels)))
        for _ in range(rng.randint(0, 3)):  # spurious spans
            start = rng.randrange(0, length - 1)
            end = rng.randint(start + 1, min(length, start + 8))
            preds.append(
                MentionSpan(f"P{len(preds)}", start, end, text[start:end], rng.choice(labels))
            )
        predictions[doc_id] = preds
    return Corpus("random", documents, split), predictions, any_overlap


def as_tuples(spans) -> list[tuple[int, int, str]]:
    return [(m.start, m.end, m.label.value) for m in spans]
