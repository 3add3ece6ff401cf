from __future__ import annotations

import pytest

from medaug.baseline import (
    DEFAULT_MEDICATIONS,
    EmptyTrainingSet,
    Rule,
    RuleSet,
    SyntheticSpec,
    build_gazetteer,
    default_ruleset,
    generate_synthetic,
    tag,
)
from medaug.corpus import (
    AnnotatedDocument,
    Corpus,
    EventLabel,
    MentionSpan,
    Split,
    serialize_annotations,
    validate_corpus,
)
from medaug.evalkit import TaskMode, score


def _corpus_with(mention_surfaces: dict[str, list[str]], splits: dict[str, Split]) -> Corpus:
    documents = {}
    for doc_id, surfaces in mention_surfaces.items():
        text = " ".join(surfaces) if surfaces else "no mentions here"
        mentions = []
        offset = 0
        for i, surface in enumerate(surfaces):
            start = text.index(surface, offset)
            mentions.append(
                MentionSpan(f"T{i + 1}", start, start + len(surface), surface, EventLabel.UNDETERMINED)
            )
            offset = start + len(surface)
        documents[doc_id] = AnnotatedDocument(doc_id, text, tuple(mentions))
    return Corpus("c", documents, splits)


def test_gazetteer_dedupes_lowercased_surfaces() -> None:
    corpus = _corpus_with(
        {"a": ["Lipitor", "metformin", "Lipitor"]}, {"a": Split.TRAIN}
    )
    gazetteer = build_gazetteer(corpus)
    assert gazetteer.entries == frozenset({"lipitor", "metformin"})


def test_gazetteer_ignores_dev_and_test_mentions() -> None:
    corpus = _corpus_with(
        {"a": ["Lipitor"], "b": ["warfarin"], "c": ["aspirin"]},
        {"a": Split.TRAIN, "b": Split.DEV, "c": Split.TEST},
    )
    assert build_gazetteer(corpus).entries == frozenset({"lipitor"})


def test_gazetteer_empty_train_split_raises() -> None:
    corpus = _corpus_with({"a": []}, {"a": Split.TRAIN})
    with pytest.raises(EmptyTrainingSet):
        build_gazetteer(corpus)


def _gazetteer(*entries: str):
    corpus = _corpus_with({"g": list(entries)}, {"g": Split.TRAIN})
    return build_gazetteer(corpus)


def test_tag_disposition_from_left_trigger() -> None:
    spans = tag("Start Lipitor 20mg daily.", _gazetteer("Lipitor"), default_ruleset())
    assert [(s.start, s.end, s.label) for s in spans] == [(6, 13, EventLabel.DISPOSITION)]


def test_tag_no_disposition() -> None:
    spans = tag("Continue metformin.", _gazetteer("metformin"), default_ruleset())
    assert [(s.start, s.end, s.label) for s in spans] == [(9, 18, EventLabel.NO_DISPOSITION)]


def test_tag_defaults_to_undetermined() -> None:
    spans = tag("Notes mention aspirin today.", _gazetteer("aspirin"), default_ruleset())
    assert spans[0].label is EventLabel.UNDETERMINED


def test_tag_no_hits() -> None:
    assert tag("nothing to see here", _gazetteer("Lipitor"), default_ruleset()) == []


def test_tag_longest_match_beats_substring() -> None:
    gazetteer = _gazetteer("insulin", "insulin glargine")
    spans = tag("Start insulin glargine 15units nightly.", gazetteer, default_ruleset())
    assert [s.surface for s in spans] == ["insulin glargine"]


def test_tag_case_insensitive_matching() -> None:
    spans = tag("start LIPITOR now.", _gazetteer("Lipitor"), default_ruleset())
    assert [s.surface for s in spans] == ["LIPITOR"]


def test_tag_never_predicts_outside_gazetteer() -> None:
    corpus = generate_synthetic(SyntheticSpec(n_documents=30, seed=3))
    gazetteer = build_gazetteer(corpus)
    for doc in corpus.documents.values():
        for span in tag(doc.text, gazetteer, default_ruleset()):
            assert span.surface in gazetteer


def test_tag_window_respects_rule_order() -> None:
    # A window containing triggers from both lexicons resolves to the first rule.
    rules = RuleSet(
        rules=(
            Rule(frozenset({"start"}), 3, EventLabel.DISPOSITION),
            Rule(frozenset({"continue"}), 3, EventLabel.NO_DISPOSITION),
        )
    )
    spans = tag("continue start Lipitor", _gazetteer("Lipitor"), rules)
    assert spans[0].label is EventLabel.DISPOSITION


def test_synthetic_determinism() -> None:
    spec = SyntheticSpec(n_documents=25, seed=7)
    first = generate_synthetic(spec)
    second = generate_synthetic(spec)
    blob = lambda c: {i: (d.text, serialize_annotations(d)) for i, d in c.documents.items()}
    assert blob(first) == blob(second)
    assert first.split == second.split


def test_synthetic_single_class_mix() -> None:
    spec = SyntheticSpec(
        n_documents=10,
        seed=1,
        label_mix={
            EventLabel.DISPOSITION: 1.0,
            EventLabel.NO_DISPOSITION: 0.0,
            EventLabel.UNDETERMINED: 0.0,
        },
    )
    corpus = generate_synthetic(spec)
    labels = {m.label for d in corpus.documents.values() for m in d.mentions}
    assert labels == {EventLabel.DISPOSITION}


def test_synthetic_validates_clean() -> None:
    corpus = generate_synthetic(SyntheticSpec(n_documents=120, seed=5))
    assert validate_corpus(corpus) == []


def test_synthetic_label_mix_within_two_percent() -> None:
    spec = SyntheticSpec(n_documents=120, seed=9)
    corpus = generate_synthetic(spec)
    labels = [m.label for d in corpus.documents.values() for m in d.mentions]
    total = len(labels)
    for label, expected in spec.label_mix.items():
        actual = sum(1 for l in labels if l is label) / total
        assert abs(actual - expected) <= 0.02


def test_synthetic_covers_all_medications_in_train() -> None:
    corpus = generate_synthetic(SyntheticSpec(n_documents=80, seed=2))
    train_surfaces = {
        m.surface.lower()
        for doc in corpus.docs_in_split(Split.TRAIN)
        for m in doc.mentions
    }
    assert {m.lower() for m in DEFAULT_MEDICATIONS} <= train_surfaces


def test_synthetic_rejects_bad_proportions() -> None:
    with pytest.raises(ValueError):
        SyntheticSpec(label_mix={EventLabel.DISPOSITION: 0.5, EventLabel.NO_DISPOSITION: 0.2, EventLabel.UNDETERMINED: 0.2})


def test_closed_loop_perfect_score() -> None:
    corpus = generate_synthetic(SyntheticSpec(n_documents=60, seed=21))
    gazetteer = build_gazetteer(corpus)
    rules = default_ruleset()
    predictions = {i: tag(d.text, gazetteer, rules) for i, d in corpus.documents.items()}
    for task in TaskMode:
        report = score(corpus, predictions, task)
        assert report.strict.micro.fscore == 1.0
        assert report.lenient.micro.fscore == 1.0


def test_removing_disposition_triggers_degrades_event_only() -> None:
    corpus = generate_synthetic(SyntheticSpec(n_documents=60, seed=22))
    gazetteer = build_gazetteer(corpus)
    crippled = RuleSet(rules=tuple(r for r in default_ruleset().rules if r.label is not EventLabel.DISPOSITION))
    predictions = {i: tag(d.text, gazetteer, crippled) for i, d in corpus.documents.items()}
    event = score(corpus, predictions, TaskMode.EVENT_CLASSIFICATION)
    ident = score(corpus, predictions, TaskMode.IDENTIFICATION)
    assert event.strict.micro.fscore < 1.0
    assert ident.strict.micro.fscore == 1.0
