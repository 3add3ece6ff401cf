"""Offset-preserving sentence segmentation, tokenization, and the BIO tag codec.

Everything here is rule-based and deterministic: sentence boundaries fire
after ``.``, ``!``, ``?`` (when followed by whitespace and an uppercase letter
or digit) or after a newline, and any boundary that would split a mention is
suppressed so the unit simply extends. Token offsets always index the input
string, so spans survive the round trip between character annotations and
token tags.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from typing import Iterable, Literal, NamedTuple

from .corpus import AnnotatedDocument, EventLabel, MentionSpan

LabelScheme = Literal["event", "drug"]

DRUG_TAG_LABEL = "Drug"

_TERMINATORS = ".!?"


@dataclass(frozen=True)
class Token:
    surface: str
    start: int
    end: int


@dataclass(frozen=True)
class SentenceUnit:
    """One sentence-sized slice of a document, with mentions re-based to local offsets."""

    doc_id: str
    start: int
    end: int
    text: str
    mentions: tuple[MentionSpan, ...]


@dataclass(frozen=True)
class TaggedSequence:
    """Tokens of one unit plus parallel BIO tags.

    ``snapped`` counts mentions whose boundaries fell inside a token and were
    widened to token boundaries; ``dropped`` counts mentions skipped because
    they overlapped an already-tagged mention (BIO cannot express overlap).
    """

    doc_id: str
    tokens: tuple[Token, ...]
    tags: tuple[str, ...]
    snapped: int = 0
    dropped: int = 0


class DecodeResult(NamedTuple):
    spans: list[MentionSpan]
    repairs: int


def tokenize(text: str) -> list[Token]:
    """Split text into maximal alphanumeric runs and single punctuation characters."""
    tokens: list[Token] = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch.isalnum():
            j = i + 1
            while j < n and text[j].isalnum():
                j += 1
            tokens.append(Token(text[i:j], i, j))
            i = j
        else:
            tokens.append(Token(ch, i, i + 1))
            i += 1
    return tokens


def _candidate_cuts(text: str) -> list[int]:
    cuts = []
    n = len(text)
    for i, ch in enumerate(text):
        if ch in _TERMINATORS:
            k = i + 1
            while k < n and text[k].isspace():
                k += 1
            if k > i + 1 and k < n and (text[k].isupper() or text[k].isdigit()):
                cuts.append(i + 1)
        elif ch == "\n":
            k = i + 1
            while k < n and text[k].isspace():
                k += 1
            if k < n and (text[k].isupper() or text[k].isdigit()):
                cuts.append(i + 1)
    return sorted(set(cuts))


def split_sentences(doc: AnnotatedDocument) -> list[SentenceUnit]:
    """Tile the document into sentence units; no mention ever straddles a unit."""
    text = doc.text
    n = len(text)
    kept = []
    for cut in _candidate_cuts(text):
        gap_end = cut
        while gap_end < n and text[gap_end].isspace():
            gap_end += 1
        # A mention survives a cut only if it ends at-or-before it or starts
        # at-or-after the following unit; anything else suppresses the cut.
        if any(m.start < gap_end and m.end > cut for m in doc.mentions):
            continue
        kept.append(cut)

    units: list[SentenceUnit] = []
    bounds = [0, *kept, n]
    for a, b in zip(bounds, bounds[1:]):
        s, e = a, b
        while s < e and text[s].isspace():
            s += 1
        while e > s and text[e - 1].isspace():
            e -= 1
        inside = [m for m in doc.mentions if a <= m.start and m.end <= b]
        if inside:
            s = min(s, min(m.start for m in inside))
            e = max(e, max(m.end for m in inside))
        if s == e:
            continue
        local = tuple(replace(m, start=m.start - s, end=m.end - s) for m in inside)
        units.append(SentenceUnit(doc.doc_id, s, e, text[s:e], local))

    assigned = sum(len(u.mentions) for u in units)
    assert assigned == len(doc.mentions), "mention straddles a sentence unit"
    return units


def _tag_label(mention: MentionSpan, scheme: LabelScheme) -> str:
    return DRUG_TAG_LABEL if scheme == "drug" else mention.label.value


def encode_bio(unit: SentenceUnit, scheme: LabelScheme = "event") -> TaggedSequence:
    """Tag the unit's tokens: B-<label> on the first token of a mention, I-<label> after.

    Mention boundaries inside a token snap outward to the token's boundaries.
    """
    tokens = tokenize(unit.text)
    tags = ["O"] * len(tokens)
    snapped = 0
    dropped = 0
    for m in sorted(unit.mentions, key=MentionSpan.sort_key):
        covered = [i for i, t in enumerate(tokens) if t.start < m.end and t.end > m.start]
        if not covered:
            snapped += 1
            continue
        if any(tags[i] != "O" for i in covered):
            dropped += 1
            continue
        if tokens[covered[0]].start < m.start or tokens[covered[-1]].end > m.end:
            snapped += 1
        label = _tag_label(m, scheme)
        tags[covered[0]] = f"B-{label}"
        for i in covered[1:]:
            tags[i] = f"I-{label}"
    return TaggedSequence(unit.doc_id, tuple(tokens), tuple(tags), snapped, dropped)


_TAG_RE = re.compile(r"^(O|[BI]-\S+)$")


def _span_label(raw: str) -> tuple[EventLabel, bool]:
    if raw == DRUG_TAG_LABEL:
        return EventLabel.UNDETERMINED, True
    return EventLabel(raw), False


def decode_bio(seq: TaggedSequence, text: str | None = None) -> DecodeResult:
    """Invert encode_bio: maximal B/I runs become spans carrying the tag's label.

    An I-tag following O or a different label is repaired as B (counted in
    ``repairs``). Surfaces are sliced out of ``text`` when given, otherwise
    token surfaces are joined with single spaces.
    """
    spans: list[MentionSpan] = []
    repairs = 0
    run: list[int] = []
    run_label: str | None = None

    def close() -> None:
        nonlocal run, run_label
        if not run:
            return
        start = seq.tokens[run[0]].start
        end = seq.tokens[run[-1]].end
        if text is not None:
            surface = text[start:end]
        else:
            surface = " ".join(seq.tokens[i].surface for i in run)
        label, from_drug = _span_label(run_label or "")
        spans.append(
            MentionSpan(f"T{len(spans) + 1}", start, end, surface, label, from_drug)
        )
        run, run_label = [], None

    for i, tag in enumerate(seq.tags):
        if not _TAG_RE.match(tag):
            raise ValueError(f"invalid BIO tag {tag!r}")
        if tag == "O":
            close()
            continue
        kind, label = tag.split("-", 1)
        if kind == "I" and run_label != label:
            repairs += 1
            kind = "B"
        if kind == "B":
            close()
            run, run_label = [i], label
        else:
            run.append(i)
    close()
    return DecodeResult(spans, repairs)


def encode_document(doc: AnnotatedDocument, scheme: LabelScheme = "event") -> list[TaggedSequence]:
    """Sentence-split then BIO-encode a whole document with document-level token offsets."""
    sequences = []
    for unit in split_sentences(doc):
        seq = encode_bio(unit, scheme)
        rebased = tuple(
            Token(t.surface, t.start + unit.start, t.end + unit.start) for t in seq.tokens
        )
        sequences.append(replace(seq, tokens=rebased))
    return sequences


def format_conll(sequences: Iterable[TaggedSequence]) -> str:
    """Render sequences as CoNLL-style blocks: a ``# doc = <id>`` comment, one
    ``surface<TAB>start<TAB>end<TAB>tag`` line per token, blank line between units."""
    blocks = []
    for seq in sequences:
        lines = [f"# doc = {seq.doc_id}"]
        for token, tag in zip(seq.tokens, seq.tags):
            lines.append(f"{token.surface}\t{token.start}\t{token.end}\t{tag}")
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + ("\n" if blocks else "")
