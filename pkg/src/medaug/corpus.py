"""Standoff corpus model: parse, validate, and serialize span-annotated documents.

The on-disk layout is a directory of paired ``<id>.txt`` / ``<id>.ann`` files
plus an optional ``splits.tsv`` manifest. Annotation files hold one mention per
line::

    T1<TAB>Disposition 6 13<TAB>Lipitor

Offsets count Unicode code points into the NFC-normalized text; the label is
one of Disposition, NoDisposition, Undetermined, or Drug (the latter is kept
for identification-only corpora and mapped to Undetermined with a provenance
flag). Discontinuous spans are rejected.
"""

from __future__ import annotations

import os
import re
import tempfile
import unicodedata
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

SPLIT_MANIFEST = "splits.tsv"
AUG_ID_MARKER = "#aug"

_ANN_LINE = re.compile(r"^(T[^\t\s]+)\t(\S+) (\d+) (\d+)\t(.*)$")


class EventLabel(Enum):
    """Medication event context assigned to a mention."""

    DISPOSITION = "Disposition"
    NO_DISPOSITION = "NoDisposition"
    UNDETERMINED = "Undetermined"


class Split(Enum):
    TRAIN = "train"
    DEV = "dev"
    TEST = "test"


class CorpusError(Exception):
    """Base class for corpus-level failures."""


class StandoffParseError(CorpusError):
    """A single annotation line was rejected; carries its error category."""

    category = "StandoffParseError"

    def __init__(self, message: str, *, doc_id: str | None = None):
        super().__init__(message)
        self.doc_id = doc_id


class MalformedLine(StandoffParseError):
    category = "MalformedLine"

    def __init__(self, line_no: int, line: str, *, doc_id: str | None = None):
        super().__init__(f"line {line_no}: not a valid annotation line: {line!r}", doc_id=doc_id)
        self.line_no = line_no


class UnknownLabel(StandoffParseError):
    category = "UnknownLabel"

    def __init__(self, mention_id: str, label: str, *, doc_id: str | None = None):
        super().__init__(f"{mention_id}: unknown label {label!r}", doc_id=doc_id)
        self.mention_id = mention_id
        self.label = label


class OffsetOutOfRange(StandoffParseError):
    category = "OffsetOutOfRange"

    def __init__(self, mention_id: str, start: int, end: int, length: int, *, doc_id: str | None = None):
        super().__init__(
            f"{mention_id}: offsets [{start}, {end}) invalid for text of length {length}",
            doc_id=doc_id,
        )
        self.mention_id = mention_id


class SurfaceMismatch(StandoffParseError):
    category = "SurfaceMismatch"

    def __init__(self, mention_id: str, expected: str, actual: str, *, doc_id: str | None = None):
        super().__init__(
            f"{mention_id}: annotation text {expected!r} != document slice {actual!r}",
            doc_id=doc_id,
        )
        self.mention_id = mention_id


class DuplicateMentionId(StandoffParseError):
    category = "DuplicateMentionId"

    def __init__(self, mention_id: str, *, doc_id: str | None = None):
        super().__init__(f"{mention_id}: mention id appears more than once", doc_id=doc_id)
        self.mention_id = mention_id


class MissingPair(CorpusError):
    def __init__(self, doc_id: str, missing: str):
        super().__init__(f"{doc_id}: missing {missing} file")
        self.doc_id = doc_id


class ManifestError(CorpusError):
    pass


@dataclass(frozen=True)
class MentionSpan:
    """One medication mention: ``[start, end)`` character offsets into the document text.

    ``from_drug_label`` records that the source annotation used the bare
    ``Drug`` label (identification-only corpora); such mentions carry
    ``Undetermined`` internally and serialize back to ``Drug``.
    """

    mention_id: str
    start: int
    end: int
    surface: str
    label: EventLabel
    from_drug_label: bool = False

    def sort_key(self) -> tuple[int, int, str]:
        return (self.start, self.end, self.mention_id)

    def overlaps(self, other: "MentionSpan") -> bool:
        return self.start < other.end and other.start < self.end


@dataclass(frozen=True)
class AnnotatedDocument:
    doc_id: str
    text: str
    mentions: tuple[MentionSpan, ...]
    augmented: bool = False


@dataclass
class Corpus:
    """Named collection of documents with train/dev/test membership."""

    name: str
    documents: dict[str, AnnotatedDocument]
    split: dict[str, Split]

    def docs_in_split(self, split: Split) -> list[AnnotatedDocument]:
        return [self.documents[i] for i in sorted(self.documents) if self.split.get(i) == split]


@dataclass(frozen=True)
class Issue:
    """One validation finding; ``severity`` is ``error`` or ``warning``."""

    doc_id: str
    mention_id: str | None
    category: str
    severity: str
    message: str


def nfc(text: str) -> str:
    return unicodedata.normalize("NFC", text)


def parse_label(raw: str) -> tuple[EventLabel, bool]:
    """Map a label string to (EventLabel, from_drug_label); raises ValueError."""
    if raw == "Drug":
        return EventLabel.UNDETERMINED, True
    for label in EventLabel:
        if label.value == raw:
            return label, False
    raise ValueError(raw)


def parse_document(doc_id: str, text: str, standoff: str) -> AnnotatedDocument:
    """Parse one document from its text and standoff annotation block.

    Raises exactly one categorized StandoffParseError on the first malformed
    line; never returns a partial document.
    """
    text = nfc(text)
    mentions: dict[str, MentionSpan] = {}
    for line_no, line in enumerate(standoff.split("\n"), start=1):
        if not line.strip():
            continue
        match = _ANN_LINE.match(line)
        if match is None:
            raise MalformedLine(line_no, line, doc_id=doc_id)
        mention_id, raw_label, raw_start, raw_end, surface = match.groups()
        if mention_id in mentions:
            raise DuplicateMentionId(mention_id, doc_id=doc_id)
        try:
            label, from_drug = parse_label(raw_label)
        except ValueError:
            raise UnknownLabel(mention_id, raw_label, doc_id=doc_id) from None
        start, end = int(raw_start), int(raw_end)
        if not (0 <= start < end <= len(text)):
            raise OffsetOutOfRange(mention_id, start, end, len(text), doc_id=doc_id)
        surface = nfc(surface)
        if surface != text[start:end]:
            raise SurfaceMismatch(mention_id, surface, text[start:end], doc_id=doc_id)
        mentions[mention_id] = MentionSpan(mention_id, start, end, surface, label, from_drug)
    ordered = tuple(sorted(mentions.values(), key=MentionSpan.sort_key))
    return AnnotatedDocument(doc_id, text, ordered, augmented=AUG_ID_MARKER in doc_id)


def serialize_annotations(doc: AnnotatedDocument) -> str:
    """Render a document's mentions back to standoff lines (LF, sorted)."""
    lines = []
    for m in sorted(doc.mentions, key=MentionSpan.sort_key):
        label = "Drug" if m.from_drug_label else m.label.value
        lines.append(f"{m.mention_id}\t{label} {m.start} {m.end}\t{m.surface}\n")
    return "".join(lines)


def _read_manifest(path: Path, doc_ids: set[str]) -> dict[str, Split]:
    split: dict[str, Split] = {}
    for line_no, line in enumerate(path.read_text(encoding="utf-8").split("\n"), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ManifestError(f"{path.name} line {line_no}: expected <doc_id>\\t<split>")
        doc_id, raw = parts
        if doc_id not in doc_ids:
            raise ManifestError(f"{path.name} line {line_no}: unknown document {doc_id!r}")
        try:
            split[doc_id] = Split(raw)
        except ValueError:
            raise ManifestError(f"{path.name} line {line_no}: unknown split {raw!r}") from None
    return split


def load_corpus(root: str | Path) -> Corpus:
    """Load all ``<id>.txt`` / ``<id>.ann`` pairs under ``root``.

    Documents absent from the split manifest default to train. Parse errors
    are re-raised annotated with the offending doc_id.
    """
    root = Path(root)
    if not root.is_dir():
        raise CorpusError(f"not a corpus directory: {root}")
    txt_ids = {p.stem for p in root.glob("*.txt")}
    ann_ids = {p.stem for p in root.glob("*.ann")}
    for doc_id in sorted(txt_ids - ann_ids):
        raise MissingPair(doc_id, ".ann")
    for doc_id in sorted(ann_ids - txt_ids):
        raise MissingPair(doc_id, ".txt")

    documents: dict[str, AnnotatedDocument] = {}
    for doc_id in sorted(txt_ids):
        text = (root / f"{doc_id}.txt").read_text(encoding="utf-8")
        standoff = (root / f"{doc_id}.ann").read_text(encoding="utf-8")
        try:
            documents[doc_id] = parse_document(doc_id, text, standoff)
        except StandoffParseError as err:
            err.doc_id = doc_id
            raise

    split = {doc_id: Split.TRAIN for doc_id in documents}
    manifest = root / SPLIT_MANIFEST
    if manifest.exists():
        split.update(_read_manifest(manifest, set(documents)))
    return Corpus(name=root.name, documents=documents, split=split)


def atomic_write_text(path: str | Path, data: str) -> None:
    """Write a text file via temp-file-plus-rename so readers never see partial output."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_corpus(corpus: Corpus, root: str | Path) -> None:
    """Write a corpus as .txt/.ann pairs plus a split manifest."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for doc_id in sorted(corpus.documents):
        doc = corpus.documents[doc_id]
        atomic_write_text(root / f"{doc_id}.txt", doc.text)
        atomic_write_text(root / f"{doc_id}.ann", serialize_annotations(doc))
    manifest = "".join(
        f"{doc_id}\t{corpus.split[doc_id].value}\n" for doc_id in sorted(corpus.documents)
    )
    atomic_write_text(root / SPLIT_MANIFEST, manifest)


def validate_document(doc: AnnotatedDocument) -> list[Issue]:
    issues: list[Issue] = []

    def add(severity: str, category: str, mention_id: str | None, message: str) -> None:
        issues.append(Issue(doc.doc_id, mention_id, category, severity, message))

    seen: set[str] = set()
    for m in doc.mentions:
        if m.mention_id in seen:
            add("error", "DuplicateMentionId", m.mention_id, "mention id appears more than once")
        seen.add(m.mention_id)
        if not (0 <= m.start < m.end <= len(doc.text)):
            add("error", "OffsetOutOfRange", m.mention_id, f"[{m.start}, {m.end}) outside text")
            continue
        if not m.surface:
            add("error", "EmptySurface", m.mention_id, "mention surface is empty")
        elif m.surface != doc.text[m.start:m.end]:
            add(
                "error",
                "SurfaceMismatch",
                m.mention_id,
                f"surface {m.surface!r} != slice {doc.text[m.start:m.end]!r}",
            )
    ordered = sorted(doc.mentions, key=MentionSpan.sort_key)
    if list(doc.mentions) != ordered:
        add("error", "MentionOrder", None, "mentions not sorted by (start, end, id)")
    for a, b in zip(ordered, ordered[1:]):
        if a.overlaps(b):
            add(
                "warning",
                "OverlappingMentions",
                b.mention_id,
                f"overlaps {a.mention_id} at [{b.start}, {min(a.end, b.end)})",
            )
    return issues


def validate_corpus(corpus: Corpus) -> list[Issue]:
    """Check every document invariant; returns issues, never raises."""
    issues: list[Issue] = []
    for doc_id in sorted(corpus.documents):
        issues.extend(validate_document(corpus.documents[doc_id]))
    for doc_id in sorted(set(corpus.split) - set(corpus.documents)):
        issues.append(
            Issue(doc_id, None, "UnknownSplitDoc", "error", "split entry without a document")
        )
    return issues


def errors_only(issues: list[Issue]) -> list[Issue]:
    return [i for i in issues if i.severity == "error"]


def validate_directory(root: str | Path) -> list[Issue]:
    """Lenient validation pass over a corpus directory.

    Unlike load_corpus, parse failures do not abort: every missing pair,
    malformed annotation line, and invariant violation becomes one Issue, so
    a whole directory can be audited in a single run.
    """
    root = Path(root)
    if not root.is_dir():
        raise CorpusError(f"not a corpus directory: {root}")
    issues: list[Issue] = []
    txt_ids = {p.stem for p in root.glob("*.txt")}
    ann_ids = {p.stem for p in root.glob("*.ann")}
    for doc_id in sorted(txt_ids ^ ann_ids):
        missing = ".ann" if doc_id in txt_ids else ".txt"
        issues.append(Issue(doc_id, None, "MissingPair", "error", f"missing {missing} file"))

    documents: dict[str, AnnotatedDocument] = {}
    for doc_id in sorted(txt_ids & ann_ids):
        text = (root / f"{doc_id}.txt").read_text(encoding="utf-8")
        standoff = (root / f"{doc_id}.ann").read_text(encoding="utf-8")
        try:
            documents[doc_id] = parse_document(doc_id, text, standoff)
        except StandoffParseError as err:
            issues.append(
                Issue(doc_id, getattr(err, "mention_id", None), err.category, "error", str(err))
            )

    split = {doc_id: Split.TRAIN for doc_id in documents}
    manifest = root / SPLIT_MANIFEST
    if manifest.exists():
        try:
            split.update(_read_manifest(manifest, set(documents)))
        except ManifestError as err:
            issues.append(Issue("", None, "ManifestError", "error", str(err)))
    issues.extend(validate_corpus(Corpus(root.name, documents, split)))
    return issues
