"""Strict/lenient span matching and micro/macro P/R/F scoring.

Strict matching pairs a prediction with a gold mention only when both offsets
are equal; lenient matching accepts any non-empty offset overlap. The
identification task ignores labels (every mention is class ``drug``); event
classification additionally requires label equality for a pair. Matching is
one-to-one and greedy: gold mentions are visited in (start, end) order and
each takes the compatible unmatched prediction with the smallest end offset
(ties: smaller start, then id). That selection rule makes the greedy count
provably equal to the maximum one-to-one matching whenever gold mentions do
not overlap each other (exchange argument: the smallest-end prediction is
always safe to take because any later disjoint gold that overlaps it also
overlaps every compatible prediction with a larger end); on overlapping golds
the greedy count may fall below the maximum, which is flagged in the report.

Micro scores pool tp/fp/fn over all documents; macro scores average per-class
P, R, and F over the classes that occur in gold or predictions (classes absent
from both are excluded rather than diluting the average). All 0/0 ratios are
defined as 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum

from .corpus import Corpus, EventLabel, MentionSpan

REPORT_SCHEMA_VERSION = 1

IDENTIFICATION_CLASS = "drug"


class MatchMode(Enum):
    STRICT = "strict"
    LENIENT = "lenient"


class TaskMode(Enum):
    IDENTIFICATION = "id"
    EVENT_CLASSIFICATION = "event"


class ScoringError(Exception):
    pass


class UnknownDocument(ScoringError):
    def __init__(self, doc_id: str):
        super().__init__(f"predictions reference unknown document {doc_id!r}")
        self.doc_id = doc_id


class InvalidSpan(ScoringError):
    def __init__(self, doc_id: str, span: MentionSpan):
        super().__init__(f"{doc_id}: span [{span.start}, {span.end}) outside document")
        self.doc_id = doc_id
        self.span = span


class TaskMismatch(ScoringError):
    def __init__(self, a: TaskMode, b: TaskMode):
        super().__init__(f"cannot diff reports for tasks {a.value!r} and {b.value!r}")


@dataclass(frozen=True)
class PRF:
    """Precision/recall/F with the underlying counts; 0/0 ratios are 0."""

    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    fscore: float

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int) -> "PRF":
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        fscore = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        return cls(tp, fp, fn, precision, recall, fscore)


@dataclass(frozen=True)
class MacroPRF:
    """Unweighted per-class averages; ``classes`` lists the classes averaged over."""

    precision: float
    recall: float
    fscore: float
    classes: tuple[str, ...]


@dataclass(frozen=True)
class ModeBlock:
    micro: PRF
    macro: MacroPRF
    per_class: dict[str, PRF]


@dataclass(frozen=True)
class MetricsReport:
    task: TaskMode
    strict: ModeBlock
    lenient: ModeBlock
    n_documents: int
    n_gold: int
    n_pred: int
    # Documents whose gold mentions overlap each other: there the greedy
    # lenient count is not guaranteed to equal the maximum matching.
    overlapping_gold_docs: int = 0


@dataclass(frozen=True)
class MatchResult:
    pairs: tuple[tuple[MentionSpan, MentionSpan], ...]
    unmatched_gold: tuple[MentionSpan, ...]
    unmatched_pred: tuple[MentionSpan, ...]


def class_of(span: MentionSpan, task: TaskMode) -> str:
    if task is TaskMode.IDENTIFICATION:
        return IDENTIFICATION_CLASS
    return span.label.value


def _overlap(a: MentionSpan, b: MentionSpan) -> int:
    return min(a.end, b.end) - max(a.start, b.start)


def _compatible(gold: MentionSpan, pred: MentionSpan, mode: MatchMode, task: TaskMode) -> bool:
    if task is TaskMode.EVENT_CLASSIFICATION and gold.label != pred.label:
        return False
    if mode is MatchMode.STRICT:
        return gold.start == pred.start and gold.end == pred.end
    return _overlap(gold, pred) > 0


def match_spans(
    gold: list[MentionSpan],
    pred: list[MentionSpan],
    mode: MatchMode,
    task: TaskMode,
) -> MatchResult:
    """One-to-one greedy matching of predictions to gold mentions within one document.

    Gold mentions are visited in (start, end, id) order; each takes the
    compatible free prediction with the smallest (end, start, id). For strict
    mode this is exact multiset matching; for lenient mode the count equals
    the maximum matching whenever golds are pairwise non-overlapping.
    """
    gold_sorted = sorted(gold, key=MentionSpan.sort_key)
    pred_sorted = sorted(pred, key=MentionSpan.sort_key)
    taken = [False] * len(pred_sorted)
    pairs: list[tuple[MentionSpan, MentionSpan]] = []
    unmatched_gold: list[MentionSpan] = []
    for g in gold_sorted:
        best = None
        for i, p in enumerate(pred_sorted):
            if taken[i] or not _compatible(g, p, mode, task):
                continue
            key = (p.end, p.start, p.mention_id)
            if best is None or key < best[0]:
                best = (key, i)
        if best is None:
            unmatched_gold.append(g)
        else:
            taken[best[1]] = True
            pairs.append((g, pred_sorted[best[1]]))
    unmatched_pred = tuple(p for i, p in enumerate(pred_sorted) if not taken[i])
    return MatchResult(tuple(pairs), tuple(unmatched_gold), unmatched_pred)


def _task_classes(task: TaskMode) -> list[str]:
    if task is TaskMode.IDENTIFICATION:
        return [IDENTIFICATION_CLASS]
    return [label.value for label in EventLabel]


def _mode_block(
    task: TaskMode,
    tp: dict[str, int],
    gold_count: dict[str, int],
    pred_count: dict[str, int],
) -> ModeBlock:
    per_class: dict[str, PRF] = {}
    for cls in _task_classes(task):
        per_class[cls] = PRF.from_counts(
            tp[cls], pred_count[cls] - tp[cls], gold_count[cls] - tp[cls]
        )
    present = tuple(
        cls for cls in _task_classes(task) if gold_count[cls] + pred_count[cls] > 0
    )
    micro = PRF.from_counts(
        sum(tp.values()),
        sum(pred_count.values()) - sum(tp.values()),
        sum(gold_count.values()) - sum(tp.values()),
    )
    if present:
        macro = MacroPRF(
            sum(per_class[c].precision for c in present) / len(present),
            sum(per_class[c].recall for c in present) / len(present),
            sum(per_class[c].fscore for c in present) / len(present),
            present,
        )
    else:
        macro = MacroPRF(0.0, 0.0, 0.0, ())
    return ModeBlock(micro, macro, per_class)


def score(
    gold_corpus: Corpus,
    predictions: dict[str, list[MentionSpan]],
    task: TaskMode,
) -> MetricsReport:
    """Score predictions against a gold corpus; both match modes in one pass."""
    for doc_id, spans in predictions.items():
        if doc_id not in gold_corpus.documents:
            raise UnknownDocument(doc_id)
        length = len(gold_corpus.documents[doc_id].text)
        for span in spans:
            if not (0 <= span.start < span.end <= length):
                raise InvalidSpan(doc_id, span)

    classes = _task_classes(task)
    counters = {
        mode: {
            "tp": dict.fromkeys(classes, 0),
            "gold": dict.fromkeys(classes, 0),
            "pred": dict.fromkeys(classes, 0),
        }
        for mode in MatchMode
    }
    n_gold = n_pred = overlapping_docs = 0
    for doc_id in sorted(gold_corpus.documents):
        gold = list(gold_corpus.documents[doc_id].mentions)
        pred = predictions.get(doc_id, [])
        n_gold += len(gold)
        n_pred += len(pred)
        ordered = sorted(gold, key=MentionSpan.sort_key)
        if any(a.overlaps(b) for a, b in zip(ordered, ordered[1:])):
            overlapping_docs += 1
        for mode in MatchMode:
            bucket = counters[mode]
            for g in gold:
                bucket["gold"][class_of(g, task)] += 1
            for p in pred:
                bucket["pred"][class_of(p, task)] += 1
            result = match_spans(gold, pred, mode, task)
            for g, _ in result.pairs:
                bucket["tp"][class_of(g, task)] += 1

    blocks = {
        mode: _mode_block(task, c["tp"], c["gold"], c["pred"])
        for mode, c in counters.items()
    }
    return MetricsReport(
        task=task,
        strict=blocks[MatchMode.STRICT],
        lenient=blocks[MatchMode.LENIENT],
        n_documents=len(gold_corpus.documents),
        n_gold=n_gold,
        n_pred=n_pred,
        overlapping_gold_docs=overlapping_docs,
    )


def _prf_dict(prf: PRF) -> dict:
    return {
        "precision": prf.precision,
        "recall": prf.recall,
        "fscore": prf.fscore,
        "tp": prf.tp,
        "fp": prf.fp,
        "fn": prf.fn,
    }


def report_to_dict(report: MetricsReport) -> dict:
    """Fixed-key-order dict form of a report, safe to diff byte-for-byte as JSON."""
    out: dict = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "task": report.task.value,
        "n_documents": report.n_documents,
        "n_gold": report.n_gold,
        "n_pred": report.n_pred,
        "overlapping_gold_docs": report.overlapping_gold_docs,
    }
    for mode, block in (("strict", report.strict), ("lenient", report.lenient)):
        out[mode] = {
            "micro": _prf_dict(block.micro),
            "macro": {
                "precision": block.macro.precision,
                "recall": block.macro.recall,
                "fscore": block.macro.fscore,
                "classes": list(block.macro.classes),
            },
            "per_class": {
                cls: _prf_dict(block.per_class[cls]) for cls in sorted(block.per_class)
            },
        }
    return out


def report_to_json(report: MetricsReport) -> str:
    return json.dumps(report_to_dict(report), indent=2) + "\n"


def _prf_from_dict(data: dict) -> PRF:
    return PRF(
        data["tp"], data["fp"], data["fn"],
        data["precision"], data["recall"], data["fscore"],
    )


def report_from_dict(data: dict) -> MetricsReport:
    blocks = {}
    for mode in ("strict", "lenient"):
        raw = data[mode]
        blocks[mode] = ModeBlock(
            micro=_prf_from_dict(raw["micro"]),
            macro=MacroPRF(
                raw["macro"]["precision"],
                raw["macro"]["recall"],
                raw["macro"]["fscore"],
                tuple(raw["macro"]["classes"]),
            ),
            per_class={cls: _prf_from_dict(v) for cls, v in raw["per_class"].items()},
        )
    return MetricsReport(
        task=TaskMode(data["task"]),
        strict=blocks["strict"],
        lenient=blocks["lenient"],
        n_documents=data["n_documents"],
        n_gold=data["n_gold"],
        n_pred=data["n_pred"],
        overlapping_gold_docs=data.get("overlapping_gold_docs", 0),
    )


def render_table(report: MetricsReport) -> str:
    """Human-readable table: strict block then lenient, P/R/F columns."""
    lines = [
        f"Task: {'medication identification' if report.task is TaskMode.IDENTIFICATION else 'medication event classification'}",
        f"Documents: {report.n_documents}   Gold mentions: {report.n_gold}   Predicted: {report.n_pred}",
    ]
    header = f"{'':24s} {'Precision':>10s} {'Recall':>10s} {'Fscore':>10s}"
    for name, block in (("Strict", report.strict), ("Lenient", report.lenient)):
        lines.append("")
        lines.append(f"{name} evaluation")
        lines.append(header)
        lines.append(
            f"{'micro':24s} {block.micro.precision:>10.4f} {block.micro.recall:>10.4f} {block.micro.fscore:>10.4f}"
        )
        lines.append(
            f"{'macro':24s} {block.macro.precision:>10.4f} {block.macro.recall:>10.4f} {block.macro.fscore:>10.4f}"
        )
        for cls in sorted(block.per_class):
            prf = block.per_class[cls]
            lines.append(
                f"{cls:24s} {prf.precision:>10.4f} {prf.recall:>10.4f} {prf.fscore:>10.4f}"
            )
    return "\n".join(lines) + "\n"


def _flatten(data: dict, prefix: str = "") -> dict[str, float]:
    flat: dict[str, float] = {}
    for key, value in data.items():
        path = f"{prefix}.{key}" if prefix else key
        if isinstance(value, dict):
            flat.update(_flatten(value, path))
        elif isinstance(value, (int, float)) and not isinstance(value, bool):
            flat[path] = float(value)
    return flat


@dataclass(frozen=True)
class ReportDelta:
    task: TaskMode
    deltas: dict[str, float]
    changed: tuple[str, ...]


def diff_reports(a: MetricsReport, b: MetricsReport) -> ReportDelta:
    """Per-field signed differences b - a; ``changed`` lists fields with |delta| > 0."""
    if a.task is not b.task:
        raise TaskMismatch(a.task, b.task)
    flat_a = _flatten(report_to_dict(a))
    flat_b = _flatten(report_to_dict(b))
    deltas = {key: flat_b[key] - flat_a[key] for key in sorted(flat_a) if key in flat_b}
    changed = tuple(key for key in deltas if deltas[key] != 0.0)
    return ReportDelta(a.task, deltas, changed)
