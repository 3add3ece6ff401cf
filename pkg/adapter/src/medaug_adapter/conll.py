"""Reader for the CoNLL-style token files exported by ``medaug export``.

Format: blocks separated by blank lines; each block starts with a comment
``# doc = <doc_id>`` followed by ``surface<TAB>start<TAB>end<TAB>tag`` lines.
Offsets are document-level character positions.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path


class ConllFormatError(Exception):
    pass


@dataclass(frozen=True)
class ConllToken:
    surface: str
    start: int
    end: int
    tag: str


@dataclass(frozen=True)
class ConllUnit:
    doc_id: str
    tokens: tuple[ConllToken, ...]

    def words(self) -> list[str]:
        return [t.surface for t in self.tokens]

    def tags(self) -> list[str]:
        return [t.tag for t in self.tokens]


def read_conll(path: str | Path) -> list[ConllUnit]:
    units: list[ConllUnit] = []
    doc_id: str | None = None
    tokens: list[ConllToken] = []

    def flush() -> None:
        nonlocal doc_id, tokens
        if tokens:
            if doc_id is None:
                raise ConllFormatError("token block without a '# doc =' comment")
            units.append(ConllUnit(doc_id, tuple(tokens)))
        doc_id, tokens = None, []

    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").split("\n"), 1):
        if not line.strip():
            flush()
            continue
        if line.startswith("#"):
            if "doc =" in line:
                doc_id = line.split("doc =", 1)[1].strip()
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise ConllFormatError(f"line {line_no}: expected 4 tab-separated fields")
        surface, start, end, tag = parts
        try:
            tokens.append(ConllToken(surface, int(start), int(end), tag))
        except ValueError as err:
            raise ConllFormatError(f"line {line_no}: bad offsets") from err
    flush()
    return units


def label_inventory(units: list[ConllUnit]) -> list[str]:
    """Sorted tag set with O first, so label ids are stable across runs."""
    tags = {t.tag for u in units for t in u.tokens}
    tags.discard("O")
    return ["O", *sorted(tags)]
