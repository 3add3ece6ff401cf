"""Minimal BIO span decoder mirroring the export format's documented rules:
maximal B/I runs become spans, and an I tag following O or a different label
is repaired as a fresh B."""

from __future__ import annotations

from .conll import ConllToken


def decode_spans(tokens: list[ConllToken], tags: list[str]) -> list[tuple[int, int, str]]:
    """Turn word-level tags into (start, end, label) spans over document offsets."""
    spans: list[tuple[int, int, str]] = []
    run_start = run_end = -1
    run_label: str | None = None

    def close() -> None:
        nonlocal run_label
        if run_label is not None:
            spans.append((run_start, run_end, run_label))
        run_label = None

    for token, tag in zip(tokens, tags):
        if tag == "O" or "-" not in tag:
            close()
            continue
        kind, label = tag.split("-", 1)
        if kind == "I" and label != run_label:
            kind = "B"  # repair: I after O or a different label
        if kind == "B":
            close()
            run_label = label
            run_start, run_end = token.start, token.end
        else:
            run_end = token.end
    close()
    return spans
