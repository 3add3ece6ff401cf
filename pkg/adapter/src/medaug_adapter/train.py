"""Fine-tune an encoder for token classification and emit standoff predictions.

The tag of a mention applies to its first subword; remaining subwords are
masked out of the loss and ignored at decode time. Predictions are decoded
back to character spans using the document-level token offsets carried by the
CoNLL export, and surfaces are sliced from the corpus ``.txt`` files so the
emitted ``.ann`` lines parse cleanly against the original text.
"""

from __future__ import annotations

import hashlib
import json
import time
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path

import torch

from .bio import decode_spans
from .conll import ConllUnit, label_inventory, read_conll
from .encoder import EncoderUnavailable, make_deterministic


class AdapterError(Exception):
    pass


class OutOfMemory(AdapterError):
    def __init__(self, batch_size: int):
        suggestion = max(1, batch_size // 2)
        super().__init__(
            f"out of memory at batch size {batch_size}; retry with batch_size={suggestion}"
        )
        self.suggested_batch_size = suggestion


class DivergedTraining(AdapterError):
    pass


@dataclass
class TrainRun:
    """One fine-tuning run: inputs, hyperparameters, seed, and output location."""

    run_id: str
    train_conll: str
    predict_conll: str
    corpus_dir: str
    encoder: str
    out_dir: str
    seed: int
    epochs: int = 2
    learning_rate: float = 5e-4
    batch_size: int = 16
    max_seq_len: int = 64
    fingerprint: str = field(init=False, default="")

    def __post_init__(self) -> None:
        digest = hashlib.sha256()
        for path in (self.train_conll, self.predict_conll):
            digest.update(Path(path).read_bytes())
        self.fingerprint = digest.hexdigest()


def _first_subword_positions(word_ids: list[int | None]) -> list[int]:
    positions = []
    seen: set[int] = set()
    for pos, word_id in enumerate(word_ids):
        if word_id is not None and word_id not in seen:
            positions.append(pos)
            seen.add(word_id)
    return positions


def _encode_units(units, tokenizer, labels: list[str], max_len: int, with_labels: bool):
    label_to_id = {label: i for i, label in enumerate(labels)}
    encoding = tokenizer(
        [u.words() for u in units],
        is_split_into_words=True,
        padding=True,
        truncation=True,
        max_length=max_len,
        return_tensors="pt",
    )
    if not with_labels:
        return encoding, None
    batch_labels = torch.full(encoding["input_ids"].shape, -100, dtype=torch.long)
    for row, unit in enumerate(units):
        word_ids = encoding.word_ids(row)
        tags = unit.tags()
        seen: set[int] = set()
        for pos, word_id in enumerate(word_ids):
            if word_id is None or word_id in seen:
                continue
            seen.add(word_id)
            batch_labels[row, pos] = label_to_id[tags[word_id]]
    return encoding, batch_labels


def _load_texts(corpus_dir: str | Path) -> dict[str, str]:
    texts = {}
    for path in sorted(Path(corpus_dir).glob("*.txt")):
        texts[path.stem] = unicodedata.normalize("NFC", path.read_text(encoding="utf-8"))
    return texts


def finetune_and_predict(run: TrainRun) -> Path:
    """Train on the exported train file, predict the predict file, write .ann files.

    Returns the output directory; beside the predictions a ``run.json`` records
    the fingerprint, hyperparameters, label set, and wall time.
    """
    from transformers import AutoTokenizer, BertForTokenClassification

    started = time.perf_counter()
    make_deterministic(run.seed)

    train_units = read_conll(run.train_conll)
    predict_units = read_conll(run.predict_conll)
    if not train_units:
        raise AdapterError(f"no training units in {run.train_conll}")
    labels = label_inventory(train_units)

    encoder_path = Path(run.encoder)
    if not encoder_path.exists():
        from .encoder import load_tokenizer_and_check

        load_tokenizer_and_check(run.encoder)  # raises EncoderUnavailable offline
    tokenizer = AutoTokenizer.from_pretrained(run.encoder)
    model = BertForTokenClassification.from_pretrained(
        run.encoder,
        num_labels=len(labels),
        id2label=dict(enumerate(labels)),
        label2id={label: i for i, label in enumerate(labels)},
    )

    optimizer = torch.optim.AdamW(model.parameters(), lr=run.learning_rate)
    generator = torch.Generator().manual_seed(run.seed)
    model.train()
    try:
        for _ in range(run.epochs):
            order = torch.randperm(len(train_units), generator=generator).tolist()
            for i in range(0, len(order), run.batch_size):
                batch = [train_units[j] for j in order[i : i + run.batch_size]]
                encoding, batch_labels = _encode_units(
                    batch, tokenizer, labels, run.max_seq_len, with_labels=True
                )
                optimizer.zero_grad()
                out = model(
                    input_ids=encoding["input_ids"],
                    attention_mask=encoding["attention_mask"],
                    labels=batch_labels,
                )
                if not torch.isfinite(out.loss):
                    raise DivergedTraining(f"non-finite loss at step {i}")
                out.loss.backward()
                optimizer.step()
    except torch.cuda.OutOfMemoryError as err:
        raise OutOfMemory(run.batch_size) from err
    except RuntimeError as err:
        if "out of memory" in str(err).lower():
            raise OutOfMemory(run.batch_size) from err
        raise

    model.eval()
    texts = _load_texts(run.corpus_dir)
    spans_by_doc: dict[str, list[tuple[int, int, str]]] = {}
    with torch.no_grad():
        for i in range(0, len(predict_units), run.batch_size):
            batch = [predict_units[j] for j in range(i, min(i + run.batch_size, len(predict_units)))]
            encoding, _ = _encode_units(batch, tokenizer, labels, run.max_seq_len, with_labels=False)
            logits = model(
                input_ids=encoding["input_ids"], attention_mask=encoding["attention_mask"]
            ).logits
            predicted = logits.argmax(dim=-1)
            for row, unit in enumerate(batch):
                word_ids = encoding.word_ids(row)
                positions = _first_subword_positions(word_ids)
                tags = [labels[predicted[row, pos].item()] for pos in positions]
                tokens = list(unit.tokens)[: len(tags)]  # truncation drops tail words
                spans_by_doc.setdefault(unit.doc_id, []).extend(decode_spans(tokens, tags))

    out_dir = Path(run.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    doc_ids = sorted({u.doc_id for u in predict_units})
    for doc_id in doc_ids:
        if doc_id not in texts:
            raise AdapterError(f"no {doc_id}.txt under {run.corpus_dir}")
        text = texts[doc_id]
        lines = []
        for k, (start, end, label) in enumerate(
            sorted(spans_by_doc.get(doc_id, [])), start=1
        ):
            lines.append(f"T{k}\t{label} {start} {end}\t{text[start:end]}\n")
        (out_dir / f"{doc_id}.ann").write_text("".join(lines), encoding="utf-8")

    metadata = {
        "schema_version": 1,
        "run_id": run.run_id,
        "encoder": run.encoder,
        "corpus_fingerprint": run.fingerprint,
        "hyperparameters": {
            "epochs": run.epochs,
            "learning_rate": run.learning_rate,
            "batch_size": run.batch_size,
            "max_seq_len": run.max_seq_len,
        },
        "seed": run.seed,
        "labels": labels,
        "documents_predicted": len(doc_ids),
        "wall_time_s": round(time.perf_counter() - started, 3),
    }
    (out_dir / "run.json").write_text(json.dumps(metadata, indent=2) + "\n", encoding="utf-8")
    return out_dir
