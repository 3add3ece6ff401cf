"""Encoder acquisition: load a pretrained checkpoint, or bootstrap one locally.

Named hub checkpoints are loaded when retrievable; in offline environments
EncoderUnavailable is raised instead. ``bootstrap_encoder`` produces a small
pretrained encoder without any network access: it trains a WordPiece
vocabulary on the corpus sentences, then masked-LM pretrains a tiny BERT on
them and saves the result as a regular checkpoint directory that
``finetune_and_predict`` can consume like any other encoder.
"""

from __future__ import annotations

import os
import random
from pathlib import Path

# Single-threaded vocabulary training keeps bootstrap runs comparable and
# silences the tokenizers fork warning; must be set before the rayon pool spins up.
os.environ.setdefault("TOKENIZERS_PARALLELISM", "false")

import torch
from tokenizers import Tokenizer, models, pre_tokenizers, trainers
from transformers import (
    BertConfig,
    BertForMaskedLM,
    PreTrainedTokenizerFast,
)

SPECIAL_TOKENS = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]


class EncoderUnavailable(Exception):
    def __init__(self, name: str, reason: str):
        super().__init__(f"encoder {name!r} cannot be loaded: {reason}")
        self.name = name


def make_deterministic(seed: int) -> None:
    random.seed(seed)
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True)
    torch.set_num_threads(1)


def _train_wordpiece(sentences: list[str], vocab_size: int) -> PreTrainedTokenizerFast:
    tokenizer = Tokenizer(models.WordPiece(unk_token="[UNK]"))
    tokenizer.pre_tokenizer = pre_tokenizers.Whitespace()
    trainer = trainers.WordPieceTrainer(vocab_size=vocab_size, special_tokens=SPECIAL_TOKENS)
    tokenizer.train_from_iterator(sentences, trainer=trainer)
    return PreTrainedTokenizerFast(
        tokenizer_object=tokenizer,
        pad_token="[PAD]",
        unk_token="[UNK]",
        cls_token="[CLS]",
        sep_token="[SEP]",
        mask_token="[MASK]",
    )


def _mlm_batches(
    sentences: list[str],
    tokenizer: PreTrainedTokenizerFast,
    batch_size: int,
    max_len: int,
    generator: torch.Generator,
):
    order = torch.randperm(len(sentences), generator=generator).tolist()
    for i in range(0, len(order), batch_size):
        chunk = [sentences[j] for j in order[i : i + batch_size]]
        encoding = tokenizer(
            chunk, padding=True, truncation=True, max_length=max_len, return_tensors="pt"
        )
        input_ids = encoding["input_ids"]
        labels = input_ids.clone()
        special = torch.isin(
            input_ids, torch.tensor(tokenizer.all_special_ids, dtype=input_ids.dtype)
        )
        rolls = torch.rand(input_ids.shape, generator=generator)
        masked = (rolls < 0.15) & ~special
        labels[~masked] = -100
        replace_roll = torch.rand(input_ids.shape, generator=generator)
        mask_token = (replace_roll < 0.8) & masked
        random_token = (replace_roll >= 0.9) & masked
        input_ids = input_ids.clone()
        input_ids[mask_token] = tokenizer.mask_token_id
        randoms = torch.randint(
            len(tokenizer), input_ids.shape, generator=generator, dtype=input_ids.dtype
        )
        input_ids[random_token] = randoms[random_token]
        yield input_ids, encoding["attention_mask"], labels


def bootstrap_encoder(
    sentences: list[str],
    out_dir: str | Path,
    seed: int,
    vocab_size: int = 800,
    hidden_size: int = 128,
    num_layers: int = 2,
    num_heads: int = 2,
    mlm_epochs: int = 3,
    batch_size: int = 32,
    max_len: int = 64,
    lr: float = 5e-4,
) -> Path:
    """Pretrain a tiny BERT with masked-LM on the given sentences and save it."""
    if not sentences:
        raise ValueError("need at least one sentence to pretrain on")
    make_deterministic(seed)
    out_dir = Path(out_dir)
    tokenizer = _train_wordpiece(sentences, vocab_size)
    config = BertConfig(
        vocab_size=len(tokenizer),
        hidden_size=hidden_size,
        num_hidden_layers=num_layers,
        num_attention_heads=num_heads,
        intermediate_size=hidden_size * 2,
        max_position_embeddings=max_len + 2,
        pad_token_id=tokenizer.pad_token_id,
    )
    model = BertForMaskedLM(config)
    model.train()
    optimizer = torch.optim.AdamW(model.parameters(), lr=lr)
    generator = torch.Generator().manual_seed(seed)
    for _ in range(mlm_epochs):
        for input_ids, attention_mask, labels in _mlm_batches(
            sentences, tokenizer, batch_size, max_len, generator
        ):
            optimizer.zero_grad()
            out = model(input_ids=input_ids, attention_mask=attention_mask, labels=labels)
            out.loss.backward()
            optimizer.step()
    out_dir.mkdir(parents=True, exist_ok=True)
    model.save_pretrained(out_dir)
    tokenizer.save_pretrained(out_dir)
    return out_dir


def load_tokenizer_and_check(name_or_path: str):
    """Resolve an encoder reference; raises EncoderUnavailable when unreachable."""
    from transformers import AutoTokenizer

    try:
        return AutoTokenizer.from_pretrained(name_or_path)
    except Exception as err:  # hub lookup failures, missing paths, bad checkpoints
        raise EncoderUnavailable(name_or_path, str(err)) from err
