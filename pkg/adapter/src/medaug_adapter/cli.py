"""Adapter command line: bootstrap an encoder, then fine-tune and predict.

The primary toolkit is driven only through its public surfaces: corpora are
directories of .txt/.ann pairs, training data comes from ``medaug export``
CoNLL files, and predictions are standoff files ``medaug score`` accepts.
"""

from __future__ import annotations

import argparse
import subprocess
import sys
from pathlib import Path

from .conll import read_conll
from .encoder import EncoderUnavailable, bootstrap_encoder
from .train import AdapterError, TrainRun, finetune_and_predict


def export_for_training(corpus_dir: str, task: str, out_dir: str) -> Path:
    """Invoke the primary CLI to export BIO CoNLL files for every split."""
    subprocess.run(
        [sys.executable, "-m", "medaug.cli", "export",
         "--in", corpus_dir, "--task", task, "--out", out_dir],
        check=True,
    )
    return Path(out_dir)


def cmd_export(args: argparse.Namespace) -> int:
    export_for_training(args.corpus, args.task, args.out)
    return 0


def cmd_bootstrap(args: argparse.Namespace) -> int:
    units = read_conll(args.conll)
    sentences = [" ".join(u.words()) for u in units]
    bootstrap_encoder(
        sentences,
        args.out,
        seed=args.seed,
        vocab_size=args.vocab_size,
        mlm_epochs=args.mlm_epochs,
    )
    print(f"encoder saved to {args.out}", file=sys.stderr)
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    run = TrainRun(
        run_id=args.run_id,
        train_conll=args.train_conll,
        predict_conll=args.predict_conll,
        corpus_dir=args.corpus,
        encoder=args.encoder,
        out_dir=args.out,
        seed=args.seed,
        epochs=args.epochs,
        learning_rate=args.learning_rate,
        batch_size=args.batch_size,
        max_seq_len=args.max_seq_len,
    )
    out = finetune_and_predict(run)
    print(f"predictions written to {out}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="medaug-adapter")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export", help="export CoNLL files via the medaug CLI")
    p.add_argument("--corpus", required=True)
    p.add_argument("--task", choices=["id", "event"], required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("bootstrap", help="pretrain a tiny local encoder on a CoNLL file")
    p.add_argument("--conll", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--vocab-size", type=int, default=800)
    p.add_argument("--mlm-epochs", type=int, default=3)
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("run", help="fine-tune and write standoff predictions")
    p.add_argument("--run-id", default="run")
    p.add_argument("--train-conll", required=True)
    p.add_argument("--predict-conll", required=True)
    p.add_argument("--corpus", required=True, help="directory with the document .txt files")
    p.add_argument("--encoder", required=True, help="checkpoint directory or hub name")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--epochs", type=int, default=2)
    p.add_argument("--learning-rate", type=float, default=5e-4)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--max-seq-len", type=int, default=64)
    p.set_defaults(func=cmd_run)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_:
        return int(exit_.code or 0)
    try:
        return args.func(args)
    except EncoderUnavailable as err:
        print(f"error: {err}", file=sys.stderr)
        return 3
    except (AdapterError, OSError, subprocess.CalledProcessError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
