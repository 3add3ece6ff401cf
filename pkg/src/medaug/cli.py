"""Command-line entry point: one subcommand per pipeline stage.

Exit codes: 0 success, 1 validation issues found, 2 usage/config error,
3 provider failure after retries, 4 I/O or parse error. Randomized commands
require a seed (flag or seeded config); with the mock provider two identical
invocations produce bit-identical outputs. All file outputs are written
atomically and per-stage counts go to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import augment as aug
from . import baseline, corpus, evalkit, textproc
from .corpus import Corpus, CorpusError, Split, atomic_write_text, load_corpus, save_corpus
from .providers import HttpProvider, MockProvider, ProviderError

EXIT_OK = 0
EXIT_ISSUES = 1
EXIT_USAGE = 2
EXIT_PROVIDER = 3
EXIT_IO = 4


class UsageError(Exception):
    pass


def _log(stage: str, **fields) -> None:
    parts = " ".join(f"{k}={v}" for k, v in fields.items())
    print(f"[{stage}] {parts}", file=sys.stderr)


def _task_mode(name: str) -> evalkit.TaskMode:
    return evalkit.TaskMode(name)


def _scheme(task: evalkit.TaskMode) -> textproc.LabelScheme:
    return "drug" if task is evalkit.TaskMode.IDENTIFICATION else "event"


def cmd_validate(args: argparse.Namespace) -> int:
    issues = corpus.validate_directory(args.dir)
    for issue in issues:
        print(
            json.dumps(
                {
                    "doc_id": issue.doc_id,
                    "mention_id": issue.mention_id,
                    "category": issue.category,
                    "severity": issue.severity,
                    "message": issue.message,
                }
            )
        )
    errors = corpus.errors_only(issues)
    _log("validate", issues=len(issues), errors=len(errors), warnings=len(issues) - len(errors))
    failing = issues if args.strict else errors
    return EXIT_ISSUES if failing else EXIT_OK


def _synthetic_spec(args: argparse.Namespace) -> baseline.SyntheticSpec:
    try:
        raw = json.loads(Path(args.spec).read_text(encoding="utf-8"))
        if args.seed is not None:
            raw["seed"] = args.seed
        if "seed" not in raw:
            raise UsageError("synth requires a seed (in the spec file or via --seed)")
        if "label_mix" in raw:
            raw["label_mix"] = {
                corpus.EventLabel(k): v for k, v in raw["label_mix"].items()
            }
        for key in ("sentences_per_doc", "split_mix"):
            if key in raw:
                raw[key] = tuple(raw[key])
        if "medications" in raw:
            raw["medications"] = tuple(raw["medications"])
        return baseline.SyntheticSpec(**raw)
    except (TypeError, ValueError, AttributeError) as err:
        raise UsageError(f"bad synthetic spec: {err}") from err


def cmd_synth(args: argparse.Namespace) -> int:
    spec = _synthetic_spec(args)
    generated = baseline.generate_synthetic(spec)
    save_corpus(generated, args.out)
    _log("synth", documents=len(generated.documents), out=args.out)
    return EXIT_OK


def _load_augment_config(args: argparse.Namespace) -> aug.AugmentConfig:
    try:
        cfg = aug.load_config(args.config)
    except ValueError as err:
        raise UsageError(f"bad config: {err}") from err
    overrides = {}
    if getattr(args, "provider", None):
        overrides["provider"] = args.provider
    if getattr(args, "jobs", None):
        overrides["concurrency"] = args.jobs
    if getattr(args, "input", None):
        overrides["input_dir"] = args.input
    if overrides:
        from dataclasses import replace

        cfg = replace(cfg, **overrides)
    if not cfg.input_dir:
        raise UsageError("no input corpus: set input_dir in the config or pass --in")
    return cfg


def cmd_sample(args: argparse.Namespace) -> int:
    cfg = _load_augment_config(args)
    sampled = aug.sample_units(load_corpus(cfg.input_dir), cfg)
    for unit in sampled:
        print(
            json.dumps(
                {
                    "doc_id": unit.doc_id,
                    "start": unit.start,
                    "end": unit.end,
                    "text": unit.text,
                    "mentions": [
                        {"mention_id": m.mention_id, "surface": m.surface, "label": m.label.value}
                        for m in unit.mentions
                    ],
                },
                ensure_ascii=False,
            )
        )
    _log("sample", sampled=len(sampled))
    return EXIT_OK


def _build_provider(cfg: aug.AugmentConfig):
    if cfg.provider == "mock":
        return MockProvider()
    if cfg.provider == "http":
        if not cfg.endpoint or not cfg.model:
            raise UsageError("http provider requires endpoint and model in the config")
        try:
            return HttpProvider(
                cfg.endpoint, cfg.model, cfg.api_key_env, temperature=cfg.temperature
            )
        except ValueError as err:
            raise UsageError(str(err)) from err
    raise UsageError(f"unknown provider {cfg.provider!r}")


def cmd_augment(args: argparse.Namespace) -> int:
    cfg = _load_augment_config(args)
    provider = _build_provider(cfg)
    outcome = aug.run_augmentation(load_corpus(cfg.input_dir), cfg, provider)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    aug.write_records(outcome.records, out / "records.jsonl")
    drift_payload = outcome.drift.to_dict() if outcome.drift else None
    atomic_write_text(
        out / "drift.json", json.dumps(drift_payload, indent=2, ensure_ascii=False) + "\n"
    )
    stats = outcome.stats
    _log(
        "augment",
        eligible=stats.eligible,
        sampled=stats.sampled,
        generated=stats.generated,
        accepted=stats.accepted,
        rejected_missing_entity=stats.rejected_missing_entity,
        rejected_realign_failure=stats.rejected_realign_failure,
        provider_errors=stats.provider_errors,
        drift=outcome.drift.verdict if outcome.drift else "n/a",
    )
    return EXIT_OK


def cmd_merge(args: argparse.Namespace) -> int:
    original = load_corpus(args.orig)
    accepted = [r for r in aug.read_records(args.aug) if r.status == aug.STATUS_ACCEPTED]
    merged = aug.merge_corpus(original, accepted)
    save_corpus(merged, args.out)
    _log("merge", original=len(original.documents), accepted=len(accepted), merged=len(merged.documents))
    return EXIT_OK


def _load_texts(root: Path) -> dict[str, str]:
    return {
        p.stem: corpus.nfc(p.read_text(encoding="utf-8")) for p in sorted(root.glob("*.txt"))
    }


def cmd_tag(args: argparse.Namespace) -> int:
    train = load_corpus(args.train)
    gazetteer = baseline.build_gazetteer(train)
    rules = baseline.default_ruleset()
    texts = _load_texts(Path(args.input))
    if not texts:
        raise CorpusError(f"no .txt documents under {args.input}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    n_spans = 0
    for doc_id, text in texts.items():
        spans = baseline.tag(text, gazetteer, rules)
        doc = corpus.AnnotatedDocument(doc_id, text, tuple(spans))
        atomic_write_text(out / f"{doc_id}.ann", corpus.serialize_annotations(doc))
        n_spans += len(spans)
    _log("tag", documents=len(texts), predicted=n_spans, gazetteer=len(gazetteer.entries))
    return EXIT_OK


def _load_predictions(pred_dir: Path, gold: Corpus, ignore_unknown: bool = False) -> dict[str, list]:
    predictions: dict[str, list] = {}
    for path in sorted(pred_dir.glob("*.ann")):
        doc_id = path.stem
        if doc_id not in gold.documents:
            if ignore_unknown:
                continue  # predictions outside the scored split
            raise evalkit.UnknownDocument(doc_id)
        doc = corpus.parse_document(
            doc_id, gold.documents[doc_id].text, path.read_text(encoding="utf-8")
        )
        predictions[doc_id] = list(doc.mentions)
    return predictions


def _restrict_split(gold: Corpus, split: Split) -> Corpus:
    keep = {i for i, s in gold.split.items() if s == split}
    return Corpus(
        name=gold.name,
        documents={i: d for i, d in gold.documents.items() if i in keep},
        split={i: s for i, s in gold.split.items() if i in keep},
    )


def cmd_score(args: argparse.Namespace) -> int:
    gold = load_corpus(args.gold)
    if args.split:
        gold = _restrict_split(gold, Split(args.split))
    pred_dir = Path(args.pred)
    if not pred_dir.is_dir():
        raise CorpusError(f"not a prediction directory: {pred_dir}")
    predictions = _load_predictions(pred_dir, gold, ignore_unknown=bool(args.split))
    report = evalkit.score(gold, predictions, _task_mode(args.task))
    atomic_write_text(args.report, evalkit.report_to_json(report))
    print(evalkit.render_table(report), end="")
    _log(
        "score",
        documents=report.n_documents,
        gold=report.n_gold,
        pred=report.n_pred,
        strict_micro_f=f"{report.strict.micro.fscore:.4f}",
        lenient_micro_f=f"{report.lenient.micro.fscore:.4f}",
    )
    return EXIT_OK


def cmd_export(args: argparse.Namespace) -> int:
    loaded = load_corpus(args.input)
    scheme = _scheme(_task_mode(args.task))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = {}
    for split in Split:
        docs = loaded.docs_in_split(split)
        if not docs:
            continue
        sequences = []
        for doc in docs:
            sequences.extend(textproc.encode_document(doc, scheme))
        atomic_write_text(out / f"{split.value}.conll", textproc.format_conll(sequences))
        written[split.value] = len(sequences)
    _log("export", **written)
    return EXIT_OK


def cmd_diff(args: argparse.Namespace) -> int:
    reports = []
    for path in (args.a, args.b):
        try:
            reports.append(
                evalkit.report_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
            )
        except (KeyError, TypeError, ValueError) as err:
            raise evalkit.ScoringError(f"not a score report: {path} ({err})") from err
    delta = evalkit.diff_reports(reports[0], reports[1])
    print(
        json.dumps(
            {
                "task": delta.task.value,
                "deltas": delta.deltas,
                "changed": list(delta.changed),
            },
            indent=2,
        )
    )
    _log("diff", changed=len(delta.changed))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="medaug",
        description="Paraphrase augmentation and strict/lenient evaluation for medication-annotated text.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a corpus directory against all invariants")
    p.add_argument("dir")
    p.add_argument("--strict", action="store_true", help="treat warnings as failures")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("sample", help="print the sampled augmentation units")
    p.add_argument("--config", required=True)
    p.add_argument("--in", dest="input", default=None)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("augment", help="run the paraphrase augmentation pipeline")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--provider", choices=["mock", "http"], default=None)
    p.add_argument("--in", dest="input", default=None)
    p.add_argument("--jobs", type=int, default=None)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("merge", help="merge accepted augmentation records into a corpus")
    p.add_argument("--orig", required=True)
    p.add_argument("--aug", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("tag", help="tag documents with the gazetteer baseline")
    p.add_argument("--train", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_tag)

    p = sub.add_parser("score", help="score standoff predictions against gold")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--task", choices=["id", "event"], required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--split", choices=["train", "dev", "test"], default=None)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("export", help="export BIO-encoded CoNLL files per split")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--task", choices=["id", "event"], required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("diff", help="diff two score reports")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.set_defaults(func=cmd_diff)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_:  # argparse handles usage errors itself
        return int(exit_.code or 0)
    try:
        return args.func(args)
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except evalkit.TaskMismatch as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except ProviderError as err:
        print(f"error: provider failure: {err}", file=sys.stderr)
        return EXIT_PROVIDER
    except (CorpusError, evalkit.ScoringError, aug.AugmentError, baseline.BaselineError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_IO
    except (OSError, json.JSONDecodeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
