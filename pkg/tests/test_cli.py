from __future__ import annotations

import json
from pathlib import Path

import pytest

from medaug.cli import main

SYNTH_SPEC = {"n_documents": 30, "seed": 17, "sentences_per_doc": [3, 6]}


def _write(path: Path, payload: dict) -> Path:
    path.write_text(json.dumps(payload), encoding="utf-8")
    return path


@pytest.fixture
def corpus_dir(tmp_path: Path) -> Path:
    spec = _write(tmp_path / "spec.json", SYNTH_SPEC)
    out = tmp_path / "corpus"
    assert main(["synth", "--spec", str(spec), "--out", str(out)]) == 0
    return out


def test_synth_requires_seed(tmp_path: Path) -> None:
    spec = _write(tmp_path / "spec.json", {"n_documents": 5})
    assert main(["synth", "--spec", str(spec), "--out", str(tmp_path / "o")]) == 2


def test_synth_seed_flag_overrides(tmp_path: Path) -> None:
    spec = _write(tmp_path / "spec.json", {"n_documents": 5})
    assert main(["synth", "--spec", str(spec), "--out", str(tmp_path / "o"), "--seed", "3"]) == 0


def test_synth_is_deterministic(tmp_path: Path) -> None:
    spec = _write(tmp_path / "spec.json", SYNTH_SPEC)
    for name in ("a", "b"):
        assert main(["synth", "--spec", str(spec), "--out", str(tmp_path / name)]) == 0
    files_a = sorted((tmp_path / "a").iterdir())
    files_b = sorted((tmp_path / "b").iterdir())
    assert [f.name for f in files_a] == [f.name for f in files_b]
    for fa, fb in zip(files_a, files_b):
        assert fa.read_bytes() == fb.read_bytes()


def test_validate_clean_corpus(corpus_dir: Path, capsys) -> None:
    assert main(["validate", str(corpus_dir)]) == 0
    assert capsys.readouterr().out == ""


def test_validate_reports_surface_mismatch(tmp_path: Path, capsys) -> None:
    (tmp_path / "a.txt").write_text("Start Lipitor now.", encoding="utf-8")
    (tmp_path / "a.ann").write_text("T1\tDisposition 6 13\tXXXXXXX\n", encoding="utf-8")
    code = main(["validate", str(tmp_path)])
    out = capsys.readouterr().out
    assert code == 1
    issues = [json.loads(line) for line in out.splitlines()]
    assert len(issues) == 1
    assert issues[0]["category"] == "SurfaceMismatch"
    assert issues[0]["doc_id"] == "a"


def test_validate_reports_missing_pair_and_manifest_issue(tmp_path: Path, capsys) -> None:
    (tmp_path / "a.txt").write_text("x", encoding="utf-8")
    (tmp_path / "a.ann").write_text("", encoding="utf-8")
    (tmp_path / "orphan.txt").write_text("y", encoding="utf-8")
    (tmp_path / "splits.tsv").write_text("a\ttrain\nghost\ttest\n", encoding="utf-8")
    code = main(["validate", str(tmp_path)])
    out = capsys.readouterr().out
    assert code == 1
    categories = {json.loads(line)["category"] for line in out.splitlines()}
    assert categories == {"MissingPair", "ManifestError"}


def test_validate_missing_dir_is_io_error(tmp_path: Path) -> None:
    assert main(["validate", str(tmp_path / "nope")]) == 4


def test_usage_error_exit_code() -> None:
    assert main(["no-such-command"]) == 2
    assert main(["score", "--gold", "x"]) == 2  # missing required flags


def test_malformed_spec_and_report_files(tmp_path: Path, corpus_dir: Path) -> None:
    bad = tmp_path / "bad.json"
    bad.write_text("{not json", encoding="utf-8")
    assert main(["synth", "--spec", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert main(["diff", "--a", str(bad), "--b", str(bad)]) == 4
    not_report = tmp_path / "x.json"
    not_report.write_text("{}", encoding="utf-8")
    assert main(["diff", "--a", str(not_report), "--b", str(not_report)]) == 4


def test_score_missing_pred_dir(corpus_dir: Path, tmp_path: Path) -> None:
    assert main([
        "score", "--gold", str(corpus_dir), "--pred", str(tmp_path / "nope"),
        "--task", "id", "--report", str(tmp_path / "r.json"),
    ]) == 4


def test_score_identical_dirs_is_perfect(corpus_dir: Path, tmp_path: Path, capsys) -> None:
    report_path = tmp_path / "report.json"
    code = main([
        "score", "--gold", str(corpus_dir), "--pred", str(corpus_dir),
        "--task", "event", "--report", str(report_path),
    ])
    assert code == 0
    payload = json.loads(report_path.read_text())
    for mode in ("strict", "lenient"):
        assert payload[mode]["micro"]["fscore"] == 1.0
        assert payload[mode]["macro"]["fscore"] == 1.0
    table = capsys.readouterr().out
    assert "Strict evaluation" in table


def test_score_report_is_byte_stable(corpus_dir: Path, tmp_path: Path) -> None:
    paths = [tmp_path / "r1.json", tmp_path / "r2.json"]
    for path in paths:
        assert main([
            "score", "--gold", str(corpus_dir), "--pred", str(corpus_dir),
            "--task", "id", "--report", str(path),
        ]) == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_tag_then_score_closed_loop(corpus_dir: Path, tmp_path: Path) -> None:
    pred_dir = tmp_path / "pred"
    assert main(["tag", "--train", str(corpus_dir), "--in", str(corpus_dir), "--out", str(pred_dir)]) == 0
    report_path = tmp_path / "report.json"
    for task in ("id", "event"):
        assert main([
            "score", "--gold", str(corpus_dir), "--pred", str(pred_dir),
            "--task", task, "--report", str(report_path),
        ]) == 0
        assert json.loads(report_path.read_text())["strict"]["micro"]["fscore"] == 1.0


def test_score_split_filter(corpus_dir: Path, tmp_path: Path) -> None:
    report_path = tmp_path / "report.json"
    assert main([
        "score", "--gold", str(corpus_dir), "--pred", str(corpus_dir),
        "--task", "event", "--report", str(report_path), "--split", "test",
    ]) == 0
    payload = json.loads(report_path.read_text())
    manifest = (corpus_dir / "splits.tsv").read_text().splitlines()
    n_test = sum(1 for line in manifest if line.endswith("\ttest"))
    assert payload["n_documents"] == n_test > 0


def _augment_config(tmp_path: Path, corpus_dir: Path, **overrides) -> Path:
    payload = {"seed": 23, "fraction": 0.10, "input_dir": str(corpus_dir)}
    payload.update(overrides)
    return _write(tmp_path / "augment.json", payload)


def test_sample_outputs_json_lines(corpus_dir: Path, tmp_path: Path, capsys) -> None:
    config = _augment_config(tmp_path, corpus_dir)
    assert main(["sample", "--config", str(config)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines
    unit = json.loads(lines[0])
    assert {"doc_id", "start", "end", "text", "mentions"} <= set(unit)


def test_augment_mock_is_bit_identical(corpus_dir: Path, tmp_path: Path) -> None:
    config = _augment_config(tmp_path, corpus_dir)
    outs = [tmp_path / "run1", tmp_path / "run2"]
    for out in outs:
        assert main(["augment", "--config", str(config), "--out", str(out), "--provider", "mock"]) == 0
    records = [(out / "records.jsonl").read_bytes() for out in outs]
    assert records[0] == records[1]
    drift = json.loads((outs[0] / "drift.json").read_text())
    assert drift["verdict"] in {"pass", "warn", "fail"}
    assert (outs[0] / "drift.json").read_bytes() == (outs[1] / "drift.json").read_bytes()


def test_augment_jobs_flag_keeps_output_identical(corpus_dir: Path, tmp_path: Path) -> None:
    config = _augment_config(tmp_path, corpus_dir)
    serial = tmp_path / "serial"
    parallel = tmp_path / "parallel"
    assert main(["augment", "--config", str(config), "--out", str(serial)]) == 0
    assert main(["augment", "--config", str(config), "--out", str(parallel), "--jobs", "4"]) == 0
    assert (serial / "records.jsonl").read_bytes() == (parallel / "records.jsonl").read_bytes()


def test_augment_requires_input_dir(tmp_path: Path) -> None:
    config = _write(tmp_path / "cfg.json", {"seed": 1})
    assert main(["augment", "--config", str(config), "--out", str(tmp_path / "o")]) == 2


def test_augment_unseeded_config_rejected(corpus_dir: Path, tmp_path: Path) -> None:
    config = _write(tmp_path / "cfg.json", {"fraction": 0.1, "input_dir": str(corpus_dir)})
    assert main(["augment", "--config", str(config), "--out", str(tmp_path / "o")]) == 2


def test_merge_extends_corpus_and_validates(corpus_dir: Path, tmp_path: Path) -> None:
    config = _augment_config(tmp_path, corpus_dir)
    aug_out = tmp_path / "aug"
    assert main(["augment", "--config", str(config), "--out", str(aug_out)]) == 0
    records = (aug_out / "records.jsonl").read_text().splitlines()
    accepted = [json.loads(r) for r in records if json.loads(r)["status"] == "accepted"]
    merged_dir = tmp_path / "merged"
    assert main([
        "merge", "--orig", str(corpus_dir), "--aug", str(aug_out / "records.jsonl"),
        "--out", str(merged_dir),
    ]) == 0
    assert main(["validate", str(merged_dir)]) == 0
    n_orig = len(list(corpus_dir.glob("*.txt")))
    assert len(list(merged_dir.glob("*.txt"))) == n_orig + len(accepted)
    manifest = dict(
        line.split("\t") for line in (merged_dir / "splits.tsv").read_text().splitlines()
    )
    for doc_id, split in manifest.items():
        if "#aug" in doc_id:
            assert split == "train"


def test_export_writes_split_files(corpus_dir: Path, tmp_path: Path) -> None:
    out = tmp_path / "conll"
    assert main(["export", "--in", str(corpus_dir), "--task", "event", "--out", str(out)]) == 0
    train = (out / "train.conll").read_text()
    assert train.startswith("# doc = ")
    assert "\tB-" in train
    assert (out / "test.conll").exists()
    out_id = tmp_path / "conll-id"
    assert main(["export", "--in", str(corpus_dir), "--task", "id", "--out", str(out_id)]) == 0
    assert "B-Drug" in (out_id / "train.conll").read_text()


def test_diff_identical_reports(corpus_dir: Path, tmp_path: Path, capsys) -> None:
    report_path = tmp_path / "r.json"
    assert main([
        "score", "--gold", str(corpus_dir), "--pred", str(corpus_dir),
        "--task", "event", "--report", str(report_path),
    ]) == 0
    capsys.readouterr()
    assert main(["diff", "--a", str(report_path), "--b", str(report_path)]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["changed"] == []


def test_diff_task_mismatch_is_usage_error(corpus_dir: Path, tmp_path: Path) -> None:
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    for path, task in ((a, "event"), (b, "id")):
        assert main([
            "score", "--gold", str(corpus_dir), "--pred", str(corpus_dir),
            "--task", task, "--report", str(path),
        ]) == 0
    assert main(["diff", "--a", str(a), "--b", str(b)]) == 2


def test_http_provider_without_key_is_usage_error(corpus_dir: Path, tmp_path: Path, monkeypatch) -> None:
    monkeypatch.delenv("MEDAUG_API_KEY", raising=False)
    config = _augment_config(
        tmp_path, corpus_dir, provider="http", endpoint="https://api.example", model="m"
    )
    assert main(["augment", "--config", str(config), "--out", str(tmp_path / "o")]) == 2
