import json
import subprocess
import sys

import numpy as np
import pytest

from sigver.cli import main
from sigver.dtw import AlignedPair
from sigver.features import CHANNEL_NAMES
from sigver.model import ModelConfig, SiameseModel


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    assert main(["synth", "--subjects", "4", "--genuine", "3", "--forgeries", "2", "--seed", "1",
                 "--val-subjects", "2", "--out", str(out)]) == 0
    return out


def test_synth_writes_manifest_and_files(corpus):
    entries = json.loads((corpus / "manifest.json").read_text())
    assert len(entries) == 4 * 5
    assert all((corpus / e["path"]).exists() for e in entries)
    train = {e["subject_id"] for e in json.loads((corpus / "train.json").read_text())}
    val = {e["subject_id"] for e in json.loads((corpus / "val.json").read_text())}
    assert len(train) == len(val) == 2 and not train & val
    comps = json.loads((corpus / "val_comparisons.json").read_text())
    assert {c["enrolled_subject"] for c in comps} == val


def test_synth_is_byte_identical(tmp_path, corpus):
    main(["synth", "--subjects", "4", "--genuine", "3", "--forgeries", "2", "--seed", "1",
          "--val-subjects", "2", "--out", str(tmp_path)])
    for f in corpus.rglob("*"):
        if f.is_file():
            assert (tmp_path / f.relative_to(corpus)).read_bytes() == f.read_bytes(), f


def first_signature(corpus):
    return corpus / json.loads((corpus / "manifest.json").read_text())[0]["path"]


def test_extract(tmp_path, corpus):
    out = tmp_path / "f.tsv"
    assert main(["extract", "--input", str(first_signature(corpus)), "--out", str(out), "--seed", "0"]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].split("\t") == list(CHANNEL_NAMES)
    values = np.loadtxt(out, skiprows=1)
    assert values.shape[1] == 23 and np.all(np.isfinite(values))


def test_align_record(tmp_path, corpus):
    entries = json.loads((corpus / "manifest.json").read_text())
    out = tmp_path / "p.bin"
    assert main(["align", "--enrolled", str(corpus / entries[0]["path"]),
                 "--questioned", str(corpus / entries[1]["path"]), "--label", "match",
                 "--out", str(out)]) == 0
    pair = AlignedPair.from_bytes(out.read_bytes())
    assert pair.label == "match" and pair.a.shape == (2000, 23)
    first = out.read_bytes()
    main(["align", "--enrolled", str(corpus / entries[0]["path"]),
          "--questioned", str(corpus / entries[1]["path"]), "--label", "match", "--out", str(out)])
    assert out.read_bytes() == first


def test_gradcheck_passes(capsys):
    assert main(["gradcheck", "--variant", "vanilla", "--f64", "--json", "--max-entries", "6"]) == 0
    record = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert record["max_relative_error"] <= 1e-4 and record["passed"]


def test_evaluate_rejects_overlap(tmp_path, corpus, capsys):
    ckpt = tmp_path / "m.ckpt"
    train_subjects = sorted({e["subject_id"] for e in json.loads((corpus / "manifest.json").read_text())})
    SiameseModel(ModelConfig(variant="vanilla")).save(ckpt, meta={"train_subjects": train_subjects})
    code = main(["evaluate", "--model", str(ckpt), "--manifest", str(corpus / "comparisons.json"),
                 "--out-dir", str(tmp_path / "r")])
    assert code == 3
    assert "protocol error: overlapping subjects" in capsys.readouterr().err
    assert not (tmp_path / "r" / "report.json").exists()


def test_evaluate_writes_report(tmp_path, corpus):
    ckpt = tmp_path / "m.ckpt"
    train_subjects = sorted({e["subject_id"] for e in json.loads((corpus / "train.json").read_text())})
    SiameseModel(ModelConfig(variant="vanilla")).save(ckpt, meta={"train_subjects": train_subjects})
    args = ["evaluate", "--model", str(ckpt), "--manifest", str(corpus / "val_comparisons.json")]
    assert main(args + ["--out-dir", str(tmp_path / "r1")]) == 0
    assert main(args + ["--out-dir", str(tmp_path / "r2")]) == 0
    for name in ("report.json", "det_random.csv", "det_skilled.csv", "det_overall.csv"):
        assert (tmp_path / "r1" / name).read_bytes() == (tmp_path / "r2" / name).read_bytes()
    report = json.loads((tmp_path / "r1" / "report.json").read_text())
    assert set(report["counts"]) == {"genuine", "random", "skilled"}


def test_unknown_subcommand_and_flag(capsys):
    assert main(["dance"]) == 1
    assert "usage" in capsys.readouterr().err
    assert main(["synth", "--subjects", "2", "--genuine", "2", "--forgeries", "1", "--out", "x", "--bogus"]) == 1


def test_missing_input_is_io_error(tmp_path, capsys):
    assert main(["extract", "--input", str(tmp_path / "nope.tsv"), "--out", str(tmp_path / "o.tsv")]) == 2
    assert capsys.readouterr().err.strip()


def test_malformed_input_is_validation_error(tmp_path, capsys):
    bad = tmp_path / "bad.tsv"
    bad.write_text("x\ty\ttimestamp_ms\tpressure\n0\t0\t0\t1\n1\t1\t10\n")
    assert main(["extract", "--input", str(bad), "--out", str(tmp_path / "o.tsv")]) == 1
    err = capsys.readouterr().err.strip()
    assert len(err.splitlines()) == 1 and "line 2" in err
    assert not (tmp_path / "o.tsv").exists()


@pytest.mark.parametrize("sub", ["synth", "extract", "align", "gradcheck", "train", "evaluate"])
def test_help_per_subcommand(sub, capsys):
    assert main([sub, "--help"]) == 0
    assert "--seed" in capsys.readouterr().out


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "sigver.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "gradcheck" in proc.stdout


def test_train_log_and_rerun_identical(tmp_path, corpus, capsys):
    def run(tag):
        args = ["train", "--variant", "vanilla", "--train-manifest", str(corpus / "train.json"),
                "--val-manifest", str(corpus / "val.json"), "--seed", "3", "--epochs", "2",
                "--pairs-per-epoch", "4", "--batch", "4", "--out", str(tmp_path / f"{tag}.ckpt"),
                "--log", str(tmp_path / f"{tag}.jsonl")]
        assert main(args) == 0
        return (tmp_path / f"{tag}.jsonl").read_text(), (tmp_path / f"{tag}.ckpt").read_bytes()

    log_a, ckpt_a = run("a")
    log_b, ckpt_b = run("b")
    assert log_a == log_b and ckpt_a == ckpt_b
    records = [json.loads(line) for line in log_a.splitlines()]
    assert [r["epoch"] for r in records] == [1, 2]
    assert set(records[0]) == {"epoch", "loss", "val_eer_r", "val_eer_s", "val_eer_o"}
    meta = json.loads((tmp_path / "a.ckpt.json").read_text())
    assert meta["config"]["variant"] == "vanilla"
