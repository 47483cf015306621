import json
import subprocess
import sys
from pathlib import Path

import pytest

from nsrnn.harness.cli import main

DATA = Path(__file__).resolve().parent.parent / "data"


def test_generate_writes_splits_with_sidecars(tmp_path, capsys):
    assert main(["generate", "--task", "dyck", "--train", "20", "--valid", "10", "--out", str(tmp_path)]) == 0
    assert sorted(p.name for p in tmp_path.iterdir()) == ["train.txt", "train.txt.json", "valid.txt",
                                                          "valid.txt.json"]
    assert len((tmp_path / "train.txt").read_text().split()) == 20
    assert json.loads((tmp_path / "valid.txt.json").read_text())["task"] == "dyck"
    assert "20 training" in capsys.readouterr().out


def test_train_then_evaluate(tmp_path, capsys):
    data, runs = tmp_path / "data", tmp_path / "runs"
    main(["generate", "--task", "marked-reversal", "--train", "20", "--valid", "10", "--out", str(data)])
    assert main(["train", "--model", "lstm", "--data", str(data), "--max-epochs", "1", "--out", str(runs)]) == 0
    (ckpt,) = runs.glob("*.npz")
    assert ckpt.with_suffix(".csv").read_text().startswith("epoch,train_ce,valid_ce,valid_ce_diff,lr\n")
    capsys.readouterr()
    assert main(["evaluate", "--checkpoint", str(ckpt), "--min", "10", "--max", "13", "--per-length", "2"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "length,ce_diff" and [l.split(",")[0] for l in lines[1:]] == ["11", "13"]


def test_inspect_wfa_prints_dot(capsys):
    assert main(["inspect-wfa", "--input", "0110"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("digraph") and "->" in out


def test_inspect_wfa_reads_pda_file(tmp_path):
    out = tmp_path / "g.dot"
    assert main(["inspect-wfa", "--pda", str(DATA / "example.pda"), "--input", "0110", "--out", str(out)]) == 0
    assert out.read_text().startswith("digraph")


def test_sample_from_grammar_file(capsys):
    assert main(["sample", "--grammar", str(DATA / "marked.pcfg"), "--length", "5", "--count", "3"]) == 0
    words = capsys.readouterr().out.split()
    assert len(words) == 3 and all(len(w) == 5 and w[2] == "#" for w in words)


def test_hardest_encode_and_check(capsys):
    assert main(["hardest", "encode", "--grammar", str(DATA / "toy.gnf"), "--input", "aab"]) == 0
    image = capsys.readouterr().out.strip()
    assert image.startswith("$") or set(image) <= set("$(),;[]")
    assert main(["hardest", "check", "--input", image]) == 0
    assert main(["hardest", "check", "--grammar", str(DATA / "toy.gnf"), "--input", "ab"]) == 1
    assert capsys.readouterr().out.split() == ["accept", "reject"]


def test_usage_errors_exit_nonzero(tmp_path, capsys):
    with pytest.raises(SystemExit) as info:
        main(["generate"])
    assert info.value.code == 2
    with pytest.raises(SystemExit):
        main(["hardest", "encode", "--input", "ab"])
    assert main(["inspect-wfa", "--pda", str(tmp_path / "missing.pda"), "--input", "a"]) == 2
    assert "error" in capsys.readouterr().err


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "nsrnn.harness", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "inspect-wfa" in proc.stdout
