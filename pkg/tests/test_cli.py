import json
import os
import shutil
import subprocess
import sys

import pytest

from helpers import ROOT
from pclbench.cli import main

FIX = os.path.join(ROOT, "fixtures")


def fx(name):
    return os.path.join(FIX, f"{name}.pcl")


def test_parse(capsys):
    assert main(["parse", fx("cr")]) == 0
    out = capsys.readouterr().out
    assert "role Init(X, Y)" in out and "BS4" in out


def test_parse_json(capsys):
    assert main(["parse", fx("cr"), "--format", "json-like"]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["protocol"] == "CR" and len(d["basic_sequences"]) == 4


def test_runs_limit(capsys):
    assert main(["runs", fx("cr"), "--threads", "1", "--limit", "2", "--format", "json-like"]) == 0
    assert len(json.loads(capsys.readouterr().out)) == 2


def test_check_exit_codes(capsys):
    assert main(["check", fx("cr"), "--axiom", "VER", "--threads", "1"]) == 0
    assert main(["check", fx("hash3"), "--axiom", "HASH3", "--threads", "1"]) == 1
    out = capsys.readouterr().out
    assert "counterexample" in out


def test_check_json_and_output_file(tmp_path):
    out = tmp_path / "v.json"
    rc = main(["check", fx("hash3"), "--axiom", "HASH3", "--threads", "1",
               "--format", "json-like", "--output", str(out)])
    assert rc == 1
    d = json.loads(out.read_text())
    assert d["outcome"] == "counterexample" and d["witness"]["trace"]


def test_feature_mismatch(capsys):
    assert main(["check", fx("dh_min"), "--axiom", "DH1", "--threads", "1"]) == 2
    assert "dh_theory" in capsys.readouterr().err
    assert main(["check", fx("dh_min"), "--axiom", "DH1", "--threads", "1", "--dh-theory", "on"]) == 0


def test_usage_errors(capsys, tmp_path):
    assert main(["check", fx("cr"), "--axiom", "NOPE"]) == 2
    assert main(["check", str(tmp_path / "missing.pcl"), "--axiom", "VER"]) == 2
    assert main(["check", fx("cr"), "--axiom", "VER", "--threads", "0"]) == 2
    assert main(["check", fx("cr"), "--axiom", "VER", "--keys", "rot13"]) == 2
    assert main(["bogus"]) == 2
    capsys.readouterr()


def test_empty_file_reports_position(capsys, tmp_path):
    p = tmp_path / "empty.pcl"
    p.write_text("")
    assert main(["parse", str(p)]) == 2
    assert ":1:1: syntax error" in capsys.readouterr().err


def test_formula_file(tmp_path, capsys):
    f = tmp_path / "f.pcl"
    f.write_text("forall thread X, m. Receive(X, m) => exists party Z. Send(Z, m)\n")
    assert main(["check", fx("cr"), "--formula-file", str(f), "--threads", "1"]) == 0
    f.write_text("forall thread X. Send(X, \n")
    assert main(["check", fx("cr"), "--formula-file", str(f)]) == 2
    capsys.readouterr()


def test_blocks_mode(capsys):
    assert main(["check", fx("cr"), "--invariant", "GAMMA1", "--blocks", "--threads", "1"]) == 1
    assert main(["check", fx("cr"), "--invariant", "GAMMA1", "--blocks", "--threads", "1",
                 "--precedence", "on"]) == 0
    capsys.readouterr()


def test_environment_defaults(monkeypatch, capsys):
    monkeypatch.setenv("PCLBENCH_THREADS", "1")
    monkeypatch.setenv("PCLBENCH_FORMAT", "json-like")
    assert main(["check", fx("cr"), "--axiom", "VER"]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["bounds"]["threads"] == 1
    # flags win over the environment
    assert main(["check", fx("cr"), "--axiom", "VER", "--threads", "2"]) == 0
    assert json.loads(capsys.readouterr().out)["bounds"]["threads"] == 2
    monkeypatch.setenv("PCLBENCH_TYPED", "maybe")
    assert main(["check", fx("cr"), "--axiom", "VER"]) == 2


def test_axioms_listing(capsys):
    assert main(["axioms"]) == 0
    out = capsys.readouterr().out
    assert "GAMMA1" in out and "needs dh_theory=True" in out


def test_repro_case(capsys):
    assert main(["repro", "hash3"]) == 0
    assert "AGREES" in capsys.readouterr().out
    assert main(["repro", "nope"]) == 2


@pytest.mark.skipif(shutil.which("pclbench") is None, reason="console script not installed")
def test_console_script():
    r = subprocess.run(["pclbench", "repro", "sec-symmetric", "--format", "json-like"],
                       capture_output=True, text=True, timeout=120)
    assert r.returncode == 0
    assert json.loads(r.stdout)["agrees"] is True


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "pclbench.cli", "axioms"], capture_output=True,
                       text=True, timeout=60)
    assert r.returncode == 0 and "VER" in r.stdout
