import json
import subprocess
import sys
from pathlib import Path

import pytest

from sge.automata import LassoWord
from sge.cli import EXIT_INPUT, EXIT_MISMATCH, EXIT_NEGATIVE, EXIT_OK, EXIT_USAGE, CliError, main, parse_lasso

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def fx(name):
    return str(FIXTURES / name)


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.mark.parametrize(
    "name, code",
    [
        ("phi1.spec", EXIT_OK),
        ("phi1_controlled.spec", EXIT_NEGATIVE),
        ("phi2_k1.spec", EXIT_NEGATIVE),
        ("phi2_k2.spec", EXIT_OK),
        ("simplify.spec", EXIT_OK),
        ("no_hidden.spec", EXIT_OK),
    ],
)
def test_synth_exit_codes(capsys, tmp_path, name, code):
    got, out, _ = run(capsys, "synth", fx(name), "--out", tmp_path)
    assert got == code
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["exit_code"] == code
    assert (tmp_path / "tge.json").exists() == (code == EXIT_OK)


def test_synth_then_verify_and_reproducible(capsys, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(capsys, "synth", fx("phi2_k2.spec"), "--out", a, "--emit-dot")[0] == EXIT_OK
    assert run(capsys, "synth", fx("phi2_k2.spec"), "--out", b)[0] == EXIT_OK
    assert (a / "tge.json").read_bytes() == (b / "tge.json").read_bytes()
    assert (a / "tge.dot").read_text().startswith("digraph")
    code, out, _ = run(capsys, "verify", a / "tge.json", fx("phi2_k2.spec"), "--samples", 20)
    assert code == EXIT_OK
    assert "0 violations" in out


def test_verify_failure_prints_counterexample(capsys, tmp_path):
    run(capsys, "synth", fx("phi1.spec"), "--out", tmp_path)
    code, out, _ = run(capsys, "verify", tmp_path / "tge.json", fx("phi2_k2.spec"))
    assert code == EXIT_NEGATIVE
    assert "counterexample" in out
    assert "loop: after step" in out


def test_verify_partition_mismatch(capsys, tmp_path):
    run(capsys, "synth", fx("phi1.spec"), "--out", tmp_path)
    code, _, err = run(capsys, "verify", tmp_path / "tge.json", fx("no_hidden.spec"))
    assert code == EXIT_MISMATCH
    assert "partition" in err


def test_bad_inputs(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"format": "tge", "states": 1}')
    assert run(capsys, "verify", bad, fx("phi1.spec"))[0] >= 10
    bad.write_text("not json")
    assert run(capsys, "simulate", bad, "{i}")[0] == EXIT_INPUT
    assert run(capsys, "synth", tmp_path / "missing.spec")[0] == EXIT_INPUT
    spec = tmp_path / "broken.spec"
    spec.write_text("[signals]\nhidden = i\n[spec]\nformula = G (i\n")
    code, _, err = run(capsys, "synth", spec)
    assert code == EXIT_INPUT
    assert "line 4" in err


def test_usage_errors(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == EXIT_USAGE
    assert main(["synth", fx("phi1.spec"), "--bound-schedule", "x"]) == EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        main(["transform", "reveal", fx("server_figure.json")])
    assert exc.value.code == EXIT_USAGE


def test_simulate(capsys, tmp_path):
    run(capsys, "synth", fx("phi2_k2.spec"), "--out", tmp_path)
    code, out, _ = run(capsys, "simulate", tmp_path / "tge.json", "{i} ; {},{i}")
    assert code == EXIT_OK
    lines = out.splitlines()
    assert lines[1].split() == ["j", "v", "h", "state", "c", "program", "memory", "g"]
    assert "loop: after step 3 continue with step 2" in out
    code, out, _ = run(capsys, "simulate", tmp_path / "tge.json", "{i}")
    assert code == EXIT_OK
    assert len([x for x in out.splitlines() if x.startswith("1 ")]) == 1
    assert run(capsys, "simulate", tmp_path / "tge.json", "{zz}")[0] == EXIT_INPUT
    code, out, _ = run(capsys, "--seed", 3, "simulate", tmp_path / "tge.json")
    assert code == EXIT_OK
    assert out == run(capsys, "--seed", 3, "simulate", tmp_path / "tge.json")[1]


def test_parse_lasso():
    assert parse_lasso("{a,b} ; {}") == LassoWord([{"a", "b"}], [set()])
    assert parse_lasso("{a},{}") == [frozenset({"a"}), frozenset()]
    with pytest.raises(CliError):
        parse_lasso("{a ;")


def test_transform_round_trips(capsys, tmp_path):
    run(capsys, "synth", fx("phi2_k2.spec"), "--out", tmp_path / "s")
    tge = tmp_path / "s" / "tge.json"
    code, out, _ = run(capsys, "transform", "to-transducer", tge, "--out", tmp_path / "t")
    assert code == EXIT_OK
    assert "-> 2 states" in out
    trans = tmp_path / "t" / "transducer.json"
    assert json.loads(trans.read_text())["format"] == "transducer"
    assert run(capsys, "transform", "from-transducer", trans, "--out", tmp_path / "f")[0] == EXIT_OK
    # one state, memory = transducer states: same partition, still realizing
    assert run(capsys, "verify", tmp_path / "f" / "tge.json", fx("phi2_k2.spec"))[0] == EXIT_OK
    assert run(capsys, "transform", "reveal", tge, "--signals", "", "--out", tmp_path / "r")[0] == EXIT_OK
    assert run(capsys, "verify", tmp_path / "r" / "tge.json", fx("phi2_k2.spec"))[0] == EXIT_OK
    assert run(capsys, "transform", "reveal", tge, "--signals", "zz", "--out", tmp_path / "x")[0] == EXIT_INPUT
    report = json.loads((tmp_path / "t" / "report.json").read_text())
    assert report["command"] == "transform"


def test_transform_tighten(capsys, tmp_path):
    run(capsys, "synth", fx("simplify.spec"), "--out", tmp_path / "s", "--program-mode", "full")
    code, _, _ = run(
        capsys, "transform", "tighten", tmp_path / "s" / "tge.json", "--spec", fx("simplify.spec"), "--out", tmp_path / "t"
    )
    assert code == EXIT_OK
    data = json.loads((tmp_path / "t" / "tge.json").read_text())
    assert all(len(p["rows"]) == 2 for p in data["programs"])
    assert run(capsys, "verify", tmp_path / "t" / "tge.json", fx("simplify.spec"))[0] == EXIT_OK


def test_analyze_table(capsys):
    code, out, _ = run(capsys, "analyze", fx("running.spec"))
    assert code == EXIT_OK
    assert "{h1 & h3, h2}" in out
    for row in ["F  F  | {h2}", "F  T  | {}", "T  F  | {h1 & h3, h2}", "T  T  | {h1 & h3}"]:
        assert row in out
    code, out, _ = run(capsys, "analyze", fx("simplify.spec"))
    assert "16" in out and "4" in out


def test_emit_automaton(capsys, tmp_path):
    assert run(capsys, "synth", fx("phi1.spec"), "--out", tmp_path, "--emit-automaton")[0] == EXIT_OK
    data = json.loads((tmp_path / "automaton.json").read_text())
    assert data["format"] == "nbw"


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "sge", "analyze", fx("simplify.spec")], capture_output=True, text=True, check=False
    )
    assert proc.returncode == 0
    assert "cl_H" in proc.stdout
