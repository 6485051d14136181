import json
import subprocess
import sys

import pytest

from testab import cli, estimator
from testab.minilang import parse_program, parse_suite

from conftest import DEMO, FIXTURES, GOLDEN, SAMPLE


def run(argv, capsys):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(autouse=True)
def clean_env(monkeypatch, tmp_path):
    monkeypatch.delenv("TESTAB_SEED", raising=False)
    monkeypatch.chdir(tmp_path)


def test_unknown_subcommand(capsys):
    code, _, err = run(["frobnicate"], capsys)
    assert code == 1
    assert "usage:" in err


def test_missing_subcommand_and_bad_flag(capsys):
    assert run([], capsys)[0] == 1
    assert run(["check", SAMPLE, "--bogus"], capsys)[0] == 1
    assert run(["testgen", SAMPLE], capsys)[0] == 1  # --class is required
    assert run(["estimate", SAMPLE, "--env", "nope"], capsys)[0] == 1
    assert run(["estimate", SAMPLE, "--jobs", "0"], capsys)[0] == 1


def test_check_malformed_file(tmp_path, capsys):
    bad = tmp_path / "bad.ml"
    bad.write_text("class A {\n    public int f() {\n        return 1 +;\n    }\n}\n")
    code, _, err = run(["check", bad], capsys)
    assert code == 2
    assert f"{bad}:3:19: error:" in err


def test_check_ok(capsys):
    code, out, _ = run(["check", SAMPLE], capsys)
    assert code == 0 and "ok (1 classes, 7 methods)" in out


def test_missing_file(capsys):
    code, _, err = run(["check", "nowhere.ml"], capsys)
    assert code == 2 and "error" in err


def test_version(capsys):
    assert run(["--version"], capsys)[0] == 0


def test_estimate_golden_and_jobs_independent(tmp_path, capsys):
    golden = (GOLDEN / "demo_estimate.json").read_text(encoding="utf-8")
    out1 = tmp_path / "out1.json"
    out2 = tmp_path / "out2.json"
    assert run(["estimate", DEMO / "src", "--seed", "1", "--format", "json", "-o", out1], capsys)[0] == 0
    assert out1.read_text(encoding="utf-8") == golden
    assert run(["estimate", DEMO / "src", "--seed", "1", "--format", "json", "-o", out2,
                "--jobs", "2"], capsys)[0] == 0
    assert out2.read_bytes() == out1.read_bytes()
    report = json.loads(golden)
    assert report["header"]["tool"] == "testab" and report["header"]["seed"] == 1
    for m in report["methods"]:
        if m["testability"] is not None:
            assert m["testability"] == m["controllability"] * m["observability"]


def _testgen(capsys, *extra):
    code, out, _ = run(["testgen", SAMPLE, "--class", "SampleProg", "--budget", "200", *extra], capsys)
    assert code == 0
    return out


def test_seed_precedence(tmp_path, monkeypatch, capsys):
    default = _testgen(capsys)
    seven = _testgen(capsys, "--seed", "7")
    assert "seed=1 " in default and "seed=7 " in seven
    monkeypatch.setenv("TESTAB_SEED", "7")
    assert _testgen(capsys) == seven
    assert _testgen(capsys, "--seed", "1") == default
    monkeypatch.delenv("TESTAB_SEED")
    (tmp_path / "testab.json").write_text(json.dumps({"seed": 7}))
    assert _testgen(capsys) == seven
    monkeypatch.setenv("TESTAB_SEED", "1")
    assert _testgen(capsys) == default


def test_explicit_config_file(tmp_path, capsys):
    cfg = tmp_path / "custom.json"
    cfg.write_text(json.dumps({"seed": 7}))
    assert _testgen(capsys, "--config", cfg) == _testgen(capsys, "--seed", "7")
    cfg.write_text(json.dumps({"colour": "blue"}))
    code, _, err = run(["check", SAMPLE, "--config", cfg], capsys)
    assert code == 2 and "unknown config keys" in err


def test_testgen_output_is_a_suite(capsys):
    out = _testgen(capsys)
    suite = parse_suite(out)
    assert suite.cases and out.startswith("# generated by testab")
    assert _testgen(capsys) == out


def test_testgen_enriched_writes_pruned_suite(capsys):
    out = _testgen(capsys, "--enriched")
    assert "# pruned-from: SampleProgTest" in out
    assert "_custom_" not in out.split("\n", 2)[2]
    parse_suite(out)


def test_testgen_unknown_class(capsys):
    code, _, err = run(["testgen", SAMPLE, "--class", "Nope"], capsys)
    assert code == 2 and "Nope" in err


def test_metrics_csv(capsys):
    code, out, _ = run(["metrics", SAMPLE], capsys)
    lines = out.splitlines()
    assert code == 0
    assert lines[0] == "class,method,loc,rfc,cbo,cbo_modified,fan_in,fan_out,wmc"
    assert "SampleProg,updtState,4,1,0,0,0,0,1" in lines


def test_metrics_json_has_header(capsys):
    code, out, _ = run(["metrics", SAMPLE, "--format", "json"], capsys)
    data = json.loads(out)
    assert code == 0 and data["header"]["config"]["command"] == "metrics"
    assert len(data["rows"]) == 7


def test_mutants_with_suite(tmp_path, capsys):
    suite = tmp_path / "s.mlt"
    suite.write_text("test t { p = new SampleProg(); p.setScale(0); assert p.getScale() == 0; }\n")
    code, out, _ = run(["mutants", SAMPLE, "--suite", suite], capsys)
    assert code == 0
    assert "SampleProg.setScale:11:AOR:0,SampleProg,setScale,11,AOR,s * 100 -> s + 100,Revealed,t" in out


def test_mutants_bad_suite_reference(tmp_path, capsys):
    suite = tmp_path / "s.mlt"
    suite.write_text("test t { p = new Nope(); }\n")
    assert run(["mutants", SAMPLE, "--suite", suite], capsys)[0] == 2


def test_enrich_prints_valid_program(capsys):
    code, out, _ = run(["enrich", SAMPLE], capsys)
    assert code == 0
    program = parse_program(out)
    assert program.method("SampleProg", "_custom_4__").synthetic


def test_associate(capsys):
    code, out, _ = run(["associate", FIXTURES / "association"], capsys)
    assert code == 0
    assert "WidgetTest.testCloning,Widget,clone,StemMatch" in out.splitlines()


def test_invariant_violation_exit_code(monkeypatch, capsys):
    def broken(art):
        raise estimator.InvariantError("executed but not baseline")
    monkeypatch.setattr(estimator, "derive_sets", broken)
    code, _, err = run(["estimate", SAMPLE, "--budget-min", "100", "--budget-max", "100"], capsys)
    assert code == 3 and "internal error" in err


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "testab.cli", "check", str(SAMPLE)],
                          capture_output=True, text=True, cwd=tmp_path)
    assert proc.returncode == 0 and "ok" in proc.stdout
