import csv
import json
import subprocess
import sys
from fractions import Fraction as F

import pytest

from divergia.cli import (
    EXIT_FAIL,
    EXIT_GUARD,
    EXIT_PASS,
    EXIT_USAGE,
    UsageError,
    main,
    parse_int,
    parse_int_set,
    parse_rational,
    resolve_config,
)


def write(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(json.dumps(obj) if not isinstance(obj, str) else obj)
    return str(p)


def run_cli(tmp_path, experiment, config, out="out"):
    cfg = write(tmp_path, f"{experiment}.json", config)
    out_dir = tmp_path / out
    return main([experiment, "--config", cfg, "--out", str(out_dir)]), out_dir


# -- parsing ---------------------------------------------------------------------------------

def test_parsers():
    assert parse_int("2^16", "h") == 65536
    assert parse_int("10**5", "h") == 10**5
    assert parse_rational("3/2", "p") == F(3, 2)
    assert parse_rational(1.5, "p") == F(3, 2)
    assert parse_int_set("1-4", "J") == [1, 2, 3, 4]
    assert parse_int_set([0, 2], "J") == [0, 2]
    with pytest.raises(UsageError):
        parse_int(True, "h")
    with pytest.raises(UsageError):
        parse_rational("x", "p")


def test_resolve_config_defaults_and_errors():
    cfg = resolve_config("ublp", {})
    assert cfg["J"] == [1, 2, 3, 4] and cfg["p"] == 2 and cfg["seed"] == 0
    assert resolve_config("ublp", {"seed": 4}, seed=9)["seed"] == 9
    with pytest.raises(UsageError):
        resolve_config("ublp", {"bogus": 1})
    with pytest.raises(UsageError):
        resolve_config("weights-analyze", {})
    with pytest.raises(UsageError):
        resolve_config("ublp", {"experiment": "sumset"})
    with pytest.raises(UsageError):
        resolve_config("semigroup", {"truncated": "yes"})
    with pytest.raises(UsageError):
        resolve_config("nope", {})


# -- exit codes -----------------------------------------------------------------------------------

def test_exit_usage_on_unknown_key(tmp_path, capsys):
    code, _ = run_cli(tmp_path, "sumset", {"k": 3, "colour": "red"})
    assert code == EXIT_USAGE
    assert "colour" in capsys.readouterr().err


def test_exit_usage_on_missing_or_bad_file(tmp_path):
    assert main(["sumset", "--config", str(tmp_path / "absent.json")]) == EXIT_USAGE
    bad = write(tmp_path, "bad.json", "{not json")
    assert main(["sumset", "--config", bad]) == EXIT_USAGE


def test_exit_usage_on_domain_error(tmp_path):
    code, _ = run_cli(tmp_path, "sumset", {"J": [0, 1]})
    assert code == EXIT_USAGE


def test_exit_guard(tmp_path, capsys):
    code, _ = run_cli(tmp_path, "sumset", {"J": [0, 2, 4]})
    assert code == EXIT_GUARD
    assert "resource guard" in capsys.readouterr().err


def test_exit_fail_when_horizon_too_small(tmp_path):
    code, _ = run_cli(tmp_path, "ubl1", {"tag": "reciprocal-t", "horizon": 4, "M": 50})
    assert code == EXIT_FAIL


# -- reports ------------------------------------------------------------------------------------------

def test_sumset_report_files(tmp_path):
    code, out = run_cli(tmp_path, "sumset", {"k": 3, "J": [0, 2], "p": 2})
    assert code == EXIT_PASS
    report = json.loads((out / "report.json").read_text())
    assert report["passed"] and report["config"]["experiment"] == "sumset"
    assert {"version", "config", "results", "assertions", "timing"} <= set(report)
    assert all(a["pass"] for a in report["assertions"])
    rows = list(csv.reader((out / "sumset.csv").open()))
    assert len(rows) >= 2
    assert (out / "plan.json").exists()


def test_reports_are_deterministic(tmp_path):
    _, a = run_cli(tmp_path, "audit", {"instances": 20, "seed": 7}, out="a")
    _, b = run_cli(tmp_path, "audit", {"instances": 20, "seed": 7}, out="b")
    ra, rb = (json.loads((d / "report.json").read_text()) for d in (a, b))
    ra.pop("timing"), rb.pop("timing")
    assert ra == rb
    assert (a / "audit.csv").read_text() == (b / "audit.csv").read_text()


def test_out_key_in_config(tmp_path):
    target = tmp_path / "from-config"
    cfg = write(tmp_path, "s.json", {"k": 3, "J": [0, 2], "out": str(target)})
    assert main(["sumset", "--config", cfg]) == EXIT_PASS
    assert (target / "report.json").exists()
    override = tmp_path / "flag"
    assert main(["sumset", "--config", cfg, "--out", str(override)]) == EXIT_PASS
    assert (override / "report.json").exists()


def test_seed_changes_audit_instances(tmp_path):
    _, a = run_cli(tmp_path, "audit", {"instances": 5, "seed": 1}, out="a")
    _, b = run_cli(tmp_path, "audit", {"instances": 5, "seed": 2}, out="b")
    assert (a / "audit.csv").read_text() != (b / "audit.csv").read_text()


def test_weights_analyze_small(tmp_path):
    code, out = run_cli(tmp_path, "weights-analyze", {"tag": "reciprocal-t", "horizon": 64})
    assert code == EXIT_PASS
    assert (out / "weights-analyze.csv").exists()


# -- replay -----------------------------------------------------------------------------------------

def test_replay_roundtrip_and_tamper(tmp_path, capsys):
    code, out = run_cli(tmp_path, "ublp", {"J": "1-8", "p": 2})
    assert code == EXIT_PASS
    plan_path = out / "plan.json"
    assert main(["replay", str(plan_path), "--out", str(tmp_path / "rep")]) == EXIT_PASS
    assert json.loads((tmp_path / "rep" / "replay.json").read_text())["identical"]

    plan = json.loads(plan_path.read_text())
    inner = plan.get("plan", plan)
    inner["system"]["alpha"] = "1/7"
    tampered = write(tmp_path, "tampered.json", plan)
    capsys.readouterr()
    assert main(["replay", tampered]) == EXIT_FAIL
    assert "replay failure" in capsys.readouterr().err


def test_replay_rejects_non_plan(tmp_path):
    path = write(tmp_path, "x.json", {"hello": 1})
    assert main(["replay", path]) == EXIT_USAGE


def test_console_entry_point(tmp_path):
    cfg = write(tmp_path, "s.json", {"k": 3, "J": [0, 2]})
    proc = subprocess.run([sys.executable, "-m", "divergia.cli", "sumset", "--config", cfg,
                           "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "sumset: pass" in proc.stdout
