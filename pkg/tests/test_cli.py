"""Command-line interface: run / verify / matrix / list-scenarios."""

import csv
import io
import json

import pytest

from dcea import cli


def run_cli(capsys, *argv):
    rc = cli.main(list(argv))
    captured = capsys.readouterr()
    return rc, captured.out, captured.err


def test_run_honest_exits_zero(capsys):
    rc, out, _ = run_cli(capsys, "run", "--scenario", "honest", "--seed", "3")
    assert rc == 0
    obj = json.loads(out)
    assert obj["accepted"] is True
    assert obj["as_expected"] is True
    assert obj["scenario"] == "honest"


def test_run_attack_detected_exits_zero(capsys):
    rc, out, _ = run_cli(capsys, "run", "--scenario", "A4_replay", "--seed", "3")
    assert rc == 0
    obj = json.loads(out)
    assert obj["accepted"] is False
    assert obj["failed_checks"] == ["C4"]
    assert "A4" in obj["attack_flags"]


def test_run_markdown_format(capsys):
    rc, out, _ = run_cli(
        capsys, "run", "--scenario", "A6_stack_downgrade", "--seed", "1", "--format", "md"
    )
    assert rc == 0
    assert "A6_stack_downgrade" in out
    assert "C6" in out


def test_run_unknown_scenario_is_usage_error(capsys):
    rc, _, err = run_cli(capsys, "run", "--scenario", "A9_bogus", "--seed", "1")
    assert rc == 2
    assert "A9_bogus" in err


def test_run_irrelevant_deployment_is_usage_error(capsys):
    rc, _, err = run_cli(
        capsys, "run", "--scenario", "A4_replay", "--deployment", "S1", "--seed", "1"
    )
    assert rc == 2


def test_seed_env_fallback(capsys, monkeypatch):
    monkeypatch.setenv("DCEA_SEED", "41")
    rc, out, _ = run_cli(capsys, "run", "--scenario", "honest")
    assert rc == 0
    assert json.loads(out)["seed"] == 41


def test_run_writes_deterministic_bundle(tmp_path, capsys):
    p1, p2 = tmp_path / "a.dcea.json", tmp_path / "b.dcea.json"
    run_cli(capsys, "run", "--scenario", "honest", "--seed", "9", "--out", str(p1))
    run_cli(capsys, "run", "--scenario", "honest", "--seed", "9", "--out", str(p2))
    assert p1.read_bytes() == p2.read_bytes()


def test_run_then_verify_roundtrip(tmp_path, capsys):
    bundle = tmp_path / "honest.dcea.json"
    policy = tmp_path / "honest.policy.json"
    rc, _, _ = run_cli(
        capsys, "run", "--scenario", "honest", "--seed", "5",
        "--out", str(bundle), "--policy", str(policy),
    )
    assert rc == 0
    rc, out, _ = run_cli(capsys, "verify", str(bundle), "--policy", str(policy))
    assert rc == 0
    assert json.loads(out)["accepted"] is True


def test_verify_rejects_attack_bundle(tmp_path, capsys):
    bundle = tmp_path / "clone.dcea.json"
    policy = tmp_path / "clone.policy.json"
    rc, _, _ = run_cli(
        capsys, "run", "--scenario", "A5_ak_clone", "--seed", "5",
        "--out", str(bundle), "--policy", str(policy),
    )
    assert rc == 0  # detection is the expected outcome
    rc, out, _ = run_cli(capsys, "verify", str(bundle), "--policy", str(policy))
    assert rc == 1
    assert json.loads(out)["failed_checks"] == ["C8"]


def test_verify_missing_file_is_io_error(tmp_path, capsys):
    rc, _, err = run_cli(
        capsys, "verify", str(tmp_path / "nope.dcea.json"),
        "--policy", str(tmp_path / "nope.policy.json"),
    )
    assert rc == 2
    assert err


def test_verify_garbage_bundle_is_usage_error(tmp_path, capsys):
    bundle = tmp_path / "garbage.dcea.json"
    bundle.write_bytes(b"{not json")
    policy = tmp_path / "p.json"
    run_cli(capsys, "run", "--scenario", "honest", "--seed", "5", "--policy", str(policy))
    capsys.readouterr()
    rc, _, err = run_cli(capsys, "verify", str(bundle), "--policy", str(policy))
    assert rc == 2
    assert "offset" in err or "JSON" in err


def test_list_scenarios(capsys):
    rc, out, _ = run_cli(capsys, "list-scenarios")
    assert rc == 0
    for sid in ("A1_quote_forgery", "A5_ak_clone", "A6_stack_downgrade"):
        assert sid in out
    rc, out, _ = run_cli(capsys, "list-scenarios", "--format", "json")
    ids = [row["id"] for row in json.loads(out)]
    assert len(ids) == 10


def test_matrix_csv(capsys):
    rc, out, _ = run_cli(capsys, "matrix", "--seed", "2", "--format", "csv")
    assert rc == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    by_key = {(r["scenario"], r["deployment"]): r for r in rows}
    assert len(rows) == 22  # (honest + 10 scenarios) x 2 deployments
    assert by_key[("honest", "S1")]["result"] == "accepted"
    assert by_key[("honest", "S2")]["result"] == "accepted"
    assert by_key[("A4_replay", "S1")]["result"] == "n/a"
    assert by_key[("A4_replay", "S2")]["result"] == "rejected"
    assert by_key[("A4_replay", "S2")]["failed_checks"] == "C4"
    assert all(r["as_expected"] in ("yes", "n/a") for r in rows)


def test_matrix_markdown_grid(capsys):
    rc, out, _ = run_cli(capsys, "matrix", "--seed", "2")
    assert rc == 0
    assert "| scenario " in out
    assert "n/a" in out
    assert "rejected (C7)" in out  # frankenstein cell


def test_matrix_multi_seed(capsys):
    rc, out, _ = run_cli(
        capsys, "matrix", "--seed", "0", "--seeds", "3", "--format", "csv"
    )
    assert rc == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    live = [r for r in rows if r["result"] != "n/a"]
    assert all(r["runs"] == "3" for r in live)


def test_matrix_out_file(tmp_path, capsys):
    target = tmp_path / "matrix.csv"
    rc, out, _ = run_cli(
        capsys, "matrix", "--seed", "2", "--format", "csv", "--out", str(target)
    )
    assert rc == 0
    assert target.read_text() == out


def test_no_command_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main([])
    assert exc.value.code == 2
