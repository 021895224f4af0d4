import pytest

from tokengov.cli import main
from tokengov.harness import bundled_scenarios


def test_list(capsys):
    assert main(["list-scenarios"]) == 0
    out = capsys.readouterr().out
    for name in bundled_scenarios():
        assert name in out


def test_run_and_verify(tmp_path, capsys):
    assert main(["run", "case_study_happy", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "[PASS]" in out and "[FAIL]" not in out
    assert main(["verify", str(tmp_path / "ledger.ndjson")]) == 0
    assert capsys.readouterr().out.startswith("ok:")


def test_verify_tampered(tmp_path, capsys):
    main(["run", "cap_whitelist", "--out", str(tmp_path)])
    path = tmp_path / "ledger.ndjson"
    path.write_text(path.read_text().replace('"amount":10000', '"amount":10001', 1))
    assert main(["verify", str(path)]) == 1
    assert "mismatch at seq" in capsys.readouterr().out


def test_failing_expectation_exit_code(tmp_path, capsys):
    scenario = tmp_path / "s.yaml"
    scenario.write_text("name: s\nexpectations:\n  - {check: incidents, equals: 3}\n")
    assert main(["run", str(scenario)]) == 1


def test_parse_error_exit_code(tmp_path, capsys):
    scenario = tmp_path / "s.yaml"
    scenario.write_text("timeline: []\n")
    assert main(["run", str(scenario)]) == 2
    assert main(["verify", str(tmp_path / "missing.ndjson")]) == 2


def test_aborted_run_exit_code(tmp_path, capsys):
    scenario = tmp_path / "s.yaml"
    scenario.write_text("name: s\nagents:\n  - {id: v, role: Verification, stake: 5}\n")
    assert main(["run", str(scenario)]) == 2
    assert "InsufficientStake" in capsys.readouterr().err


def test_seed_override(capsys):
    assert main(["run", "volume_spike", "--seed", "2024"]) == 0


def test_requires_subcommand():
    with pytest.raises(SystemExit):
        main([])
