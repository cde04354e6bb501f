import json

import numpy as np
import pytest

from credalmarket.cli import main


@pytest.fixture
def singleton_credal(tmp_path):
    path = tmp_path / "credal.json"
    path.write_text(json.dumps({"space": ["z0", "z1"], "vertices": [[0.25, 0.75]]}))
    return path


@pytest.fixture
def license_config(tmp_path):
    path = tmp_path / "license_config.json"
    path.write_text(json.dumps({"provider": [0.6, 0.4], "params": {"C": 0.5, "R": 1.0}}))
    return path


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestLicenseCommand:
    def test_singleton_fixture_matches_neyman_pearson(self, capsys, tmp_path,
                                                      singleton_credal, license_config):
        out_path = tmp_path / "license.json"
        code, out, _ = run_cli(
            capsys, "license", "optimal",
            "--credal", str(singleton_credal), "--config", str(license_config),
            "--out", str(out_path),
        )
        assert code == 0
        # NP closed form: ratios (2.4, 0.533); atom 0 costs 0.25, gamma = 1/3 on atom 1
        assert "neyman_pearson_payout=[1.0, 0.3333333333333333]" in out
        assert "verdict=participate" in out
        blob = json.loads(out_path.read_text())
        assert np.allclose(blob["risk_neutral"]["payout"], [1.0, 1 / 3])
        assert blob["risk_neutral"]["params"] == {"C": 0.5, "R": 1.0}
        assert blob["values"]["risk_neutral"] == pytest.approx(0.6 + 0.4 / 3)

    def test_vertex_type_is_excluded(self, capsys, tmp_path, singleton_credal):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"provider": [0.25, 0.75], "params": {"C": 0.5, "R": 1.0}}))
        code, out, _ = run_cli(
            capsys, "license", "optimal", "--credal", str(singleton_credal), "--config", str(cfg)
        )
        assert code == 0
        assert "verdict=excluded (sup <= C)" in out

    def test_malformed_json_exits_2(self, capsys, tmp_path, license_config):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        code, _, err = run_cli(
            capsys, "license", "optimal", "--credal", str(bad), "--config", str(license_config)
        )
        assert code == 2
        assert "credal set" in err

    def test_missing_field_named_in_diagnostic(self, capsys, tmp_path, singleton_credal):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"params": {"C": 0.5, "R": 1.0}}))
        code, _, err = run_cli(
            capsys, "license", "optimal", "--credal", str(singleton_credal), "--config", str(cfg)
        )
        assert code == 2
        assert "'provider'" in err

    def test_overwrite_refused_without_force(self, capsys, tmp_path,
                                             singleton_credal, license_config):
        out_path = tmp_path / "license.json"
        out_path.write_text("{}")
        code, _, err = run_cli(
            capsys, "license", "optimal",
            "--credal", str(singleton_credal), "--config", str(license_config),
            "--out", str(out_path),
        )
        assert code == 2 and "--force" in err
        code, _, _ = run_cli(
            capsys, "license", "optimal",
            "--credal", str(singleton_credal), "--config", str(license_config),
            "--out", str(out_path), "--force",
        )
        assert code == 0


class TestExperimentCommand:
    def test_seeded_rerun_is_byte_identical(self, capsys, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"runs": 2, "n": 30}))
        out_a, out_b = tmp_path / "a.csv", tmp_path / "b.csv"
        for out in (out_a, out_b):
            code, stdout, _ = run_cli(
                capsys, "experiment", "simplex_gaming",
                "--config", str(cfg), "--seed", "7", "--out", str(out),
            )
            assert code == 0
            assert "config_hash=" in stdout
        assert out_a.read_bytes() == out_b.read_bytes()

    def test_unknown_scenario_exits_2(self, capsys, tmp_path):
        code, _, err = run_cli(
            capsys, "experiment", "warp_drive", "--out", str(tmp_path / "x.csv")
        )
        assert code == 2
        assert "unknown scenario" in err

    def test_bad_config_field_exits_2(self, capsys, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"bogus": True}))
        code, _, err = run_cli(
            capsys, "experiment", "fairness", "--config", str(cfg), "--out", str(tmp_path / "x.csv")
        )
        assert code == 2


class TestMarketCommand:
    def test_simulate_writes_report(self, capsys, tmp_path):
        credal = tmp_path / "credal.json"
        credal.write_text(json.dumps({
            "space": ["z0", "z1", "z2"],
            "vertices": [[0.35, 0.35, 0.30], [0.35, 0.30, 0.35], [0.30, 0.35, 0.35]],
        }))
        cfg = tmp_path / "market.json"
        cfg.write_text(json.dumps({
            "params": {"C": 15.0, "R": 250.0},
            "providers": [
                {"id": "strategic", "q": [1 / 3, 1 / 3, 1 / 3]},
                {"id": "good", "q": [0.9, 0.05, 0.05]},
            ],
            "requirement": {"kind": "credal"},
        }))
        out = tmp_path / "report.csv"
        code, stdout, _ = run_cli(
            capsys, "market", "simulate", "--credal", str(credal), "--config", str(cfg),
            "--out", str(out),
        )
        assert code == 0
        assert "perfect=true" in stdout
        assert out.exists()
        summary = json.loads(out.with_suffix(".summary.json").read_text())
        assert summary["perfect"] is True
        assert summary["counts"]["true-in"] == 1


class TestBettingCommand:
    def test_trajectory_csv(self, capsys, tmp_path):
        cfg = tmp_path / "bet.json"
        cfg.write_text(json.dumps({
            "labels": ["win", "lose"],
            "source": [0.75, 0.25],
            "metric": [1.0, -1.0],
            "tau": 0.0,
            "n": 40,
            "params": {"C": 15.0, "R": 250.0},
        }))
        out = tmp_path / "bet.csv"
        code, stdout, _ = run_cli(
            capsys, "betting", "run", "--config", str(cfg), "--seed", "3", "--out", str(out)
        )
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[1] == "step,lambda,outcome,wealth,license_value"
        assert len(lines) == 42

    def test_missing_out_exits_2(self, capsys, tmp_path):
        cfg = tmp_path / "bet.json"
        cfg.write_text(json.dumps({
            "labels": ["a", "b"], "source": [0.5, 0.5], "metric": [1.0, -1.0],
            "tau": 0.0, "params": {"C": 1.0, "R": 2.0},
        }))
        code, _, err = run_cli(capsys, "betting", "run", "--config", str(cfg))
        assert code == 2
