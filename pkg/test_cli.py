import csv
import json
import logging
import math

import pytest

import config
import margin_check
import price
import sweep
import verify
from errors import ConfigError

SMALL = ["--paths", "2048", "--steps", "20"]


def read_rows(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


class TestPrice:
    def test_full_margin_scenario(self, write_config, tmp_path):
        out = tmp_path / "result.csv"
        assert price.main(["--config", write_config("example1"), "--out", str(out), *SMALL]) == 0
        (row,) = read_rows(out)
        assert abs(float(row["p_star"]) - float(row["p_hat"])) <= 1e-6
        assert float(row["p_motivation"]) == pytest.approx(
            -(math.exp(-0.03) + math.exp(-0.02)) / 2 + math.exp(-0.01))
        assert row["n_paths"] == "2048"
        assert row["seed"] == "42"

    def test_same_seed_same_bytes(self, write_config, tmp_path):
        path = write_config("example2")
        outputs = []
        for name, threads in (("a.csv", "1"), ("b.csv", "1"), ("c.csv", "4")):
            out = tmp_path / name
            assert price.main(["--config", path, "--out", str(out), "--seed", "7", "--threads", threads, *SMALL]) == 0
            outputs.append(out.read_bytes())
        assert outputs[0] == outputs[1] == outputs[2]

    def test_json_output(self, write_config, tmp_path):
        out = tmp_path / "result.json"
        assert price.main(["--config", write_config("example2"), "--out", str(out), "--format", "json", *SMALL]) == 0
        (row,) = json.loads(out.read_text())
        assert set(row) == set(price.COLUMNS)

    def test_invalid_field_is_named(self, write_config, tmp_path, caplog):
        path = write_config("example1", {"agents.A.gamma": -1.0})
        with caplog.at_level(logging.ERROR):
            assert price.main(["--config", path, "--out", str(tmp_path / "x.csv"), *SMALL]) == 2
        assert "agents.A.gamma" in caplog.text

    def test_missing_file(self, tmp_path):
        assert price.main(["--config", str(tmp_path / "missing.json"), *SMALL]) == 2

    def test_odd_path_count_with_antithetic_sampling(self, write_config):
        assert price.main(["--config", write_config("example1"), "--paths", "101", "--steps", "5"]) == 2

    def test_engine_failure_exit_code(self, write_config, tmp_path):
        path = write_config("example2", {"agents.B.gamma": 1e6})
        assert price.main(["--config", path, "--out", str(tmp_path / "x.csv"), *SMALL]) == 3


class TestSweep:
    def test_motivation_column_follows_weight(self, write_config, tmp_path):
        path = write_config("example1", {"motivation": {"R_A": 0.01, "R_B": 0.01, "r": 0.01, "T": 1.0}})
        out = tmp_path / "sweep.csv"
        assert sweep.main(["--config", path, "--param", "lambda", "--grid", "0.5:2:4", "--out", str(out),
                           *SMALL]) == 0
        rows = read_rows(out)
        assert [float(r["value"]) for r in rows] == [0.5, 1.0, 1.5, 2.0]
        for row in rows:
            assert float(row["p_motivation"]) == -math.log(float(row["value"])) / 2

    def test_empty_grid(self, write_config):
        assert sweep.main(["--config", write_config("example1"), "--param", "lambda", "--grid", "0:1:0", *SMALL]) == 2

    def test_malformed_grid(self):
        with pytest.raises(ConfigError):
            sweep.parse_grid("0:1")
        with pytest.raises(ConfigError):
            sweep.parse_grid("a:1:3")

    def test_invalid_loss_rate(self, write_config):
        assert sweep.main(["--config", write_config("example1"), "--param", "L_A", "--grid", "0.5:1.5:3",
                           *SMALL]) == 2


class TestVerify:
    def test_oracles_pass(self, write_config, tmp_path):
        out = tmp_path / "verify.csv"
        assert verify.main(["--config", write_config("example1"), "--out", str(out), "--draws", "50",
                            "--paths", "4096", "--steps", "20"]) == 0
        rows = read_rows(out)
        assert {row["status"] for row in rows} == {"pass"}

    def test_reduction_without_variance(self, write_config, tmp_path):
        out = tmp_path / "verify.csv"
        path = write_config("example1")
        verify.main(["--config", path, "--out", str(out), "--draws", "20", *SMALL])
        rows = {row["oracle"]: row for row in read_rows(out)}
        row = rows["reduction_ci_overlap[delta0=+0]"]
        assert row["status"] == "pass"
        assert float(row["discrepancy"]) <= 1e-12

    def test_mutation_is_caught(self, write_config, tmp_path):
        out = tmp_path / "verify.csv"
        assert verify.main(["--config", write_config("example1"), "--out", str(out), "--draws", "50", "--mutate",
                            *SMALL]) == 1
        statuses = {row["oracle"]: row["status"] for row in read_rows(out)}
        assert statuses["collateral_main_brute_force"] == "fail"
        assert statuses["collateral_appendix_brute_force"] == "fail"

    def test_dependent_defaults_skip_reduction(self, write_config, tmp_path):
        path = write_config("example1", {"market.intensities.h_delta": 0.01,
                                         "market.intensities.independent": False})
        out = tmp_path / "verify.csv"
        verify.main(["--config", path, "--out", str(out), "--draws", "20", *SMALL])
        statuses = {row["oracle"]: row["status"] for row in read_rows(out)}
        assert statuses["reduction_ci_overlap"] == "skip"


class TestMarginCheck:
    def test_verdict_is_data(self, write_config, tmp_path):
        out = tmp_path / "margin.json"
        assert margin_check.main(["--config", write_config("example2"), "--out", str(out), *SMALL]) == 0
        report = json.loads(out.read_text())
        assert report["full_margin_optimal"] is False
        assert "phi_B" in report["violations"]

    @pytest.mark.parametrize("name, mode", [
        ("example1", "main"), ("example2", "main"), ("appendix", "appendix"), ("singleton", "main"),
    ])
    def test_every_shipped_scenario_reports(self, write_config, name, mode, tmp_path):
        out = tmp_path / "margin.json"
        path = write_config(name)
        assert margin_check.main(["--config", path, "--out", str(out), *SMALL]) == 0
        report = json.loads(out.read_text())
        assert report["mode"] == mode
        assert isinstance(report["full_margin_optimal"], bool)

    def test_singleton_collateral_is_held(self, write_config, tmp_path):
        out = tmp_path / "margin.json"
        path = write_config("singleton")
        assert margin_check.main(["--config", path, "--out", str(out), *SMALL]) == 0
        report = json.loads(out.read_text())
        assert report["full_margin_optimal"] is False
        assert report["max_abs_delta"] == pytest.approx(0.2)


class TestEnvConfig:
    def test_set_and_show(self, tmp_path, monkeypatch, capsys):
        monkeypatch.chdir(tmp_path)
        assert config.main(["--paths", "5000", "--show"]) == 0
        text = (tmp_path / ".env").read_text()
        assert "RS_ENGINE_PATHS" in text and "5000" in text
        assert "Monte Carlo paths: 5000" in capsys.readouterr().out
