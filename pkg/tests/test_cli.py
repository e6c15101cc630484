from __future__ import annotations

import csv
import math
import subprocess
import sys

import pytest

from decusum.cli import EXIT_ASSERTION, EXIT_CENSORING, EXIT_CONFIG, EXIT_OK, main
from decusum.experiments import read_rows


def rows(path):
    return read_rows(path)


class TestTrajectory:
    def test_defaults(self, tmp_path):
        out = tmp_path / "t.csv"
        assert main(["trajectory", "--seed", "1", "--out", str(out), "--plot-script", str(tmp_path / "t.gp")]) == 0
        data = rows(out)
        assert data
        last = data[-1]
        assert float(last["W"]) > 7.0
        run = longest = 0
        for r in data:
            assert float(r["C"]) >= float(r["W"])
            run = 0 if r["sampled"] == "1" else run + 1
            longest = max(longest, run)
        assert longest <= math.ceil(0.5 / 0.05) + 1
        assert "plot" in (tmp_path / "t.gp").read_text()

    def test_h_zero_columns_identical(self, tmp_path):
        out = tmp_path / "t.csv"
        assert main(["trajectory", "--seed", "4", "--h", "0", "--steps", "300", "--out", str(out)]) == 0
        data = rows(out)
        assert len(data) == 300
        assert all(r["C"] == r["W"] and r["sampled"] == "1" for r in data)

    def test_rejects_network(self, capsys):
        assert main(["trajectory", "--seed", "1", "--sensors", "2"]) == EXIT_CONFIG

    def test_requires_seed(self):
        assert main(["trajectory"]) == EXIT_CONFIG

    def test_stdout(self, capsys):
        assert main(["trajectory", "--seed", "2", "--steps", "5"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0].startswith("# schema:") and lines[1] == "n,C,W,sampled" and len(lines) == 7


class TestEstimatorCommands:
    def test_far(self, tmp_path):
        out = tmp_path / "far.csv"
        code = main(["far", "--seed", "1", "--algorithm", "centralized-cusum", "--sensors", "10",
                     "--alpha-grid", "0.1,0.01", "--trials", "200", "--out", str(out)])
        assert code == EXIT_OK
        data = rows(out)
        assert [r["alpha"] for r in data] == ["0.1", "0.01"]
        assert all(r["seed"] == "1" and len(r["config_hash"]) == 16 for r in data)

    def test_far_censoring_exit(self, tmp_path):
        code = main(["far", "--seed", "1", "--algorithm", "all", "--threshold-grid", "20", "--max-steps", "50",
                     "--trials", "10", "--out", str(tmp_path / "f.csv")])
        assert code == EXIT_CENSORING

    def test_delay(self, tmp_path):
        out = tmp_path / "d.csv"
        code = main(["delay", "--seed", "1", "--algorithm", "all,de-all", "--sensors", "3", "--mu", "0.2",
                     "--h", "2", "--threshold-grid", "1.5", "--trials", "300", "--out", str(out)])
        assert code == EXIT_OK
        data = rows(out)
        assert [r["algorithm"] for r in data] == ["all", "de-all"]
        assert data[0]["cadd"] == data[0]["wadd_proxy"]

    def test_delay_infinite_h_has_no_proxy(self, tmp_path):
        out = tmp_path / "d.csv"
        assert main(["delay", "--seed", "1", "--algorithm", "de-all", "--h", "inf", "--threshold-grid", "1",
                     "--trials", "50", "--out", str(out)]) == EXIT_OK
        assert rows(out)[0]["wadd_proxy"] == ""

    def test_pdc(self, tmp_path):
        out = tmp_path / "p.csv"
        assert main(["pdc", "--seed", "1", "--algorithm", "fractional-all", "--sensors", "2", "--skip-prob",
                     "0.35", "--trials", "10", "--horizon", "5000", "--out", str(out)]) == EXIT_OK
        data = rows(out)
        assert len(data) == 2 and all(abs(float(r["pdc"]) - 0.65) < 0.02 for r in data)

    def test_oracle(self, tmp_path):
        out = tmp_path / "o.csv"
        assert main(["oracle", "--seed", "1", "--mu", "0.2", "--h", "inf", "--trials", "20000",
                     "--out", str(out)]) == EXIT_OK
        rec = rows(out)[0]
        assert rec["record"] == "oracle" and rec["h"] == "inf"
        assert float(rec["bound_h_inf"]) == pytest.approx(0.2 / 0.28)

    def test_config_file_and_flag_precedence(self, tmp_path):
        cfg = tmp_path / "c.yaml"
        cfg.write_text("algorithms: [all]\nsensors: 2\nthreshold_grid: [1.0]\nseed: 5\nfar_trials: 30\n")
        out = tmp_path / "f.csv"
        assert main(["far", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
        assert rows(out)[0]["trials"] == "30" and rows(out)[0]["seed"] == "5"
        assert main(["far", "--config", str(cfg), "--seed", "6", "--out", str(out)]) == EXIT_OK
        assert rows(out)[0]["seed"] == "6"

    @pytest.mark.parametrize(
        "argv",
        [
            ["far", "--algorithm", "all", "--alpha-grid", "0.1"],
            ["far", "--seed", "1", "--alpha-grid", "0.1", "--threshold-grid", "2"],
            ["far", "--seed", "1", "--alpha-grid", "2"],
            ["far", "--seed", "1", "--algorithm", "nope", "--alpha-grid", "0.1"],
            ["far", "--seed", "1", "--alpha-grid", "0.1", "--mu", "0"],
            ["far", "--seed", "1", "--config", "/nonexistent.yaml"],
            ["sweep", "--seed", "1", "--alpha-grid", "0.1"],
        ],
    )
    def test_config_errors(self, argv):
        assert main(argv) == EXIT_CONFIG


class TestSweep:
    ARGS = ["sweep", "--seed", "3", "--algorithm", "all,de-all", "--sensors", "2", "--mu", "0.2", "--h", "5",
            "--alpha-grid", "0.1,0.05", "--trials", "200", "--horizon", "2000", "--max-steps", "100000"]

    def test_rows_and_resume(self, tmp_path):
        out = tmp_path / "s.csv"
        assert main(self.ARGS + ["--out", str(out), "--plot-script", str(tmp_path / "s.gp")]) == EXIT_OK
        text = out.read_text()
        assert text.startswith("# schema: decusum.sweep/1\n")
        data = rows(out)
        assert [(r["algorithm"], r["alpha"]) for r in data] == [
            ("all", "0.1"), ("all", "0.05"), ("de-all", "0.1"), ("de-all", "0.05")]
        for r in data:
            assert float(r["lower_bound"]) == pytest.approx(abs(math.log(float(r["alpha"]))) / 0.16)
            assert float(r["abs_log_far"]) == pytest.approx(-math.log(float(r["far"])))
            assert r["seed"] == "3" and r["pdc_2"] != ""
        # a rerun finds every row present and appends nothing
        assert main(self.ARGS + ["--out", str(out)]) == EXIT_OK
        assert out.read_text() == text

    def test_resume_after_interruption(self, tmp_path):
        out = tmp_path / "s.csv"
        assert main(self.ARGS + ["--out", str(out)]) == EXIT_OK
        full = out.read_text()
        lines = full.splitlines(keepends=True)
        out.write_text("".join(lines[:-2]))
        assert main(self.ARGS + ["--out", str(out)]) == EXIT_OK
        assert out.read_text() == full

    def test_floats_round_trip(self, tmp_path):
        out = tmp_path / "s.csv"
        main(self.ARGS + ["--out", str(out)])
        for r in rows(out):
            assert repr(float(r["far"])) == r["far"]

    def test_single_point(self, tmp_path):
        out = tmp_path / "one.csv"
        assert main(["sweep", "--seed", "1", "--algorithm", "all", "--alpha-grid", "0.1", "--trials", "50",
                     "--horizon", "500", "--out", str(out)]) == EXIT_OK
        assert len(rows(out)) == 1

    def test_schema_mismatch_rejected(self, tmp_path):
        out = tmp_path / "s.csv"
        out.write_text("# schema: something/9\na,b\n")
        assert main(self.ARGS + ["--out", str(out)]) == EXIT_CONFIG


class TestEntryPoint:
    def test_module_help(self):
        res = subprocess.run([sys.executable, "-m", "decusum.cli", "--help"], capture_output=True, text=True)
        assert res.returncode == 0
        for cmd in ("trajectory", "sweep", "reproduce-fig2", "pdc", "far", "delay", "oracle"):
            assert cmd in res.stdout

    def test_exit_code_constants_distinct(self):
        assert len({EXIT_OK, EXIT_CONFIG, EXIT_ASSERTION, EXIT_CENSORING}) == 4
