"""CLI surface: flags, exit codes, determinism of written artifacts."""

import json
import os

import pytest

from branching_ou.cli import main


def run_cli(*argv):
    return main(list(argv))


class TestSimulateCommand:
    def test_writes_expected_population(self, tmp_path):
        out = tmp_path / "t.csv"
        code = run_cli("simulate", "--b", "1", "--gamma", "0.5",
                       "--generations", "10", "--seed", "7", "--out", str(out))
        assert code == 0
        lines = out.read_text().splitlines()
        final = [l for l in lines if l.split(",")[1] == "10"]
        assert len(final) == 2 * 1024  # births at t=10 plus evolved at t=11

    def test_identical_flags_identical_files(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        args = ["simulate", "--b", "1", "--gamma", "0.5", "--generations", "6",
                "--seed", "9"]
        assert run_cli(*args, "--out", str(a)) == 0
        assert run_cli(*args, "--out", str(b)) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_non_dyadic_step_rejected(self, tmp_path):
        code = run_cli("simulate", "--mode", "euler", "--step", "0.3",
                       "--out", str(tmp_path / "x.csv"))
        assert code == 2

    def test_config_file_with_flag_override(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"b": 1.0, "gamma": 0.0, "horizon_m": 2,
                                   "seed": 5}))
        out = tmp_path / "c.csv"
        code = run_cli("simulate", "--config", str(cfg), "--generations", "3",
                       "--out", str(out))
        assert code == 0
        assert any(l.split(",")[1] == "3" for l in out.read_text().splitlines()[1:])

    def test_start_option(self, tmp_path):
        out = tmp_path / "s.csv"
        code = run_cli("simulate", "--dim", "2", "--start", "1,2",
                       "--generations", "0", "--seed", "1", "--out", str(out))
        assert code == 0
        first = out.read_text().splitlines()[1].split(",")
        assert first[4] == "1" and first[5] == "2"


class TestTheoryCommand:
    def test_terminal_variance(self, capsys):
        assert run_cli("theory", "terminal-variance", "--b", "-1") == 0
        doc = json.loads(capsys.readouterr().out)
        assert abs(doc["value"] - 0.46371) < 1e-5

    def test_relative_variance(self, capsys):
        assert run_cli("theory", "relative-variance", "--gamma", "1", "--m", "2") == 0
        doc = json.loads(capsys.readouterr().out)
        assert abs(doc["value"] - 0.216166) < 1e-6

    def test_domain_error_exit_code(self):
        assert run_cli("theory", "terminal-variance", "--b", "1") == 3

    def test_missing_option_is_usage_error(self):
        assert run_cli("theory", "terminal-variance") == 2

    def test_unknown_quantity_rejected(self):
        with pytest.raises(SystemExit) as err:
            run_cli("theory", "no-such-thing")
        assert err.value.code == 2


class TestVerifyCommand:
    def test_unknown_preset(self):
        assert run_cli("verify", "not_a_preset") == 2

    def test_quick_preset_writes_report_and_figures(self, tmp_path):
        code = run_cli("verify", "com_inward", "--quick",
                       "--out", str(tmp_path))
        assert code == 0
        report = json.loads((tmp_path / "com_inward_report.json").read_text())
        assert report["experiment"] == "com_inward"
        assert all(s["pass"] for s in report["statistics"])
        assert (tmp_path / "com_inward_report.png").exists()

    def test_no_figures_flag(self, tmp_path):
        code = run_cli("verify", "case4_extinction", "--quick", "--no-figures",
                       "--out", str(tmp_path))
        assert code == 0
        assert not (tmp_path / "case4_extinction_report.png").exists()

    def test_jobs_do_not_change_statistics(self, tmp_path):
        for jobs, name in (("1", "j1"), ("2", "j2")):
            out = tmp_path / name
            assert run_cli("verify", "com_inward", "--quick", "--jobs", jobs,
                           "--no-figures", "--out", str(out)) == 0
        load = lambda n: json.loads(
            (tmp_path / n / "com_inward_report.json").read_text())["statistics"]
        assert load("j1") == load("j2")

    def test_outdir_env_var(self, tmp_path, monkeypatch):
        monkeypatch.setenv("BRANCHING_OU_OUTDIR", str(tmp_path / "envout"))
        assert run_cli("verify", "case4_extinction", "--quick",
                       "--no-figures") == 0
        assert (tmp_path / "envout" / "case4_extinction_report.json").exists()


class TestSweepCommand:
    def test_grid_csv_shape(self, tmp_path):
        code = run_cli("sweep", "--b-grid", "0.5,1.0", "--gamma-grid=-1.0,0.5",
                       "--reps", "20", "--generations", "8",
                       "--out", str(tmp_path))
        assert code == 0
        rows = (tmp_path / "sweep.csv").read_text().splitlines()
        assert len(rows) == 1 + 4
        assert rows[0].startswith("b,gamma,d,replicates")
        assert (tmp_path / "sweep.png").exists()

    def test_case1_cell_keeps_occupation(self, tmp_path):
        code = run_cli("sweep", "--b-grid", "1.0", "--gamma-grid", "0.5",
                       "--reps", "30", "--generations", "9", "--no-figures",
                       "--out", str(tmp_path))
        assert code == 0
        import csv as _csv
        with open(tmp_path / "sweep.csv") as fh:
            row = next(_csv.DictReader(fh))
        assert float(row["box_occupied_fraction_final"]) == 1.0


class TestPresetTable:
    def test_all_ten_presets_registered(self):
        from branching_ou.presets import PRESETS
        assert set(PRESETS) == {
            "case1_slln", "case2_watanabe", "case3_explore", "case4_extinction",
            "com_inward", "com_escape", "delta_equiv", "covariance_mrca",
            "bounded_drift", "noninteractive_ou"}

    def test_defaults_satisfy_regimes(self):
        from branching_ou.presets import PRESETS
        for preset in PRESETS.values():
            preset.validate()

    def test_unknown_preset_raises(self):
        from branching_ou.errors import ArgumentError
        from branching_ou.presets import run_preset
        with pytest.raises(ArgumentError):
            run_preset("nope")

    def test_override_changes_params(self, tmp_path):
        code = run_cli("verify", "com_inward", "--quick", "--seed", "11",
                       "--no-figures", "--out", str(tmp_path))
        assert code == 0
        doc = json.loads((tmp_path / "com_inward_report.json").read_text())
        assert doc["params"]["seed"] == 11
