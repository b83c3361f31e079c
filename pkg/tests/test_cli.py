"""CLI subcommands: files, determinism, error reporting."""

import numpy as np
import pytest

from arislab import bcd, cli, scene
from conftest import micro_text


@pytest.fixture(scope="module")
def cfg_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "micro.cfg"
    path.write_text(micro_text())
    return str(path)


def read(path):
    return path.read_bytes()


class TestCmdRun:
    def test_writes_all_csvs(self, cfg_file, tmp_path, capsys):
        rc = cli.main(["run", "--config", cfg_file, "--scheme", "proposed_active",
                       "--seed", "1", "--out-dir", str(tmp_path), "--max-iter", "4"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "final avg sum-rate" in out
        for name, header in [("runs.csv", cli.RUNS_HEADER),
                             ("paths.csv", cli.PATHS_HEADER),
                             ("rates.csv", cli.RATES_HEADER),
                             ("nodes.csv", cli.NODES_HEADER)]:
            text = (tmp_path / name).read_text()
            assert text.splitlines()[0] == ",".join(header)
            assert len(text.splitlines()) > 1
            assert text.endswith("\n") and "\r" not in text

    def test_byte_identical_reruns(self, cfg_file, tmp_path):
        for sub in ("a", "b"):
            (tmp_path / sub).mkdir()
            cli.main(["run", "--config", cfg_file, "--seed", "2",
                      "--out-dir", str(tmp_path / sub), "--max-iter", "4"])
        for name in ("runs.csv", "paths.csv", "rates.csv", "nodes.csv"):
            assert read(tmp_path / "a" / name) == read(tmp_path / "b" / name)

    def test_bad_key_exit_two(self, tmp_path, capsys):
        bad = tmp_path / "bad.cfg"
        bad.write_text(micro_text() + "\npower.tsb_dbm = 40\n")
        rc = cli.main(["run", "--config", str(bad), "--out-dir", str(tmp_path)])
        assert rc == 2
        assert "power.tsb_dbm" in capsys.readouterr().err

    def test_missing_config_exit_two(self, tmp_path, capsys):
        rc = cli.main(["run", "--config", str(tmp_path / "none.cfg"),
                       "--out-dir", str(tmp_path)])
        assert rc == 2


class TestCmdSweep:
    def test_single_point_equals_run_aggregate(self, cfg_file, tmp_path):
        rc = cli.main(["sweep", "--config", cfg_file, "--sweep-key", "power.tbs_dbm",
                       "--grid", "43", "--runs", "1", "--seed", "5",
                       "--scheme", "proposed_active",
                       "--out-dir", str(tmp_path), "--max-iter", "4"])
        assert rc == 0
        lines = (tmp_path / "summary.csv").read_text().splitlines()
        assert lines[0] == ",".join(cli.SUMMARY_HEADER)
        _, value, scheme, mean, stderr, n_runs, n_failed = lines[1].split(",")
        scn = scene.load_scenario(micro_text())
        ref = bcd.bcd_solve(scn, "proposed_active", 5, t_max=4)
        assert float(mean) == ref.final_rate
        assert (scheme, int(n_runs), int(n_failed)) == ("proposed_active", 1, 0)

    def test_bad_sweep_key_exit_two(self, cfg_file, tmp_path, capsys):
        rc = cli.main(["sweep", "--config", cfg_file, "--sweep-key", "power.zzz",
                       "--grid", "1,2", "--out-dir", str(tmp_path)])
        assert rc == 2
        assert "power.zzz" in capsys.readouterr().err

    def test_nonincreasing_grid_rejected(self, cfg_file, tmp_path):
        rc = cli.main(["sweep", "--config", cfg_file, "--sweep-key", "power.tbs_dbm",
                       "--grid", "43,40", "--out-dir", str(tmp_path)])
        assert rc == 2


class TestCmdConvergence:
    def test_multi_scheme_trace(self, cfg_file, tmp_path):
        rc = cli.main(["convergence", "--config", cfg_file, "--seed", "3",
                       "--scheme", "proposed_active", "--scheme", "no_ris",
                       "--out-dir", str(tmp_path), "--max-iter", "4"])
        assert rc == 0
        lines = (tmp_path / "runs.csv").read_text().splitlines()
        assert lines[0] == ",".join(cli.RUNS_HEADER)
        schemes = {line.split(",")[1] for line in lines[1:]}
        assert schemes == {"proposed_active", "no_ris"}
        # tier split columns present and consistent
        for line in lines[1:3]:
            parts = line.split(",")
            assert float(parts[4]) == pytest.approx(float(parts[5]) + float(parts[6]),
                                                    rel=1e-9)
