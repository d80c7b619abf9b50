import subprocess
import sys

import pytest

from seqdet.cli import EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, main

SMALL = """\
[system]
alpha = 1.0
T_interact = 20
[probe]
T_probe = 10
n_traj = 12
base_seed = 3
[run]
n_cut = 10
[wigner]
resolution = 11
[optimize]
delta1_min = -1.38
delta1_max = -1.38
delta2_min = -96.89
delta2_max = -96.89
n_cut_search = 10
[sweep]
gamma_c = 0.5
configurations = full_ideal
"""


@pytest.fixture
def cfg_path(tmp_path):
    path = tmp_path / "small.ini"
    path.write_text(SMALL)
    return path


def run(cfg, out, *extra):
    return main([*extra[:1], "-c", str(cfg), "-o", str(out), *extra[1:]])


def body(path):
    return [line for line in path.read_text().splitlines() if not line.startswith("#")]


def embedded_config(path):
    lines = [line[2:] for line in path.read_text().splitlines() if line.startswith("# ")]
    return "\n".join(lines[lines.index("--- resolved config ---") + 1:]) + "\n"


class TestExitCodes:
    def test_unknown_key_writes_nothing(self, tmp_path, capsys):
        bad = tmp_path / "bad.ini"
        bad.write_text("[system]\ng = 7\nbogus = 1\n")
        out = tmp_path / "out"
        assert run(bad, out, "interact") == EXIT_CONFIG
        assert not out.exists()
        assert "bad.ini:3: unknown key 'bogus'" in capsys.readouterr().err

    def test_missing_config(self, tmp_path):
        assert run(tmp_path / "nope.ini", tmp_path / "out", "interact") == EXIT_CONFIG

    def test_bad_worker_count(self, cfg_path, tmp_path):
        assert run(cfg_path, tmp_path / "out", "trajectories", "--workers", "0") == EXIT_CONFIG

    def test_numeric_failure(self, tmp_path):
        cfg = tmp_path / "unstable.ini"
        # an RK4 step far beyond the decay time diverges and trips the trace check
        cfg.write_text("[system]\ngamma01 = 10000\nalpha = 0.5\nT_interact = 0.01\n[run]\nn_cut = 4\nmethod = dense\n")
        out = tmp_path / "out"
        assert run(cfg, out, "interact") == EXIT_NUMERIC
        assert not out.exists() or not any(out.iterdir())

    def test_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2

    def test_console_entry_point(self, tmp_path):
        bad = tmp_path / "bad.ini"
        bad.write_text("[run]\nn_cut = x\n")
        proc = subprocess.run([sys.executable, "-m", "seqdet.cli", "interact", "-c", str(bad)], capture_output=True, text=True)
        assert proc.returncode == EXIT_CONFIG
        assert "bad.ini:2:" in proc.stderr


class TestArtifacts:
    def test_interact(self, cfg_path, tmp_path):
        assert run(cfg_path, tmp_path, "interact", "--si") == EXIT_OK
        text = (tmp_path / "interact_summary.txt").read_text()
        assert "# base_seed = 3" in text and "# [system]" in text
        vals = dict(line.split(" = ") for line in body(tmp_path / "interact_summary.txt"))
        assert 0 <= float(vals["p_e_opt"]) <= float(vals["p_e_m"]) <= 1
        assert float(vals["T_interact_si_s"]) == pytest.approx(20 / (2 * 3.141592653589793 * 1e7))

    def test_wigner(self, cfg_path, tmp_path):
        assert run(cfg_path, tmp_path, "wigner") == EXIT_OK
        for b in (0, 1):
            rows = body(tmp_path / f"wigner_branch{b}.csv")
            assert rows[0] == "x,p,w" and len(rows) == 1 + 121
            assert f"# branch = {b}" in (tmp_path / f"wigner_branch{b}.csv").read_text()

    def test_trajectories_reproducible(self, cfg_path, tmp_path):
        a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
        assert run(cfg_path, a, "trajectories") == EXIT_OK
        assert run(cfg_path, b, "trajectories") == EXIT_OK
        assert run(cfg_path, c, "trajectories", "--workers", "2") == EXIT_OK
        for name in ("ensemble.csv", "histogram.csv", "summary.txt"):
            assert (a / name).read_bytes() == (b / name).read_bytes() == (c / name).read_bytes()
        rows = body(a / "ensemble.csv")
        assert rows[0] == "branch,seed,S" and len(rows) == 1 + 24

    def test_embedded_config_reproduces_file(self, cfg_path, tmp_path):
        first = tmp_path / "first"
        assert run(cfg_path, first, "trajectories") == EXIT_OK
        replay = tmp_path / "replay.ini"
        replay.write_text(embedded_config(first / "summary.txt"))
        second = tmp_path / "second"
        assert run(replay, second, "trajectories") == EXIT_OK
        for name in ("ensemble.csv", "summary.txt"):
            assert (first / name).read_bytes() == (second / name).read_bytes()

    def test_optimize(self, cfg_path, tmp_path):
        assert run(cfg_path, tmp_path, "optimize") == EXIT_OK
        vals = dict(line.split(" = ") for line in body(tmp_path / "optimize.txt"))
        assert float(vals["delta1"]) == -1.38 and float(vals["T_interact"]) <= 100

    def test_sweep(self, cfg_path, tmp_path):
        assert run(cfg_path, tmp_path, "sweep") == EXIT_OK
        rows = body(tmp_path / "sweep.csv")
        assert rows[0] == "gamma_c,config,delta1,delta2,T_interact,p_e_m,p_e_opt"
        assert rows[1].startswith("0.5,full_ideal,")

    def test_env_worker_override(self, cfg_path, tmp_path, monkeypatch):
        monkeypatch.setenv("SEQDET_WORKERS", "2")
        assert run(cfg_path, tmp_path / "w", "trajectories") == EXIT_OK
        monkeypatch.delenv("SEQDET_WORKERS")
        assert run(cfg_path, tmp_path / "x", "trajectories") == EXIT_OK
        assert (tmp_path / "w" / "ensemble.csv").read_bytes() == (tmp_path / "x" / "ensemble.csv").read_bytes()
