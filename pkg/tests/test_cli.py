import math
import subprocess
import sys

import numpy as np
import pytest

from chpersist import cli
from chpersist.errors import ConfigError
from chpersist.spectral import Grid


def write(path, text):
    path.write_text(text)
    return path


def test_zero_preset_theorem1(tmp_path, capsys):
    cfg = write(tmp_path / "zero.cfg", "preset=zero\nT_end=0.1\nchecks=theorem1\n")
    out = tmp_path / "out"
    assert cli.main(["verify", "--config", str(cfg), "--out", str(out)]) == 0
    assert (out / "theorem1.csv").exists()
    assert "theorem1: PASS" in (out / "summary.txt").read_text()
    assert "exit_status=0" in capsys.readouterr().out


def test_critical_weight_refused(tmp_path):
    cfg = write(tmp_path / "bad.cfg", "preset=sech\nT_end=0.05\nweight_a=1\nweight_b=1\nchecks=theorem1\n")
    assert cli.main(["verify", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "not admissible" in (tmp_path / "o" / "summary.txt").read_text()


def test_bump_propagation(tmp_path):
    cfg = write(tmp_path / "bump.cfg", "preset=bump\nT_end=0.05\noutput_stride=0.05\n")
    assert cli.main(["verify", "--config", str(cfg), "--check", "propagation", "--out", str(tmp_path / "o")]) == 0
    lines = (tmp_path / "o" / "propagation.csv").read_text().splitlines()
    assert lines[0] == "t,max_outside,rate,passed" and lines[1].endswith("True")


def test_failing_check_exit_1(tmp_path, monkeypatch):
    monkeypatch.setitem(cli._RUNNERS, "young", lambda traj, cfg, out: cli.CheckResult("young", False, "stub"))
    cfg = write(tmp_path / "f.cfg", "preset=zero\nT_end=0.1\nchecks=theorem1,young\n")
    assert cli.main(["verify", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    summary = (tmp_path / "o" / "summary.txt").read_text()
    assert "theorem1: PASS" in summary and "young: FAIL" in summary


def test_internal_error_exit_4(tmp_path, monkeypatch):
    def boom(traj, cfg, out):
        raise ZeroDivisionError("bug")
    monkeypatch.setitem(cli._RUNNERS, "young", boom)
    cfg = write(tmp_path / "f.cfg", "preset=zero\nT_end=0.1\nchecks=young\n")
    assert cli.main(["verify", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 4


def test_blowup_exit_3(tmp_path):
    g = Grid(60.0, 4096)
    data = np.column_stack([g.x, -np.tanh(g.x) / np.cosh(g.x) ** 2])
    np.savetxt(tmp_path / "steep.csv", data, delimiter=",", header="x,u", comments="", fmt="%.17g")
    cfg = write(tmp_path / "steep.cfg",
                f"preset=custom-file\ncustom_file={tmp_path / 'steep.csv'}\nT_end=3\n"
                "ux_blowup=8\ntail_tol=none\nchecks=theorem1\n")
    assert cli.main(["verify", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3
    assert "blown_up=True" in (tmp_path / "o" / "summary.txt").read_text()


def test_custom_file_resampled(tmp_path):
    g = Grid(40.0, 512)
    data = np.column_stack([g.x, 0.5 / np.cosh(g.x), 0.2 / np.cosh(g.x)])
    np.savetxt(tmp_path / "d.csv", data, delimiter=",", header="x,u,rho", comments="", fmt="%.17g")
    cfg = cli.parse_config(f"preset=custom-file\ncustom_file={tmp_path / 'd.csv'}\nN=2048\n")
    s = cli.initial_from_config(cfg)
    assert s.grid == Grid(40.0, 2048)
    assert np.max(np.abs(s.u - 0.5 / np.cosh(s.grid.x))) < 1e-12
    assert np.max(np.abs(s.rho - 0.2 / np.cosh(s.grid.x))) < 1e-12


def test_custom_file_length_mismatch(tmp_path):
    g = Grid(40.0, 64)
    np.savetxt(tmp_path / "d.csv", np.column_stack([g.x, np.zeros(64)]), delimiter=",", header="x,u", comments="")
    cfg = cli.parse_config(f"preset=custom-file\ncustom_file={tmp_path / 'd.csv'}\nL=30\n")
    with pytest.raises(ConfigError):
        cli.initial_from_config(cfg)


class TestConfig:
    def test_parse(self):
        cfg = cli.parse_config("# comment\npreset = gaussian\np=inf\nchecks=theorem1, decay\n"
                               "weight_a=0.5\nweight_b=1\nprofile_times=0.1,0.2\n")
        assert cfg.preset == "gaussian" and math.isinf(cfg.p)
        assert cfg.checks == ("theorem1", "decay")
        assert cfg.weight.a == 0.5 and cfg.weight.b == 1.0
        assert cfg.profile_times == (0.1, 0.2)

    @pytest.mark.parametrize("text,line", [("preset=sech\nbogus=1\n", ":2:"), ("N=lots\n", ":1:"),
                                           ("preset=sech\n\njust words\n", ":3:")])
    def test_errors_carry_line(self, text, line):
        with pytest.raises(ConfigError, match=line):
            cli.parse_config(text, "run.cfg")

    @pytest.mark.parametrize("text", ["preset=peakon\n", "N=1000\n", "T_end=-1\n", "T_end=1\noutput_stride=0.3\n",
                                      "checks=everything\n", "p=0.5\n", "decay_kind=fast\n"])
    def test_invalid(self, text):
        with pytest.raises(ConfigError):
            cli.parse_config(text)

    def test_unknown_preset_exit_2(self, tmp_path):
        cfg = write(tmp_path / "x.cfg", "preset=peakon\n")
        assert cli.main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2

    def test_missing_config_exit_2(self, tmp_path):
        assert cli.main(["simulate", "--config", str(tmp_path / "nope.cfg")]) == 2


def test_no_checks_requested(tmp_path):
    cfg = write(tmp_path / "z.cfg", "preset=zero\nT_end=0.1\n")
    assert cli.main(["verify", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_env_output_root(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "root"))
    cfg = write(tmp_path / "named.cfg", "preset=zero\nT_end=0.1\n")
    assert cli.main(["simulate", "--config", str(cfg)]) == 0
    traj = tmp_path / "root" / "named" / "trajectory"
    assert (traj / "diag.csv").exists() and (traj / "meta").exists()


def test_unwritable_output(tmp_path):
    blocker = write(tmp_path / "file", "x")
    cfg = write(tmp_path / "z.cfg", "preset=zero\nT_end=0.1\n")
    assert cli.main(["simulate", "--config", str(cfg), "--out", str(blocker / "sub")]) == 2


def test_verify_reuses_trajectory(tmp_path):
    cfg = write(tmp_path / "s.cfg", "preset=sech\nT_end=0.1\nweight_c=2\n")
    assert cli.main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["verify", "--config", str(cfg), "--check", "theorem1", "--check", "diffineq",
                     "--trajectory", str(tmp_path / "a" / "trajectory"), "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "b" / "diffineq.csv").exists()
    assert not (tmp_path / "b" / "trajectory").exists()
    # the run directory itself is accepted too
    assert cli.main(["verify", "--config", str(cfg), "--check", "theorem1",
                     "--trajectory", str(tmp_path / "a"), "--out", str(tmp_path / "c")]) == 0


def test_byte_reproducible(tmp_path):
    cfg = write(tmp_path / "r.cfg", "preset=sech\nT_end=0.3\nweight_c=2\np=inf\n"
                "checks=theorem1,diffineq,corollary2,decay,young\nprofile_times=0.25\nyoung_pairs=20\n")
    for d in ("one", "two"):
        assert cli.main(["verify", "--config", str(cfg), "--out", str(tmp_path / d)]) == 0
    for name in ("theorem1.csv", "diffineq.csv", "corollary2.csv", "decay.csv", "young.csv", "summary.txt",
                 "trajectory/diag.csv", "trajectory/snap_10.csv"):
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes(), name


def test_corollary1_check(tmp_path):
    cfg = write(tmp_path / "c1.cfg", "preset=sech\nT_end=0.2\nweight_a=1\nweight_b=1\nweight_c=-2\np=inf\n")
    assert cli.main(["verify", "--config", str(cfg), "--check", "corollary1", "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "corollary1.csv").read_text().splitlines()[-1].count(",") == 2


class TestWeightsCheck:
    def test_unit(self, tmp_path, capsys):
        spec = write(tmp_path / "one.spec", "a=0\nb=0\nc=0\nd=0\nside=both\n")
        assert cli.main(["weights-check", str(spec)]) == 0
        out = capsys.readouterr().out
        C = float([l for l in out.splitlines() if l.startswith("C=")][0][2:])
        assert C == pytest.approx(14.0, rel=1e-12)

    def test_refusal(self, tmp_path, capsys):
        spec = write(tmp_path / "crit.spec", "a=1\nb=1\nside=both\n")
        assert cli.main(["weights-check", str(spec)]) == 2
        assert "refused" in capsys.readouterr().err

    def test_half_exponential(self, tmp_path, capsys):
        spec = write(tmp_path / "half.spec", "a=0.5\nb=1\n")
        assert cli.main(["weights-check", str(spec)]) == 0
        out = capsys.readouterr().out
        v = float([l for l in out.splitlines() if l.startswith("v_integral=")][0].split("=")[1])
        assert math.isfinite(v) and v == pytest.approx(4.0)

    def test_parse_error(self, tmp_path, capsys):
        spec = write(tmp_path / "bad.spec", "a=0\nc=two\n")
        assert cli.main(["weights-check", str(spec)]) == 2
        assert ":2:" in capsys.readouterr().err


def test_sweep(tmp_path):
    a = write(tmp_path / "a.cfg", "preset=zero\nT_end=0.1\nchecks=theorem1\n")
    b = write(tmp_path / "b.cfg", "preset=sech\nT_end=0.05\nweight_a=1\nweight_b=1\nchecks=theorem1\n")
    proc = subprocess.run([sys.executable, "-m", "chpersist", "sweep", str(a), str(b), "--workers", "2",
                           "--out-root", str(tmp_path / "runs")], capture_output=True, text=True)
    assert proc.returncode == 2
    assert f"{a}: exit 0" in proc.stdout and f"{b}: exit 2" in proc.stdout
    assert (tmp_path / "runs" / "a" / "summary.txt").exists()
    assert (tmp_path / "runs" / "b" / "summary.txt").exists()
