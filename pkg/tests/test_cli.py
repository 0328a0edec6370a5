import dataclasses
import os

import numpy as np
import pytest

from lanewave import cli
from lanewave.core import ModelParams
from lanewave.fvm import Grid2D
from lanewave.scenarios import ScenarioSpec, build_scenario

QUICK = "scenario = micro-macro\nt_final = 0.01\nsnapshot_times = 0.01\n"


def run_cli(tmp_path, text, command, *sets, out="out"):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(text)
    argv = [command, "--config", str(cfg), "--out", str(tmp_path / out)]
    for s in sets:
        argv += ["--set", s]
    return cli.main(argv)


class TestParse:
    def test_defaults(self):
        cfg = cli.parse_config("")
        assert cfg.scenario == "micro-macro" and cfg.formats == ("csv",)
        assert cfg.cfl == 0.45 and cfg.rho_floor == 1e-8

    def test_values_and_comments(self):
        cfg = cli.parse_config("# run\nscenario = overtake-left\nnx = 50  # coarse\nformats = csv, pgm\n")
        assert cfg.scenario == "overtake-left" and cfg.get("nx") == 50
        assert cfg.formats == ("csv", "pgm")

    def test_override_wins(self):
        cfg = cli.parse_config("cfl = 0.3\n", ["cfl=0.2"])
        assert cfg.cfl == 0.2

    @pytest.mark.parametrize("text,msg", [
        ("cfl = 1.5\n", r"line 1: key 'cfl': cfl out of \(0,1\)"),
        ("speed = 3\n", "unknown key 'speed'"),
        ("nx = abc\n", "line 1: key 'nx': non-numeric"),
        ("\nnx = 2.5\n", "line 2: key 'nx'"),
        ("scenario = rush-hour\n", "unknown scenario"),
        ("formats = png\n", "formats"),
        ("just words\n", "expected 'key = value'"),
        ("rho_floor = 2\n", "below rho_max"),
        ("ax = 1\nbx = 0\n", "must exceed"),
        ("u_ref = nan\n", "finite"),
    ])
    def test_errors(self, text, msg):
        with pytest.raises(cli.ConfigError, match=msg):
            cli.parse_config(text)

    def test_schema_covers_all_numeric_fields(self):
        numeric = (int, float)
        for cls in (ModelParams, Grid2D):
            for f in dataclasses.fields(cls):
                assert f.name in cli.SCHEMA
        spec = build_scenario("micro-macro")
        for f in dataclasses.fields(ScenarioSpec):
            if isinstance(getattr(spec, f.name), numeric):
                assert f.name in cli.SCHEMA, f.name

    def test_build_spec_applies_everything(self):
        cfg = cli.parse_config("scenario = overtake-right\nnx = 40\nv_ref = 0.02\nne_rho = 0.5\nmicro_dt = 0.002\n"
                               "bc_x = outflow\ncfl = 0.3\n")
        spec = cli.build_spec(cfg)
        assert spec.grid.nx == 40 and spec.params.v_ref == 0.02
        assert spec.quadrants["NE"] == (0.5, 0.1, 0.0)
        assert spec.micro_dt == 0.002 and spec.bc_x == "outflow" and spec.cfl == 0.3

    def test_build_spec_invalid_quadrant(self):
        with pytest.raises(cli.ConfigError):
            cli.build_spec(cli.parse_config("ne_rho = 3\n"))


class TestCommands:
    def test_macro_2d_csv(self, tmp_path):
        assert run_cli(tmp_path, QUICK + "formats = csv,pgm\n", "run-macro-2d") == cli.EXIT_OK
        out = tmp_path / "out"
        lines = (out / "field_t0.010000.csv").read_text().splitlines()
        assert lines[0] == "x,y,rho,rho_u,rho_v,u,v,w,sigma"
        assert len(lines) == 1 + 200 * 32
        first, second = (np.array(s.split(","), float) for s in lines[1:3])
        assert second[0] > first[0] and second[1] == first[1]  # i runs fastest
        pgm = (out / "rho_t0.010000.pgm").read_bytes()
        assert pgm.startswith(b"P5\n200 32\n255\n") and len(pgm) == len(b"P5\n200 32\n255\n") + 6400
        report = (out / "report_run-macro-2d.txt").read_text()
        assert "scenario=micro-macro" in report

    def test_csv_roundtrip(self, tmp_path):
        assert run_cli(tmp_path, QUICK, "run-macro-2d") == 0
        data = np.loadtxt(tmp_path / "out" / "field_t0.010000.csv", delimiter=",", skiprows=1)
        rho, ru, u, w = data[:, 2], data[:, 3], data[:, 5], data[:, 7]
        np.testing.assert_allclose(ru, rho * u, rtol=1e-15)
        np.testing.assert_allclose(w, u + rho, rtol=1e-12)

    def test_deterministic(self, tmp_path):
        assert run_cli(tmp_path, QUICK, "run-macro-2d", out="a") == 0
        assert run_cli(tmp_path, QUICK, "run-macro-2d", out="b") == 0
        for name in os.listdir(tmp_path / "a"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_macro_1d(self, tmp_path):
        text = "scenario = arz1d-vs-ftl1d\nt_final = 0.01\n"
        assert run_cli(tmp_path, text, "run-macro-1d") == 0
        files = os.listdir(tmp_path / "out")
        assert any(f.startswith("field1d_") for f in files)

    def test_micro(self, tmp_path):
        assert run_cli(tmp_path, QUICK, "run-micro") == 0
        lines = (tmp_path / "out" / "fleet_t0.000000.csv").read_text().splitlines()
        assert lines[0] == "t,id,lane,x,y,u,v,rho_local"
        assert len(lines) == 161

    def test_compare(self, tmp_path):
        assert run_cli(tmp_path, QUICK, "compare") == 0
        report = (tmp_path / "out" / "report_compare.txt").read_text()
        assert "mode=micro-macro" in report and "l1_density=" in report

    def test_riemann_identity(self, tmp_path, capsys):
        text = "rho_l = 0.3\nu_l = 0.5\nv_l = 0\nrho_r = 0.3\nu_r = 0.5\nv_r = 0\n"
        assert run_cli(tmp_path, text, "riemann") == 0
        assert "identity (degenerate contact)" in capsys.readouterr().out

    def test_riemann_missing_state(self, tmp_path):
        assert run_cli(tmp_path, "rho_l = 0.3\n", "riemann") == cli.EXIT_CONFIG

    def test_eigen(self, tmp_path, capsys):
        assert run_cli(tmp_path, "rho = 0.5\nu = 0.8\nv = 0.001\n", "eigen") == 0
        out = capsys.readouterr().out
        line = next(s for s in out.splitlines() if s.startswith("eigenvalues:"))
        lams = [float(a) for a in line.split(":", 1)[1].split(",")]
        np.testing.assert_allclose(lams, [-0.5, 0.3, 0.8], atol=1e-15)

    def test_eigen_zero_direction(self, tmp_path):
        text = "rho = 0.5\nu = 0.8\nv = 0\nxi1 = 0\nxi2 = 0\n"
        assert run_cli(tmp_path, text, "eigen") == cli.EXIT_CONFIG

    def test_bad_cfl_exit(self, tmp_path):
        assert run_cli(tmp_path, "cfl = 1.5\n", "run-macro-2d") == cli.EXIT_CONFIG

    def test_bad_set_exit(self, tmp_path):
        assert run_cli(tmp_path, "", "run-macro-2d", "nx") == cli.EXIT_CONFIG

    def test_unknown_command(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("")
        with pytest.raises(SystemExit) as exc:
            cli.main(["dance", "--config", str(cfg)])
        assert exc.value.code == cli.EXIT_CONFIG
        assert cli.dispatch(cli.parse_config(""), "dance") == cli.EXIT_CONFIG

    def test_missing_config_file(self, tmp_path):
        assert cli.main(["eigen", "--config", str(tmp_path / "nope.cfg")]) == cli.EXIT_CONFIG

    def test_numerical_failure_exit(self, tmp_path):
        # vacuum state has no eigenvectors
        assert run_cli(tmp_path, "rho = 0\nu = 0.1\nv = 0\n", "eigen") == cli.EXIT_FAILURE

    def test_trajectory_compare(self, tmp_path):
        ref = tmp_path / "ref.csv"
        rows = ["t,id,x,y,u,v"]
        for k in range(11):
            t = 0.01 * k
            rows.append(f"{t},0,{0.3 * t},0.003,0.3,0")
            rows.append(f"{t},1,{0.1 + 0.5 * t},0.006,0.5,0")
        ref.write_text("\n".join(rows) + "\n")
        text = f"reference = {ref}\nmicro_dt = 0.01\n"
        assert run_cli(tmp_path, text, "compare") == 0
        err = (tmp_path / "out" / "trajectory_errors.csv").read_text().splitlines()
        assert err[0] == "id,t,error" and len(err) == 1 + 2 * 11
