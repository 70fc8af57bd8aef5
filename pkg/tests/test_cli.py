"""Command line subcommands, bundle layout and exit codes."""

import json
import subprocess
import sys

import numpy as np
import pytest

from actionibvp import bundle, cli
from actionibvp.solver import ConvergenceError


def read(path):
    return bundle.read_csv(path)


def report(path):
    return json.loads((path / "report.json").read_text())


class TestSpectrum:
    def test_unregularized(self, tmp_path):
        assert cli.main(["spectrum", "--order", "121", "--n", "20", "--out", str(tmp_path)]) == 0
        header, data = read(tmp_path / "spectrum.csv")
        assert header == ["re", "im"]
        assert data.shape == (20, 2)
        assert np.sum(np.hypot(data[:, 0], data[:, 1]) < 1e-6) == 2
        rep = report(tmp_path)
        assert rep["schema_version"] == bundle.SCHEMA_VERSION
        assert rep["near_zero_count"] == 2

    def test_regularized(self, tmp_path):
        assert cli.main(["spectrum", "--n", "20", "--regularized", "--out", str(tmp_path)]) == 0
        _, data = read(tmp_path / "spectrum.csv")
        mod = np.hypot(data[:, 0], data[:, 1])
        assert data.shape == (21, 2)
        assert not np.any(mod < 0.05)
        assert np.sum(np.hypot(data[:, 0] - 1.0, data[:, 1]) <= 1e-10) == 1

    def test_n2_both_zero(self, tmp_path):
        assert cli.main(["spectrum", "--n", "2", "--out", str(tmp_path)]) == 0
        _, data = read(tmp_path / "spectrum.csv")
        np.testing.assert_array_equal(data, 0.0)

    def test_matrix_export(self, tmp_path):
        cli.main(["spectrum", "--n", "4", "--unscaled", "--export-matrix", "--out", str(tmp_path)])
        m = np.loadtxt(tmp_path / "matrix.csv", delimiter=",")
        np.testing.assert_array_equal(m[0], [-3.0, 3.0, 0.0, 0.0])

    def test_invalid_order(self, tmp_path, capsys):
        assert cli.main(["spectrum", "--order", "353", "--out", str(tmp_path)]) == 1
        assert "unsupported" in capsys.readouterr().err


class TestParticle:
    def test_defaults(self, tmp_path):
        assert cli.main(["particle", "--out", str(tmp_path)]) == 0
        header, data = read(tmp_path / "trajectory.csv")
        assert header == ["t", "x1", "x2", "x_analytic"]
        assert data.shape == (32, 4)
        rep = report(tmp_path)
        assert rep["solver"]["converged"]
        assert abs(rep["convergence"]["order"] - 2.0) <= 0.15
        assert rep["pi_mode_detected"] is False
        cfg = json.loads((tmp_path / "config.json").read_text())
        assert cfg["config"]["study_grids"] == [16, 32, 64, 128]

    def test_no_regularize_flagged(self, tmp_path):
        assert cli.main(["particle", "--no-regularize", "--no-study", "--out", str(tmp_path)]) == 0
        rep = report(tmp_path)
        assert rep["pi_mode_detected"] is True
        assert rep["pi_mode"]["left_null_pi_overlap"] >= 0.99

    def test_g0_exact_linear(self, tmp_path):
        assert cli.main(["particle", "--g", "0", "--v-init", "1", "--out", str(tmp_path)]) == 0
        rep = report(tmp_path)
        assert rep["exact_linear"] is True
        assert rep["convergence"]["degenerate"] is True

    def test_config_file_and_override(self, tmp_path):
        cfg = tmp_path / "p.json"
        cfg.write_text(json.dumps({"g": 2.0, "n_t": 10, "t_span": [0, 2]}))
        out = tmp_path / "run"
        assert cli.main(["particle", "--config", str(cfg), "--n-t", "12", "--no-study", "--out", str(out)]) == 0
        snap = json.loads((out / "config.json").read_text())["config"]
        assert snap["g"] == 2.0 and snap["n_t"] == 12 and snap["t_span"] == [0.0, 2.0]

    def test_rerun_from_bundle_config(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        cli.main(["particle", "--v-init", "0.3", "--grids", "8", "16", "32", "64", "--out", str(a)])
        cli.main(["particle", "--config", str(a / "config.json"), "--out", str(b)])
        for name in ("trajectory.csv", "convergence.csv"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_unknown_key(self, tmp_path):
        cfg = tmp_path / "p.json"
        cfg.write_text(json.dumps({"gravity": 2.0}))
        assert cli.main(["particle", "--config", str(cfg), "--out", str(tmp_path)]) == 1

    def test_solver_failure_exit_code(self, tmp_path, monkeypatch):
        def boom(cfg):
            raise ConvergenceError("no convergence")

        monkeypatch.setattr(cli, "solve_particle", boom)
        assert cli.main(["particle", "--out", str(tmp_path)]) == 2
        assert report(tmp_path)["status"] == "solver_failure"

    def test_converge(self, tmp_path):
        assert cli.main(["converge", "--out", str(tmp_path)]) == 0
        header, data = read(tmp_path / "convergence.csv")
        assert header == ["n_t", "dt", "max_error"]
        np.testing.assert_array_equal(data[:, 0], [16, 32, 64, 128])
        assert abs(report(tmp_path)["convergence"]["order"] - 2.0) <= 0.15


@pytest.fixture(scope="module")
def wave_bundle(tmp_path_factory):
    out = tmp_path_factory.mktemp("wave")
    code = cli.main(["wave", "--out", str(out)])
    return out, code


class TestWave:
    def test_default_passes(self, wave_bundle):
        out, code = wave_bundle
        assert code == 0
        rep = report(out)
        assert all(rep["invariants"].values())
        assert rep["diagnostics"]["charge_max_rel_deviation"] <= 1e-8
        for name in ("fields.csv", "multipliers.csv", "charge.csv", "config.json"):
            assert (out / name).exists()

    def test_fields_layout(self, wave_bundle):
        out, _ = wave_bundle
        header, data = read(out / "fields.csv")
        assert header[:4] == ["k", "j", "tau", "sigma"]
        assert "t_dot" in header and "phi1" in header
        assert data.shape == (30 * 24, len(header))

    def test_deterministic(self, wave_bundle, tmp_path):
        out, _ = wave_bundle
        again = tmp_path / "again"
        assert cli.main(["wave", "--config", str(out / "config.json"), "--out", str(again)]) == 0
        for name in ("fields.csv", "multipliers.csv", "charge.csv"):
            assert (out / name).read_bytes() == (again / name).read_bytes()

    def test_noether_from_bundle(self, wave_bundle, tmp_path):
        out, _ = wave_bundle
        dest = tmp_path / "charge"
        assert cli.main(["noether", str(out), "--out", str(dest)]) == 0
        assert (dest / "charge.csv").read_bytes() == (out / "charge.csv").read_bytes()
        header, data = read(dest / "charge.csv")
        assert header == ["k", "tau", "Q", "deviation"]

    def test_bundle_round_trip(self, wave_bundle):
        out, _ = wave_bundle
        sol = bundle.load_wave_bundle(out)
        from actionibvp.wave import solve_wave

        ref = solve_wave(sol.config)
        np.testing.assert_array_equal(sol.to_vector(), ref.to_vector())

    def test_vacuum_constant_charge(self, tmp_path):
        cfg = tmp_path / "vac.json"
        cfg.write_text(json.dumps({"bump_amplitude": 0.0, "n_tau": 8, "n_sigma": 6}))
        assert cli.main(["wave", "--config", str(cfg), "--out", str(tmp_path / "v")]) == 0
        _, data = read(tmp_path / "v" / "charge.csv")
        np.testing.assert_allclose(data[:, 2], data[0, 2], rtol=1e-13)
        assert report(tmp_path / "v")["diagnostics"]["refinement_correlation"] is None

    def test_overrides(self, tmp_path):
        assert cli.main(["wave", "--n-tau", "9", "--n-sigma", "7", "-T", "500", "--out", str(tmp_path)]) == 0
        snap = json.loads((tmp_path / "config.json").read_text())["config"]
        assert (snap["n_tau"], snap["n_sigma"], snap["tension"]) == (9, 7, 500.0)

    def test_solver_failure(self, tmp_path):
        assert cli.main(["wave", "--n-tau", "9", "--n-sigma", "7", "--max-iter", "1", "--out", str(tmp_path)]) == 2
        assert report(tmp_path)["status"] == "solver_failure"

    def test_causality_violation(self, tmp_path, monkeypatch):
        import actionibvp.wave as wave

        real = wave.solve_stationary

        def backwards(problem):
            z, rep = real(problem)
            n = 9 * 7
            z[n : 2 * n] *= -1.0
            return z, rep

        monkeypatch.setattr(wave, "solve_stationary", backwards)
        assert cli.main(["wave", "--n-tau", "9", "--n-sigma", "7", "--out", str(tmp_path)]) == 3
        assert report(tmp_path)["invariants"]["causality"] is False

    def test_unconverged_bundle(self, wave_bundle, tmp_path):
        out, _ = wave_bundle
        copy = tmp_path / "b"
        copy.mkdir()
        for f in out.iterdir():
            (copy / f.name).write_bytes(f.read_bytes())
        rep = report(copy)
        rep["solver"]["converged"] = False
        (copy / "report.json").write_text(json.dumps(rep))
        assert cli.main(["noether", str(copy)]) == 2


def test_env_out_dir(tmp_path, monkeypatch):
    monkeypatch.setenv(bundle.OUT_ENV, str(tmp_path))
    assert cli.main(["spectrum", "--n", "5"]) == 0
    assert (tmp_path / "spectrum" / "spectrum.csv").exists()


def test_csv_round_trip_is_exact(tmp_path):
    x = np.random.default_rng(0).normal(size=(50, 3)) * 10.0 ** np.arange(-8, 7, 5)
    bundle.write_csv(tmp_path / "x.csv", ["a", "b", "c"], list(x.T))
    _, back = bundle.read_csv(tmp_path / "x.csv")
    np.testing.assert_array_equal(back, x)


def test_module_entry_point(tmp_path):
    res = subprocess.run(
        [sys.executable, "-m", "actionibvp", "spectrum", "--n", "6", "--out", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert res.returncode == 0, res.stderr
    assert (tmp_path / "spectrum.csv").exists()
