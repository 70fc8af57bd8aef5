"""Time-translation charge and the refinement balance."""

import numpy as np
import pytest

from actionibvp.noether import (
    UnconvergedSolutionError,
    balance_series,
    charge_density,
    charge_series,
    refinement_balance,
)
from actionibvp.solver import SolverReport
from actionibvp.wave import FieldSolution, WaveConfig, density_terms


class TestDensity:
    def test_vacuum(self):
        z = np.zeros((3, 4))
        np.testing.assert_array_equal(charge_density(z, z, np.full((3, 4), 1.2), z, 10.0), 1.2)

    def test_left_mover(self):
        rng = np.random.default_rng(0)
        pp = rng.normal(size=(4, 4))
        td = rng.uniform(0.5, 2.0, size=(4, 4))
        got = charge_density(pp, pp, td, np.zeros((4, 4)), 5.0)
        np.testing.assert_allclose(got, td * (1 + pp**2 / 5.0))

    def test_is_derivative_of_density(self):
        rng = np.random.default_rng(1)
        pd, pp, td, tp = rng.normal(size=(4, 5, 5))
        T, eps = 2.5, 1e-6
        fd = (density_terms(td + eps, tp, pd, pp, T, 0) - density_terms(td - eps, tp, pd, pp, T, 0)) / (2 * eps)
        np.testing.assert_allclose(charge_density(pd, pp, td, tp, T), fd, rtol=1e-6, atol=1e-8)

    def test_validation(self):
        z = np.zeros(3)
        with pytest.raises(ValueError):
            charge_density(z, z, z, np.zeros(4), 1.0)
        with pytest.raises(ValueError):
            charge_density(z, z, z, z, 0.0)


class TestSeries:
    def test_vacuum(self, vacuum_run):
        series = charge_series(vacuum_run)
        cfg = vacuum_run.config
        length = cfg.sigma_span[1] - cfg.sigma_span[0]
        np.testing.assert_allclose(series.values, cfg.dt0 * length, rtol=1e-12)
        assert series.max_abs_deviation <= 1e-12

    def test_bump_conserved(self, bump_run):
        sol, _ = bump_run
        series = charge_series(sol)
        assert series.max_abs_deviation <= 1e-8 * abs(series.initial_value)
        assert series.tau.size == sol.config.n_tau

    @pytest.mark.slow
    def test_fine_grid_conserved(self, fine_run):
        series = charge_series(fine_run)
        assert series.max_rel_deviation <= 1e-8

    def test_endpoint_terms_needed(self, bump_run):
        sol, _ = bump_run
        series = charge_series(sol)
        first, last = series.endpoint_terms
        interior = series.values[1:-1]
        np.testing.assert_allclose(interior, series.initial_value, rtol=1e-12)
        # the initial-data multipliers vanish at the stationary point, the
        # connecting ones carry the charge on the last slice
        assert abs(first) <= 1e-12
        assert abs(last) > 1e-3 * abs(series.initial_value)

    def test_unconverged_rejected(self):
        cfg = WaveConfig(n_tau=5, n_sigma=5)
        n = 25
        sol = FieldSolution(
            phi1=np.zeros(n),
            phi2=np.zeros(n),
            tmap1=np.zeros(n),
            tmap2=np.zeros(n),
            multipliers={},
            report=SolverReport(False, 3, 1.0),
            config=cfg,
        )
        with pytest.raises(UnconvergedSolutionError):
            charge_series(sol)


class TestBalance:
    def test_vacuum_flagged(self, vacuum_run):
        rep = refinement_balance(vacuum_run)
        assert rep.degenerate and rep.correlation is None
        cfg = vacuum_run.config
        np.testing.assert_allclose(rep.series, cfg.dt0 * 1.0, rtol=1e-12)

    def test_bump_negative_correlation(self, bump_run):
        sol, _ = bump_run
        rep = refinement_balance(sol)
        assert not rep.degenerate
        assert rep.correlation < 0

    def test_synthetic_right_mover(self):
        nt, ns, T, q_target = 12, 20, 50.0, 1.7
        sigma = np.linspace(0, 1, ns)
        h = np.full(ns, sigma[1])
        h[[0, -1]] *= 0.5
        k = np.arange(nt)[:, None]
        pp = 3.0 * np.exp(-(((sigma - 0.2 - 0.05 * k) / 0.1) ** 2))
        tp = 0.1 * np.sin(2 * np.pi * sigma) * np.ones((nt, 1))
        # choose tdot so that every point carries the same integrand
        c = q_target / h.sum()
        td = (c - pp**2 * tp / T) / (1 + pp**2 / T)
        series = balance_series(pp, td, tp, h, T)
        np.testing.assert_allclose(series, q_target, atol=1e-10)
