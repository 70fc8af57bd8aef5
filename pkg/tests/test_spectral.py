"""Null spaces, spectra and pi-mode overlaps of SBP derivative operators."""

import numpy as np
import pytest

from actionibvp.particle import ParticleConfig, solve_particle
from actionibvp.sbp import Grid1D, build_sbp, regularize
from actionibvp.spectral import (
    null_space,
    pi_mode,
    pi_mode_overlap,
    projection_onto_span,
    spectrum,
)


def d121(n, scaled=True):
    g = Grid1D.from_span(n, 0.0, 1.0)
    p = build_sbp("121", g)
    return (g.spacing if scaled else 1.0) * np.asarray(p.d), p


def test_null_space_d121_n8_dim_two():
    d, _ = d121(8)
    rep = null_space(d)
    assert rep.dim_right == 2
    assert projection_onto_span(np.ones(8), rep.right_basis) >= 0.999


@pytest.mark.parametrize("n,multiplicity", [(4, 2), (5, 3), (8, 2), (20, 2), (40, 2), (41, 3)])
def test_null_space_structure(n, multiplicity):
    # one zero singular value, but a single Jordan block at 0 whose size
    # (checked in exact arithmetic) is 2 for even and 3 for odd n
    d, p = d121(n)
    rep = null_space(d)
    assert rep.dim_right == rep.dim_left == 1
    assert rep.generalized_dim == multiplicity
    assert projection_onto_span(np.ones(n), rep.right_basis) >= 0.999


@pytest.mark.parametrize("n", [8, 20])
def test_left_null_vector(n):
    d, p = d121(n)
    euclid = null_space(d).left_basis[0]
    weighted = null_space(d, weights=p.h).left_basis[0]
    # z^T H D = 0 for the pi-mode, so the Euclidean left null vector is H pi
    assert pi_mode_overlap(weighted) >= 0.99
    assert projection_onto_span(p.h * pi_mode(n), [euclid]) >= 0.999


def test_null_space_identity():
    rep = null_space(np.eye(5))
    assert rep.dim_right == rep.dim_left == 0
    assert rep.generalized_dim == 0


def test_null_space_bad_input():
    with pytest.raises(ValueError):
        null_space(np.ones((3, 4)))
    with pytest.raises(ValueError):
        null_space(np.eye(3), tolerance=0.0)


@pytest.mark.parametrize("n", [8, 20, 50])
def test_regularized_spectrum(n):
    _, p = d121(n)
    rep = spectrum(regularize(p, 0, 0.0).dimensionless_extended())
    assert rep.eigenvalues.size == n + 1
    assert rep.min_abs > 0.05 * (20 / max(n, 20))
    assert rep.has_unit_eigenvalue and rep.unit_count == 1
    assert rep.min_real_part > 0


def test_regularized_n8_spec_values():
    _, p = d121(8)
    rep = spectrum(regularize(p, 0, 0.0).dimensionless_extended())
    assert rep.min_abs > 0.05
    assert rep.has_unit_eigenvalue
    assert rep.min_real_part > 0


def test_unregularized_n8_two_zeros():
    d, _ = d121(8)
    rep = spectrum(d)
    assert rep.min_abs < 1e-12
    assert int(np.sum(np.abs(rep.eigenvalues) < 1e-12)) == 2


@pytest.mark.parametrize("n,zeros", [(2, 2), (7, 3), (20, 2), (21, 3)])
def test_defective_zero_count(n, zeros):
    d, _ = d121(n)
    assert int(np.sum(spectrum(d).eigenvalues == 0.0)) == zeros


def test_unscaled_spectrum_scales():
    d, _ = d121(10, scaled=True)
    du, _ = d121(10, scaled=False)
    a = np.sort(np.abs(spectrum(d).eigenvalues))
    b = np.sort(np.abs(spectrum(du).eigenvalues))
    np.testing.assert_allclose(b, a * 9, atol=1e-10)


def test_diagonal_spectrum_exact():
    rep = spectrum(np.diag([1.0, 2.0, 3.0]))
    np.testing.assert_array_equal(rep.eigenvalues, [1, 2, 3])
    assert rep.unit_count == 1


def test_nondefective_rank_deficiency_keeps_values():
    m = np.diag([0.0, 1.0, 2.0])
    rep = spectrum(m)
    np.testing.assert_array_equal(rep.eigenvalues, [0, 1, 2])


class TestPiMode:
    def test_self_overlap(self):
        assert pi_mode_overlap(pi_mode(9)) == pytest.approx(1.0)

    @pytest.mark.parametrize("n", [2, 8, 32])
    def test_constant_even(self, n):
        assert pi_mode_overlap(np.ones(n)) == 0.0

    def test_zero_vector(self):
        with pytest.raises(ValueError):
            pi_mode_overlap(np.zeros(4))

    def test_naive_particle_residual(self):
        cfg = ParticleConfig(n_t=32, regularized=False, v_init=0.7)
        sol = solve_particle(cfg)
        assert pi_mode_overlap(sol.x1 - sol.analytic()) > 0.5
