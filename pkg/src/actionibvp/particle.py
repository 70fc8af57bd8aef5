"""Doubled point-particle action in a constant force field.

Forward and backward copies ``x1``, ``x2`` of the trajectory carry opposite
signs in the action, initial data are imposed on the average of the branches
and the branches are tied together at final time by connecting conditions.
All four conditions enter through Lagrange multipliers, so the classical
trajectory is a stationary point of

    S = L[x1] - L[x2]
        + l1 ((x1_0 + x2_0)/2 - x_i) + l2 ((v1_0 + v2_0)/2 - v_i)
        + l3 (x1_N - x2_N) + l4 (v1_N - v2_N),

with ``L[x] = m (v^T H v / 2 - g 1^T H x)`` and ``v`` the (optionally
regularized) SBP derivative of ``x``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .sbp import Grid1D, build_sbp, normalize_order_tag, regularize
from .solver import SolverReport, StationarityProblem, solve_stationary
from .spectral import pi_mode_overlap

__all__ = [
    "ParticleConfig",
    "DoubledTrajectory",
    "ConvergenceResult",
    "particle_operators",
    "assemble_particle_action",
    "solve_particle",
    "analytic_particle",
    "convergence_study",
]


@dataclass(frozen=True)
class ParticleConfig:
    mass: float = 1.0
    g: float = 1.0
    x_init: float = 0.0
    v_init: float = 0.0
    t_span: tuple[float, float] = (0.0, 1.0)
    n_t: int = 32
    order_tag: str = "[1,2,1]"
    regularized: bool = True
    grad_tolerance: float = 1e-12
    max_iterations: int = 200
    jacobian_mode: str = "fd"

    def __post_init__(self) -> None:
        t_i, t_f = self.t_span
        if not t_f > t_i:
            raise ValueError(f"t_span must be increasing, got {self.t_span}")
        if self.n_t < 2:
            raise ValueError(f"n_t must be >= 2, got {self.n_t}")
        if not self.mass > 0:
            raise ValueError(f"mass must be positive, got {self.mass}")
        object.__setattr__(self, "t_span", (float(t_i), float(t_f)))
        object.__setattr__(self, "order_tag", normalize_order_tag(self.order_tag))
        if self.jacobian_mode not in ("fd", "analytic"):
            raise ValueError(f"unknown jacobian mode {self.jacobian_mode!r}")

    @property
    def grid(self) -> Grid1D:
        return Grid1D.from_span(self.n_t, *self.t_span)

    def replace(self, **changes) -> "ParticleConfig":
        return dataclasses.replace(self, **changes)


@dataclass
class DoubledTrajectory:
    t: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    lambdas: np.ndarray
    report: SolverReport
    config: ParticleConfig

    @property
    def x_plus(self) -> np.ndarray:
        return 0.5 * (self.x1 + self.x2)

    @property
    def x_minus(self) -> np.ndarray:
        return self.x1 - self.x2

    def analytic(self) -> np.ndarray:
        return analytic_particle(self.config, self.t)

    def max_error(self) -> float:
        return float(np.max(np.abs(self.x1 - self.analytic())))

    def branch_mismatch(self) -> float:
        return float(np.max(np.abs(self.x_minus)) / (1.0 + np.max(np.abs(self.x1))))

    def pi_overlap(self) -> float:
        """pi-mode overlap of the deviation from the analytic trajectory (0 if exact)."""
        r = self.x1 - self.analytic()
        if not np.any(r):
            return 0.0
        return pi_mode_overlap(r)


def particle_operators(cfg: ParticleConfig):
    """Quadrature weights, derivative matrix and offset used for the kinetic term."""
    pair = build_sbp(cfg.order_tag, cfg.grid)
    if cfg.regularized:
        opr = regularize(pair, 0, cfg.x_init)
        return pair.h, np.asarray(opr.homogeneous), np.asarray(opr.offset)
    return pair.h, np.asarray(pair.d), np.zeros(pair.n)


def assemble_particle_action(cfg: ParticleConfig) -> StationarityProblem:
    h, a, off = particle_operators(cfg)
    n = h.size
    m, g = cfg.mass, cfg.g

    def split(z):
        return z[:n], z[n : 2 * n], z[2 * n :]

    def lagrangian(x):
        v = a @ x + off
        return m * (0.5 * v @ (h * v) - g * (h @ x))

    def objective(z):
        x1, x2, lam = split(z)
        v1 = a @ x1 + off
        v2 = a @ x2 + off
        return (
            lagrangian(x1)
            - lagrangian(x2)
            + lam[0] * (0.5 * (x1[0] + x2[0]) - cfg.x_init)
            + lam[1] * (0.5 * (v1[0] + v2[0]) - cfg.v_init)
            + lam[2] * (x1[-1] - x2[-1])
            + lam[3] * (v1[-1] - v2[-1])
        )

    e0 = np.zeros(n)
    e0[0] = 1.0
    en = np.zeros(n)
    en[-1] = 1.0
    a0 = a[0]
    an = a[-1]

    def gradient(z):
        x1, x2, lam = split(z)
        v1 = a @ x1 + off
        v2 = a @ x2 + off
        shared = 0.5 * lam[0] * e0 + 0.5 * lam[1] * a0
        tied = lam[2] * en + lam[3] * an
        g1 = m * (a.T @ (h * v1) - g * h) + shared + tied
        g2 = -m * (a.T @ (h * v2) - g * h) + shared - tied
        cons = np.array(
            [
                0.5 * (x1[0] + x2[0]) - cfg.x_init,
                0.5 * (v1[0] + v2[0]) - cfg.v_init,
                x1[-1] - x2[-1],
                v1[-1] - v2[-1],
            ]
        )
        return np.concatenate([g1, g2, cons])

    # The action is quadratic, so the Jacobian of the gradient is constant.
    kin = m * (a.T @ (h[:, None] * a))
    c = np.zeros((4, 2 * n))
    c[0, 0] = c[0, n] = 0.5
    c[1, :n] = c[1, n:] = 0.5 * a0
    c[2, n - 1] = 1.0
    c[2, 2 * n - 1] = -1.0
    c[3, :n] = an
    c[3, n:] = -an
    jac = np.zeros((2 * n + 4, 2 * n + 4))
    jac[:n, :n] = kin
    jac[n : 2 * n, n : 2 * n] = -kin
    jac[: 2 * n, 2 * n :] = c.T
    jac[2 * n :, : 2 * n] = c

    t = cfg.grid.points
    line = cfg.x_init + cfg.v_init * (t - cfg.t_span[0])
    z0 = np.concatenate([line, line, np.zeros(4)])
    return StationarityProblem(
        dimension=2 * n + 4,
        objective=objective,
        gradient=gradient,
        initial_guess=z0,
        grad_tolerance=cfg.grad_tolerance,
        max_iterations=cfg.max_iterations,
        jacobian=lambda z: jac,
        jacobian_mode=cfg.jacobian_mode,
    )


def solve_particle(cfg: ParticleConfig) -> DoubledTrajectory:
    problem = assemble_particle_action(cfg)
    z, report = solve_stationary(problem)
    n = cfg.n_t
    return DoubledTrajectory(
        t=cfg.grid.points,
        x1=z[:n].copy(),
        x2=z[n : 2 * n].copy(),
        lambdas=z[2 * n :].copy(),
        report=report,
        config=cfg,
    )


def analytic_particle(cfg: ParticleConfig, t):
    """Closed-form trajectory ``x_i + v_i s - g s^2 / 2`` with ``s = t - t_i``."""
    t_arr = np.asarray(t, dtype=float)
    t_i, t_f = cfg.t_span
    tol = 1e-12 * max(1.0, abs(t_i), abs(t_f))
    if np.any(t_arr < t_i - tol) or np.any(t_arr > t_f + tol):
        raise ValueError(f"t outside the span {cfg.t_span}")
    s = t_arr - t_i
    x = cfg.x_init + cfg.v_init * s - 0.5 * cfg.g * s**2
    return float(x) if np.ndim(x) == 0 else x


@dataclass
class ConvergenceResult:
    grids: list[int]
    spacings: list[float]
    errors: list[float]
    order: Optional[float]
    degenerate: bool

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def convergence_study(
    cfg: ParticleConfig, grid_list: Sequence[int], zero_tol: float = 1e-10
) -> ConvergenceResult:
    """Least-squares slope of ``log(max error)`` against ``log(dt)``.

    When every error is at the rounding floor (e.g. ``g = 0``) no slope is
    fitted and the result is flagged ``degenerate``.
    """
    grids = [int(n) for n in grid_list]
    if len(grids) < 4:
        raise ValueError("a convergence study needs at least 4 grids")
    if any(b <= a for a, b in zip(grids, grids[1:])):
        raise ValueError(f"grids must be strictly increasing, got {grids}")
    errors, spacings = [], []
    for n in grids:
        c = cfg.replace(n_t=n)
        sol = solve_particle(c)
        spacings.append(c.grid.spacing)
        errors.append(sol.max_error())
    scale = 1.0 + max(abs(cfg.x_init), abs(cfg.v_init), abs(cfg.g))
    if max(errors) <= zero_tol * scale or min(errors) == 0.0:
        return ConvergenceResult(grids, spacings, errors, order=None, degenerate=True)
    slope, _ = np.polyfit(np.log(spacings), np.log(errors), 1)
    return ConvergenceResult(grids, spacings, errors, order=float(slope), degenerate=False)
