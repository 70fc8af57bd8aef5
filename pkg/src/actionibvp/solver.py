"""Globally implicit Newton iteration for stationary points of discrete actions.

Discretized doubled actions have saddle points, not minima, so the iteration
works on the gradient: it solves ``J(z) dz = -grad(z)`` with ``J`` the
Jacobian of the gradient and backtracks on the merit ``|grad|_2^2``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, Literal, Optional

import numpy as np
import scipy.linalg
from scipy import sparse
from scipy.sparse import linalg as splinalg

__all__ = [
    "StationarityProblem",
    "SolverReport",
    "SolverError",
    "ConvergenceError",
    "SingularJacobianError",
    "NonFiniteError",
    "solve_stationary",
    "check_gradient",
    "fd_jacobian",
]

log = logging.getLogger(__name__)

JacobianMode = Literal["fd", "analytic"]


class SolverError(RuntimeError):
    """Base class for stationarity solver failures; carries the partial report."""

    def __init__(self, message: str, report: Optional["SolverReport"] = None):
        super().__init__(message)
        self.report = report


class ConvergenceError(SolverError):
    pass


class SingularJacobianError(SolverError):
    def __init__(self, message, report=None, condition_estimate: float = np.inf):
        super().__init__(message, report)
        self.condition_estimate = condition_estimate


class NonFiniteError(SolverError):
    pass


@dataclass
class StationarityProblem:
    """A stationarity problem ``grad(z) = 0`` for a scalar objective.

    ``jacobian`` may return a dense array or a scipy sparse matrix; it is used
    when ``jacobian_mode == "analytic"``.  Without it the Jacobian is built
    from forward differences of ``gradient``.
    """

    dimension: int
    objective: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    initial_guess: np.ndarray
    grad_tolerance: float = 1e-12
    max_iterations: int = 200
    jacobian: Optional[Callable[[np.ndarray], object]] = None
    jacobian_mode: JacobianMode = "fd"

    def __post_init__(self) -> None:
        if self.dimension <= 0:
            raise ValueError("dimension must be positive")
        if not self.grad_tolerance > 0:
            raise ValueError("grad_tolerance must be positive")
        self.initial_guess = np.asarray(self.initial_guess, dtype=float)
        if self.initial_guess.shape != (self.dimension,):
            raise ValueError(
                f"initial guess has shape {self.initial_guess.shape}, "
                f"expected ({self.dimension},)"
            )
        if self.jacobian_mode == "analytic" and self.jacobian is None:
            raise ValueError("analytic Jacobian mode requires a jacobian callable")


@dataclass
class SolverReport:
    converged: bool
    iterations: int
    final_grad_norm: float
    residual_history: list[float] = field(default_factory=list)
    message: str = ""

    def to_dict(self) -> dict:
        return {
            "converged": self.converged,
            "iterations": self.iterations,
            "final_grad_norm": self.final_grad_norm,
            "residual_history": list(self.residual_history),
            "message": self.message,
        }


def _fd_step(x: np.ndarray) -> np.ndarray:
    return 1e-6 * (1.0 + np.abs(x))


def fd_jacobian(gradient: Callable, z: np.ndarray, g0: Optional[np.ndarray] = None) -> np.ndarray:
    """Column-wise forward-difference Jacobian of ``gradient`` at ``z``."""
    z = np.asarray(z, dtype=float)
    if g0 is None:
        g0 = np.asarray(gradient(z), dtype=float)
    steps = _fd_step(z)
    jac = np.empty((g0.size, z.size))
    zp = z.copy()
    for j in range(z.size):
        zp[j] = z[j] + steps[j]
        # actual representable step
        hj = zp[j] - z[j]
        jac[:, j] = (np.asarray(gradient(zp), dtype=float) - g0) / hj
        zp[j] = z[j]
    return jac


def _newton_step(jac, g: np.ndarray, report: SolverReport) -> np.ndarray:
    rhs = -g
    if sparse.issparse(jac):
        try:
            lu = splinalg.splu(sparse.csc_matrix(jac))
        except RuntimeError as exc:
            raise SingularJacobianError(
                f"sparse LU failed: {exc}", report, condition_estimate=np.inf
            ) from exc
        dz = lu.solve(rhs)
        udiag = np.abs(lu.U.diagonal())
        cond = float(udiag.max() / udiag.min()) if udiag.min() > 0 else np.inf
    else:
        with warnings.catch_warnings():
            # singularity is detected from the pivots below
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            lu, piv = scipy.linalg.lu_factor(np.asarray(jac, dtype=float), check_finite=False)
        udiag = np.abs(np.diag(lu))
        cond = float(udiag.max() / udiag.min()) if udiag.min() > 0 else np.inf
        if not np.isfinite(cond):
            raise SingularJacobianError(
                "Jacobian is exactly singular", report, condition_estimate=cond
            )
        dz = scipy.linalg.lu_solve((lu, piv), rhs, check_finite=False)
    if not np.all(np.isfinite(dz)) or cond > 1e16:
        raise SingularJacobianError(
            f"Jacobian is numerically singular (pivot ratio {cond:.3e})",
            report,
            condition_estimate=cond,
        )
    return dz


def solve_stationary(problem: StationarityProblem) -> tuple[np.ndarray, SolverReport]:
    """Drive ``problem.gradient`` to zero with damped Newton steps.

    Returns the stationary point and a report; raises a :class:`SolverError`
    subclass on failure.
    """
    z = problem.initial_guess.copy()
    g = np.asarray(problem.gradient(z), dtype=float)
    report = SolverReport(converged=False, iterations=0, final_grad_norm=np.inf)
    if not np.all(np.isfinite(g)):
        raise NonFiniteError("non-finite gradient at the initial guess", report)
    gnorm = float(np.max(np.abs(g)))
    report.residual_history.append(gnorm)
    report.final_grad_norm = gnorm

    while gnorm > problem.grad_tolerance:
        if report.iterations >= problem.max_iterations:
            report.message = "maximum number of iterations exceeded"
            raise ConvergenceError(
                f"no convergence after {report.iterations} iterations "
                f"(|grad|_inf = {gnorm:.3e})",
                report,
            )
        if problem.jacobian_mode == "analytic":
            jac = problem.jacobian(z)
        else:
            jac = fd_jacobian(problem.gradient, z, g0=g)
        dz = _newton_step(jac, g, report)

        merit = float(g @ g)
        step = 1.0
        while True:
            z_new = z + step * dz
            g_new = np.asarray(problem.gradient(z_new), dtype=float)
            if np.all(np.isfinite(g_new)):
                merit_new = float(g_new @ g_new)
                if merit_new <= (1.0 - 1e-4 * step) * merit or merit_new == 0.0:
                    break
            step *= 0.5
            if step < 1e-12:
                report.message = "line search failed"
                raise ConvergenceError(
                    f"line search failed at iteration {report.iterations} "
                    f"(|grad|_inf = {gnorm:.3e})",
                    report,
                )
        z, g = z_new, g_new
        gnorm = float(np.max(np.abs(g)))
        report.iterations += 1
        report.residual_history.append(gnorm)
        report.final_grad_norm = gnorm
        log.debug("newton it=%d step=%.3g |g|=%.3e", report.iterations, step, gnorm)

    obj = problem.objective(z)
    if not np.isfinite(obj):
        raise NonFiniteError("non-finite objective at the stationary point", report)
    report.converged = True
    report.message = "converged"
    return z, report


def check_gradient(problem: StationarityProblem, point) -> float:
    """Max deviation of ``problem.gradient`` from central differences of the objective."""
    z = np.asarray(point, dtype=float)
    if z.shape != (problem.dimension,):
        raise ValueError(f"point has shape {z.shape}, expected ({problem.dimension},)")
    g = np.asarray(problem.gradient(z), dtype=float)
    if not np.all(np.isfinite(g)):
        raise NonFiniteError("non-finite analytic gradient")
    steps = _fd_step(z)
    zp = z.copy()
    err = 0.0
    for j in range(z.size):
        zp[j] = z[j] + steps[j]
        fp = problem.objective(zp)
        zp[j] = z[j] - steps[j]
        fm = problem.objective(zp)
        zp[j] = z[j]
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFiniteError(f"non-finite objective near coordinate {j}")
        err = max(err, abs((fp - fm) / (2.0 * steps[j]) - g[j]))
    return float(err)
