"""Discrete Noether charge of time translations and the refinement balance.

Shifting the temporal map by a constant leaves ``t' = D_sigma t`` untouched
(``D_sigma`` annihilates constants) and only moves ``tdot``, so the charge on
a tau-slice is the sigma-quadrature of ``df/d(tdot)``.  On the first and last
slice the rate multipliers contribute through the discrete delta
``e_k / h_tau[k]``; with those terms the series is constant to the accuracy
of the stationary point.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .wave import FieldSolution, WaveConfig, WaveOperators

__all__ = [
    "ChargeSeries",
    "BalanceReport",
    "UnconvergedSolutionError",
    "charge_density",
    "charge_series",
    "balance_series",
    "refinement_balance",
]


class UnconvergedSolutionError(ValueError):
    pass


@dataclass
class ChargeSeries:
    tau: np.ndarray
    values: np.ndarray
    endpoint_terms: tuple[float, float]
    initial_value: float
    max_abs_deviation: float

    @property
    def deviation(self) -> np.ndarray:
        return self.values - self.initial_value

    @property
    def max_rel_deviation(self) -> float:
        return self.max_abs_deviation / abs(self.initial_value)


def charge_density(phi_dot, phi_prime, t_dot, t_prime, tension: float) -> np.ndarray:
    """``tdot + (phi'^2 tdot - phidot phi' t') / T``, element-wise."""
    arrays = [np.asarray(x, dtype=float) for x in (phi_dot, phi_prime, t_dot, t_prime)]
    shape = arrays[0].shape
    if any(x.shape != shape for x in arrays):
        raise ValueError(f"shape mismatch: {[x.shape for x in arrays]}")
    if not tension > 0:
        raise ValueError("tension must be positive")
    pd, pp, td, tp = arrays
    return td + (pp * pp * td - pd * pp * tp) / tension


def charge_series(
    sol: FieldSolution, cfg: Optional[WaveConfig] = None, require_converged: bool = True
) -> ChargeSeries:
    cfg = cfg or sol.config
    if require_converged and not sol.report.converged:
        raise UnconvergedSolutionError("charge requested for an unconverged solution")
    ops = WaveOperators(cfg)
    t_dot, t_prime, phi_dot, phi_prime = sol.derivatives(ops)
    dens = charge_density(phi_dot, phi_prime, t_dot, t_prime, cfg.tension)
    hs = ops.pair_sigma.h
    ht = ops.pair_tau.h
    q = dens @ hs

    # the initial-rate constraint acts on the branch average, hence the 1/2
    first = 0.5 * (hs @ sol.multipliers["t_init_rate"]) / ht[0]
    last = (hs @ sol.multipliers["t_connect_rate"]) / ht[-1]
    q = q.copy()
    q[0] += first
    q[-1] += last
    return ChargeSeries(
        tau=cfg.grid_tau.points,
        values=q,
        endpoint_terms=(float(first), float(last)),
        initial_value=float(q[0]),
        max_abs_deviation=float(np.max(np.abs(q - q[0]))),
    )


@dataclass
class BalanceReport:
    series: np.ndarray
    correlation: Optional[float]
    degenerate: bool


def balance_series(phi_prime, t_dot, t_prime, h_sigma, tension: float) -> np.ndarray:
    """Per-slice ``sum_j h_j (tdot + phi'^2 (tdot + t') / T)`` for a right-mover."""
    pp = np.asarray(phi_prime, dtype=float)
    integrand = np.asarray(t_dot) + pp * pp * (np.asarray(t_dot) + np.asarray(t_prime)) / tension
    return integrand @ np.asarray(h_sigma, dtype=float)


def _correlation(x: np.ndarray, y: np.ndarray) -> Optional[float]:
    x = x.ravel() - x.mean()
    y = y.ravel() - y.mean()
    sx, sy = np.sqrt(x @ x), np.sqrt(y @ y)
    scale = max(1.0, np.max(np.abs(x)), np.max(np.abs(y)))
    if sx <= 1e-14 * scale * np.sqrt(x.size) or sy <= 1e-14 * scale * np.sqrt(y.size):
        return None
    return float((x @ y) / (sx * sy))


def refinement_balance(sol: FieldSolution, cfg: Optional[WaveConfig] = None) -> BalanceReport:
    """Balance series and the grid-wide correlation of ``phi'^2`` with ``tdot + t'``.

    The correlation is ``None`` (and ``degenerate`` set) when either quantity
    is constant over the grid, e.g. in vacuum.
    """
    cfg = cfg or sol.config
    ops = WaveOperators(cfg)
    t_dot, t_prime, _, phi_prime = sol.derivatives(ops)
    series = balance_series(phi_prime, t_dot, t_prime, ops.pair_sigma.h, cfg.tension)
    corr = _correlation(phi_prime**2, t_dot + t_prime)
    return BalanceReport(series=series, correlation=corr, degenerate=corr is None)
