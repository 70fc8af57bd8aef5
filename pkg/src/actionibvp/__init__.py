"""Action-level solvers for initial-boundary-value problems.

Discrete actions built from regularized summation-by-parts operators and
doubled (forward/backward) degrees of freedom are driven to a stationary
point by a Newton iteration; no equations of motion are derived.
"""

from .noether import ChargeSeries, charge_series, refinement_balance
from .particle import ParticleConfig, analytic_particle, convergence_study, solve_particle
from .sbp import Grid1D, SbpPair, build_sbp, regularize
from .solver import SolverError, SolverReport, StationarityProblem, solve_stationary
from .spectral import null_space, pi_mode, pi_mode_overlap, spectrum
from .wave import FieldSolution, WaveConfig, solve_wave

__version__ = "0.1.0"

__all__ = [
    "ChargeSeries",
    "FieldSolution",
    "Grid1D",
    "ParticleConfig",
    "SbpPair",
    "SolverError",
    "SolverReport",
    "StationarityProblem",
    "WaveConfig",
    "analytic_particle",
    "build_sbp",
    "charge_series",
    "convergence_study",
    "null_space",
    "pi_mode",
    "pi_mode_overlap",
    "refinement_balance",
    "regularize",
    "solve_particle",
    "solve_stationary",
    "solve_wave",
    "spectrum",
]
