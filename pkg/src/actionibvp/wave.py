"""(1+1)D scalar wave with a dynamical temporal coordinate map.

Unknowns per branch are the field ``phi(tau, sigma)`` and the temporal map
``t(tau, sigma)``; the spatial map is frozen to ``x = sigma``.  The solved
form is the squared action density

    f = 1/2 { tdot^2 + (phidot^2 (t'^2 - 1) - 2 phidot phi' tdot t' + phi'^2 tdot^2) / T },

summed with the 2D quadrature weights, doubled as ``E[1] - E[2]`` and
supplemented by multiplier terms for initial data, connecting conditions and
spatial Dirichlet data.  Fields are flattened tau-major (index ``k * n_sigma + j``).

Derivatives:

* ``tdot   = Dbar_tau t``   penalized at tau-index 0 towards t = 0
* ``t'     = D_sigma t``    not regularized (keeps time translations exact)
* ``phidot = Dbar_tau phi`` penalized at tau-index 0 towards the initial bump
* ``phi'   = Dbar_sigma phi`` penalized at sigma-index 0 towards 0

The field's initial and connecting conditions act on interior sigma columns;
the two boundary columns are fully fixed by the Dirichlet multipliers, which
keeps the constraint set linearly independent.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
from scipy import sparse

from .sbp import Grid1D, SbpPair, build_sbp, normalize_order_tag, regularize, tensor_offset
from .solver import SolverError, SolverReport, StationarityProblem, solve_stationary

__all__ = [
    "WaveConfig",
    "WaveOperators",
    "FieldSolution",
    "InducedMetricFields",
    "CausalityError",
    "MULTIPLIER_GROUPS",
    "build_initial_data",
    "density_terms",
    "assemble_wave_action",
    "assemble_induced_metric",
    "nambu_goto_action",
    "leapfrog_guess",
    "solve_wave",
    "resolution_map",
]

MULTIPLIER_GROUPS = (
    "t_init",
    "t_init_rate",
    "t_connect",
    "t_connect_rate",
    "phi_init",
    "phi_init_rate",
    "phi_connect",
    "phi_connect_rate",
    "dirichlet",
)


class CausalityError(SolverError):
    """The converged temporal map is not strictly increasing along tau."""

    def __init__(self, message, report=None, solution=None):
        super().__init__(message, report)
        self.solution = solution


@dataclass(frozen=True)
class WaveConfig:
    n_tau: int = 30
    n_sigma: int = 24
    tau_span: tuple[float, float] = (0.0, 1.0)
    sigma_span: tuple[float, float] = (0.0, 1.0)
    tension: float = 1.0e4
    bump_amplitude: float = 1.0
    bump_width: float = 0.08
    bump_center: float = 0.5
    dt0: float = 1.2
    c: float = 1.0
    order_tag: str = "[1,2,1]"
    grad_tolerance: float = 1e-12
    max_iterations: int = 50
    jacobian_mode: str = "analytic"

    def __post_init__(self) -> None:
        object.__setattr__(self, "tau_span", tuple(float(v) for v in self.tau_span))
        object.__setattr__(self, "sigma_span", tuple(float(v) for v in self.sigma_span))
        object.__setattr__(self, "order_tag", normalize_order_tag(self.order_tag))
        if self.n_tau < 3 or self.n_sigma < 3:
            raise ValueError("n_tau and n_sigma must be >= 3")
        for name in ("tau_span", "sigma_span"):
            lo, hi = getattr(self, name)
            if not hi > lo:
                raise ValueError(f"{name} must be increasing, got {(lo, hi)}")
        if not self.tension > 0:
            raise ValueError("tension must be positive")
        if not self.bump_width > 0:
            raise ValueError("bump_width must be positive")
        if not self.dt0 > 0:
            raise ValueError("dt0 must be positive")
        lo, hi = self.sigma_span
        if not lo < self.bump_center < hi:
            raise ValueError("bump_center must lie strictly inside sigma_span")
        if self.jacobian_mode not in ("fd", "analytic"):
            raise ValueError(f"unknown jacobian mode {self.jacobian_mode!r}")

    @property
    def grid_tau(self) -> Grid1D:
        return Grid1D.from_span(self.n_tau, *self.tau_span)

    @property
    def grid_sigma(self) -> Grid1D:
        return Grid1D.from_span(self.n_sigma, *self.sigma_span)

    @property
    def shape(self) -> tuple[int, int]:
        return self.n_tau, self.n_sigma

    def replace(self, **changes) -> "WaveConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["tau_span"] = list(self.tau_span)
        d["sigma_span"] = list(self.sigma_span)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "WaveConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown wave config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "WaveConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def build_initial_data(cfg: WaveConfig):
    """Gaussian bump at rest, ``t = 0`` and uniform rate ``dt0`` on the initial slice."""
    sigma = cfg.grid_sigma.points
    phi0 = cfg.bump_amplitude * np.exp(-(((sigma - cfg.bump_center) / cfg.bump_width) ** 2))
    edge = max(abs(phi0[0]), abs(phi0[-1]))
    if edge >= 1e-8:
        raise ValueError(
            f"initial bump is not small at the Dirichlet boundaries (|phi| = {edge:.2e})"
        )
    n = cfg.n_sigma
    return phi0, np.zeros(n), np.zeros(n), np.full(n, cfg.dt0)


class WaveOperators:
    """Sparse 2D derivative operators and quadrature for one configuration."""

    def __init__(self, cfg: WaveConfig):
        self.cfg = cfg
        nt, ns = cfg.shape
        self.n_points = nt * ns
        self.pair_tau: SbpPair = build_sbp(cfg.order_tag, cfg.grid_tau)
        self.pair_sigma: SbpPair = build_sbp(cfg.order_tag, cfg.grid_sigma)
        self.phi0, self.dphi0, self.t0, self.rate0 = build_initial_data(cfg)

        tau_reg = regularize(self.pair_tau, 0, 0.0)
        sig_reg = regularize(self.pair_sigma, 0, 0.0)
        eye_t = sparse.identity(nt, format="csr")
        eye_s = sparse.identity(ns, format="csr")
        csr = sparse.csr_matrix
        # tdot and phidot share the homogeneous part; only the offsets differ
        self.tau_bar = sparse.kron(csr(tau_reg.homogeneous), eye_s, format="csr")
        self.sigma_plain = sparse.kron(eye_t, csr(self.pair_sigma.d), format="csr")
        self.sigma_bar = sparse.kron(eye_t, csr(sig_reg.homogeneous), format="csr")
        self.t_offset = tensor_offset(self.pair_tau, "tau", 0, self.t0, ns).ravel()
        self.phi_offset = tensor_offset(self.pair_tau, "tau", 0, self.phi0, ns).ravel()
        self.phi_sigma_offset = tensor_offset(self.pair_sigma, "sigma", 0, 0.0, nt).ravel()
        self.weights = np.outer(self.pair_tau.h, self.pair_sigma.h).ravel()

    def derivatives(self, phi: np.ndarray, t: np.ndarray):
        """``(tdot, t', phidot, phi')`` as flat arrays."""
        a = self.tau_bar @ t + self.t_offset
        b = self.sigma_plain @ t
        p = self.tau_bar @ phi + self.phi_offset
        q = self.sigma_bar @ phi + self.phi_sigma_offset
        return a, b, p, q

    @cached_property
    def interior(self) -> np.ndarray:
        return np.arange(1, self.cfg.n_sigma - 1)

    @cached_property
    def constraints(self):
        """Weighted linear constraints ``C @ [phi1, t1, phi2, t2] + c0``.

        Returns ``(C, c0, slices)`` with one slice of multiplier indices per
        entry of :data:`MULTIPLIER_GROUPS`.
        """
        cfg = self.cfg
        nt, ns = cfg.shape
        n = self.n_points
        hs = self.pair_sigma.h
        ht = self.pair_tau.h
        csr = sparse.csr_matrix

        def rows(k, cols):
            idx = k * ns + np.asarray(cols)
            return csr((np.ones(idx.size), (np.arange(idx.size), idx)), shape=(idx.size, n))

        all_cols = np.arange(ns)
        inner = self.interior
        blocks, consts, sizes = [], [], []

        def add(phi1, t1, phi2, t2, const):
            size = const.size
            blocks.append(
                sparse.hstack(
                    [m if m is not None else csr((size, n)) for m in (phi1, t1, phi2, t2)]
                )
            )
            consts.append(const)
            sizes.append(size)

        w_all = sparse.diags(hs)
        w_in = sparse.diags(hs[inner])
        s0, sn = rows(0, all_cols), rows(nt - 1, all_cols)
        s0i, sni = rows(0, inner), rows(nt - 1, inner)
        d0 = s0 @ self.tau_bar
        dn = sn @ self.tau_bar
        d0i = s0i @ self.tau_bar
        dni = sni @ self.tau_bar
        off_t0 = self.t_offset.reshape(nt, ns)[0]
        off_p0 = self.phi_offset.reshape(nt, ns)[0, inner]

        add(None, 0.5 * w_all @ s0, None, 0.5 * w_all @ s0, -hs * self.t0)
        add(None, 0.5 * w_all @ d0, None, 0.5 * w_all @ d0, hs * (off_t0 - self.rate0))
        add(None, w_all @ sn, None, -(w_all @ sn), np.zeros(ns))
        add(None, w_all @ dn, None, -(w_all @ dn), np.zeros(ns))
        add(0.5 * w_in @ s0i, None, 0.5 * w_in @ s0i, None, -hs[inner] * self.phi0[inner])
        add(
            0.5 * w_in @ d0i,
            None,
            0.5 * w_in @ d0i,
            None,
            hs[inner] * (off_p0 - self.dphi0[inner]),
        )
        add(w_in @ sni, None, -(w_in @ sni), None, np.zeros(inner.size))
        add(w_in @ dni, None, -(w_in @ dni), None, np.zeros(inner.size))

        # Dirichlet: branch 1 left/right, then branch 2 left/right; tau-weighted
        kk = np.arange(nt)
        sides = []
        for col in (0, ns - 1):
            idx = kk * ns + col
            sides.append(sparse.diags(ht) @ csr((np.ones(nt), (kk, idx)), shape=(nt, n)))
        left, right = sides
        dir_one = sparse.vstack([left, right])
        pad = csr((2 * nt, n))
        add(
            sparse.vstack([dir_one, pad]),
            None,
            sparse.vstack([pad, dir_one]),
            None,
            np.zeros(4 * nt),
        )

        c = sparse.vstack(blocks, format="csr")
        c0 = np.concatenate(consts)
        bounds = np.concatenate([[0], np.cumsum(sizes)])
        slices = {
            name: slice(int(bounds[i]), int(bounds[i + 1]))
            for i, name in enumerate(MULTIPLIER_GROUPS)
        }
        return c, c0, slices

    @property
    def n_multipliers(self) -> int:
        return self.constraints[0].shape[0]

    @property
    def dimension(self) -> int:
        return 4 * self.n_points + self.n_multipliers


def density_terms(a, b, p, q, tension: float, order: int = 1):
    """Squared action density ``f`` and its partial derivatives.

    ``order=0`` returns ``f``; ``order=1`` adds the first derivatives
    ``(f_a, f_b, f_p, f_q)``; ``order=2`` adds the dict of second derivatives.
    """
    inv = 1.0 / tension
    f = 0.5 * (a * a + inv * (p * p * (b * b - 1.0) - 2.0 * p * q * a * b + q * q * a * a))
    if order == 0:
        return f
    first = (
        a + inv * (q * q * a - p * q * b),
        inv * (p * p * b - p * q * a),
        inv * (p * (b * b - 1.0) - q * a * b),
        inv * (q * a * a - p * a * b),
    )
    if order == 1:
        return f, first
    second = {
        "aa": 1.0 + inv * q * q,
        "ab": -inv * p * q,
        "ap": -inv * q * b,
        "aq": inv * (2.0 * q * a - p * b),
        "bb": inv * p * p,
        "bp": inv * (2.0 * p * b - q * a),
        "bq": -inv * p * a,
        "pp": inv * (b * b - 1.0),
        "pq": -inv * a * b,
        "qq": inv * a * a,
    }
    return f, first, second


def _branch_hessian(ops: WaveOperators, phi, t, tension):
    """Hessian of one branch action with respect to ``[phi, t]``."""
    a, b, p, q = ops.derivatives(phi, t)
    _, _, s = density_terms(a, b, p, q, tension, order=2)
    w = ops.weights
    mats = {"a": ops.tau_bar, "b": ops.sigma_plain, "p": ops.tau_bar, "q": ops.sigma_bar}

    def block(u, v):
        key = u + v if u + v in s else v + u
        return mats[u].T @ sparse.diags(w * s[key]) @ mats[v]

    h_pp = block("p", "p") + block("p", "q") + block("q", "p") + block("q", "q")
    h_tt = block("a", "a") + block("a", "b") + block("b", "a") + block("b", "b")
    h_tp = block("a", "p") + block("a", "q") + block("b", "p") + block("b", "q")
    return sparse.bmat([[h_pp, h_tp.T], [h_tp, h_tt]], format="csr")


def assemble_wave_action(cfg: WaveConfig, ops: Optional[WaveOperators] = None) -> StationarityProblem:
    ops = ops or WaveOperators(cfg)
    n = ops.n_points
    w = ops.weights
    tension = cfg.tension
    c, c0, _ = ops.constraints
    ct = c.T.tocsr()

    def split(z):
        return z[:n], z[n : 2 * n], z[2 * n : 3 * n], z[3 * n : 4 * n], z[4 * n :]

    def branch_action(phi, t):
        a, b, p, q = ops.derivatives(phi, t)
        return float(w @ density_terms(a, b, p, q, tension, order=0))

    def branch_gradient(phi, t):
        a, b, p, q = ops.derivatives(phi, t)
        _, (fa, fb, fp, fq) = density_terms(a, b, p, q, tension, order=1)
        g_phi = ops.tau_bar.T @ (w * fp) + ops.sigma_bar.T @ (w * fq)
        g_t = ops.tau_bar.T @ (w * fa) + ops.sigma_plain.T @ (w * fb)
        return g_phi, g_t

    def objective(z):
        phi1, t1, phi2, t2, lam = split(z)
        primal = z[: 4 * n]
        return branch_action(phi1, t1) - branch_action(phi2, t2) + float(lam @ (c @ primal + c0))

    def gradient(z):
        phi1, t1, phi2, t2, lam = split(z)
        primal = z[: 4 * n]
        gp1, gt1 = branch_gradient(phi1, t1)
        gp2, gt2 = branch_gradient(phi2, t2)
        g_primal = np.concatenate([gp1, gt1, -gp2, -gt2]) + ct @ lam
        return np.concatenate([g_primal, c @ primal + c0])

    def jacobian(z):
        phi1, t1, phi2, t2, _ = split(z)
        h1 = _branch_hessian(ops, phi1, t1, tension)
        h2 = _branch_hessian(ops, phi2, t2, tension)
        return sparse.bmat(
            [
                [sparse.block_diag([h1, -h2]), ct],
                [c, None],
            ],
            format="csc",
        )

    z0 = initial_guess(cfg, ops)
    return StationarityProblem(
        dimension=ops.dimension,
        objective=objective,
        gradient=gradient,
        initial_guess=z0,
        grad_tolerance=cfg.grad_tolerance,
        max_iterations=cfg.max_iterations,
        jacobian=jacobian,
        jacobian_mode=cfg.jacobian_mode,
    )


def leapfrog_guess(cfg: WaveConfig) -> np.ndarray:
    """Fixed-map leapfrog evolution of the bump, shape ``(n_tau, n_sigma)``.

    Standard three-point Laplacian with homogeneous Dirichlet data; the
    physical step ``dt0 * dtau`` is subdivided to keep the CFL number <= 0.5.
    """
    phi0, dphi0, _, _ = build_initial_data(cfg)
    ds = cfg.grid_sigma.spacing
    dt_phys = cfg.dt0 * cfg.grid_tau.spacing
    sub = max(1, int(np.ceil(dt_phys / (0.5 * ds))))
    dt = dt_phys / sub
    r2 = (dt / ds) ** 2

    def lap(u):
        out = np.zeros_like(u)
        out[1:-1] = u[2:] - 2.0 * u[1:-1] + u[:-2]
        return out

    prev = phi0.copy()
    prev[[0, -1]] = 0.0
    cur = prev + dt * dphi0 + 0.5 * r2 * lap(prev)
    cur[[0, -1]] = 0.0
    out = np.empty(cfg.shape)
    out[0] = prev
    step = 1
    for k in range(1, cfg.n_tau):
        while step < k * sub:
            prev, cur = cur, 2.0 * cur - prev + r2 * lap(cur)
            cur[[0, -1]] = 0.0
            step += 1
        out[k] = cur
    return out


def initial_guess(cfg: WaveConfig, ops: WaveOperators) -> np.ndarray:
    phi = leapfrog_guess(cfg).ravel()
    tau = cfg.grid_tau.points - cfg.tau_span[0]
    t = np.repeat(cfg.dt0 * tau, cfg.n_sigma)
    return np.concatenate([phi, t, phi, t, np.zeros(ops.n_multipliers)])


@dataclass
class FieldSolution:
    phi1: np.ndarray
    phi2: np.ndarray
    tmap1: np.ndarray
    tmap2: np.ndarray
    multipliers: dict[str, np.ndarray]
    report: SolverReport
    config: WaveConfig
    extras: dict = field(default_factory=dict)

    def grid(self, name: str) -> np.ndarray:
        return getattr(self, name).reshape(self.config.shape)

    def branch_mismatch(self) -> dict[str, float]:
        return {
            "phi": float(
                np.max(np.abs(self.phi1 - self.phi2)) / (1.0 + np.max(np.abs(self.phi1)))
            ),
            "tmap": float(
                np.max(np.abs(self.tmap1 - self.tmap2)) / (1.0 + np.max(np.abs(self.tmap1)))
            ),
        }

    def derivatives(self, ops: Optional[WaveOperators] = None):
        """Branch-1 ``(tdot, t', phidot, phi')`` on the grid."""
        ops = ops or WaveOperators(self.config)
        return tuple(x.reshape(self.config.shape) for x in ops.derivatives(self.phi1, self.tmap1))

    def min_rate(self) -> float:
        return float(np.min(self.derivatives()[0]))

    def to_vector(self) -> np.ndarray:
        lam = np.concatenate([self.multipliers[name] for name in MULTIPLIER_GROUPS])
        return np.concatenate([self.phi1, self.tmap1, self.phi2, self.tmap2, lam])

    @classmethod
    def from_vector(cls, z, cfg: WaveConfig, report: SolverReport, ops=None) -> "FieldSolution":
        ops = ops or WaveOperators(cfg)
        n = ops.n_points
        _, _, slices = ops.constraints
        lam = z[4 * n :]
        return cls(
            phi1=z[:n].copy(),
            tmap1=z[n : 2 * n].copy(),
            phi2=z[2 * n : 3 * n].copy(),
            tmap2=z[3 * n : 4 * n].copy(),
            multipliers={name: lam[s].copy() for name, s in slices.items()},
            report=report,
            config=cfg,
        )


def solve_wave(cfg: WaveConfig) -> FieldSolution:
    ops = WaveOperators(cfg)
    problem = assemble_wave_action(cfg, ops)
    z, report = solve_stationary(problem)
    sol = FieldSolution.from_vector(z, cfg, report, ops)
    rate = sol.derivatives(ops)[0]
    if not np.all(rate > 0):
        k, j = np.unravel_index(np.argmin(rate), rate.shape)
        raise CausalityError(
            f"temporal map not increasing: dt/dtau = {rate[k, j]:.3e} at (k={k}, j={j})",
            report,
            solution=sol,
        )
    return sol


@dataclass
class InducedMetricFields:
    g00: np.ndarray
    g01: np.ndarray
    g11: np.ndarray

    @property
    def det_g(self) -> np.ndarray:
        return self.g00 * self.g11 - self.g01 * self.g01

    @property
    def adj_g(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Entries ``(adj_00, adj_01, adj_11)`` of the 2x2 adjugate."""
        return self.g11, -self.g01, self.g00


def assemble_induced_metric(tmap, cfg: WaveConfig, ops: Optional[WaveOperators] = None):
    """Induced metric of the map ``(t(tau, sigma), x = sigma)`` in ``diag(c^2, -1)``."""
    tmap = np.asarray(tmap, dtype=float)
    if tmap.size != cfg.n_tau * cfg.n_sigma or tmap.ndim not in (1, 2):
        raise ValueError(f"tmap of shape {tmap.shape} does not match grid {cfg.shape}")
    if tmap.ndim == 2 and tmap.shape != cfg.shape:
        raise ValueError(f"tmap of shape {tmap.shape} does not match grid {cfg.shape}")
    ops = ops or WaveOperators(cfg)
    flat = tmap.ravel()
    a = (ops.tau_bar @ flat + ops.t_offset).reshape(cfg.shape)
    b = (ops.sigma_plain @ flat).reshape(cfg.shape)
    c2 = cfg.c**2
    return InducedMetricFields(g00=c2 * a * a, g01=c2 * a * b, g11=c2 * b * b - 1.0)


def nambu_goto_action(phi, tmap, cfg: WaveConfig, ops: Optional[WaveOperators] = None) -> float:
    """Unsquared single-branch action ``-T sum_h sqrt(-det g + dphi adj dphi / T)``.

    Evaluation only; the solver works with the squared density.
    """
    ops = ops or WaveOperators(cfg)
    metric = assemble_induced_metric(tmap, cfg, ops)
    phi = np.asarray(phi, dtype=float).ravel()
    p = (ops.tau_bar @ phi + ops.phi_offset).reshape(cfg.shape)
    q = (ops.sigma_bar @ phi + ops.phi_sigma_offset).reshape(cfg.shape)
    a00, a01, a11 = metric.adj_g
    inner = -metric.det_g + (p * p * a00 + 2.0 * p * q * a01 + q * q * a11) / cfg.tension
    w = ops.weights.reshape(cfg.shape)
    return float(-cfg.tension * np.sum(w * np.sqrt(inner)))


def resolution_map(sol: FieldSolution) -> np.ndarray:
    """``Dbar_tau t`` of branch 1; large values mean a coarser time resolution."""
    return sol.derivatives()[0]
