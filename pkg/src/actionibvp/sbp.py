"""Summation-by-parts (SBP) first-derivative operators.

An SBP pair consists of a diagonal quadrature ``H`` and a stencil ``Q`` with

    Q + Q^T = E_N - E_1 = diag(-1, 0, ..., 0, 1),

so that ``D = H^{-1} Q`` reproduces integration by parts exactly,

    (D u)^T H v = -u^T H (D v) + u_N v_N - u_0 v_0.

When such a derivative enters a quadratic action the defective zero mode of
``D`` is lifted with an affine penalty

    Dbar x = D x + H^{-1} E_b (x - target),

which is stored operationally (matrix plus constant offset).  The
``(n+1) x (n+1)`` extended matrix is only a derived representation used for
spectral diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import sparse

__all__ = [
    "Grid1D",
    "SbpPair",
    "AffineOperator",
    "TensorOperator",
    "normalize_order_tag",
    "build_sbp",
    "check_sbp_identity",
    "regularize",
    "apply_affine",
    "tensorize",
    "tensor_offset",
    "quadrature_weights_2d",
]

Axis = Literal["tau", "sigma"]

_ORDER_ALIASES = {
    "121": "[1,2,1]",
    "[1,2,1]": "[1,2,1]",
    "1,2,1": "[1,2,1]",
    "424": "[4,2,4]",
    "[4,2,4]": "[4,2,4]",
    "4,2,4": "[4,2,4]",
}

# Minimum grid size for which the boundary closures do not overlap.
_MIN_POINTS = {"[1,2,1]": 2, "[4,2,4]": 8}


@dataclass(frozen=True)
class Grid1D:
    """Uniform one-dimensional grid with ``n`` points starting at ``origin``."""

    n: int
    spacing: float
    origin: float = 0.0

    def __post_init__(self) -> None:
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"grid needs n >= 2 points, got {self.n}")
        if not self.spacing > 0:
            raise ValueError(f"grid spacing must be positive, got {self.spacing}")

    @classmethod
    def from_span(cls, n: int, start: float, stop: float) -> "Grid1D":
        if not stop > start:
            raise ValueError(f"empty span [{start}, {stop}]")
        return cls(n=n, spacing=(stop - start) / (n - 1), origin=start)

    @property
    def points(self) -> np.ndarray:
        return self.origin + self.spacing * np.arange(self.n)

    @property
    def length(self) -> float:
        return self.spacing * (self.n - 1)


@dataclass(frozen=True, eq=False)
class SbpPair:
    """Diagonal-norm SBP pair: quadrature weights ``h``, stencil ``q``, ``d = q / h``."""

    h: np.ndarray
    q: np.ndarray
    d: np.ndarray
    order_tag: str
    grid: Grid1D

    @property
    def n(self) -> int:
        return self.h.size

    @property
    def boundary_matrix(self) -> np.ndarray:
        b = np.zeros((self.n, self.n))
        b[0, 0] = -1.0
        b[-1, -1] = 1.0
        return b

    def sbp_defect(self) -> float:
        """Max-norm of ``Q + Q^T - (E_N - E_1)``."""
        return float(np.max(np.abs(self.q + self.q.T - self.boundary_matrix)))


def normalize_order_tag(order_tag: str) -> str:
    key = str(order_tag).replace(" ", "")
    try:
        return _ORDER_ALIASES[key]
    except KeyError:
        raise ValueError(
            f"unsupported SBP order {order_tag!r}; expected one of [1,2,1], [4,2,4]"
        ) from None


def _stencil_121(n: int) -> tuple[np.ndarray, np.ndarray]:
    h = np.ones(n)
    h[0] = h[-1] = 0.5
    q = np.zeros((n, n))
    i = np.arange(1, n - 1)
    q[i, i - 1] = -0.5
    q[i, i + 1] = 0.5
    q[0, 0] = -0.5
    q[0, 1] = 0.5
    q[-1, -2] = -0.5
    q[-1, -1] = 0.5
    return h, q


def _stencil_424(n: int) -> tuple[np.ndarray, np.ndarray]:
    # Diagonal-norm operator, 4th order interior / 2nd order closure
    # (Strand; Mattsson & Nordstrom), unit spacing.
    hb = np.array([17.0, 59.0, 43.0, 49.0]) / 48.0
    dbc = np.array(
        [
            [-24.0 / 17.0, 59.0 / 34.0, -4.0 / 17.0, -3.0 / 34.0, 0.0, 0.0],
            [-1.0 / 2.0, 0.0, 1.0 / 2.0, 0.0, 0.0, 0.0],
            [4.0 / 43.0, -59.0 / 86.0, 0.0, 59.0 / 86.0, -4.0 / 43.0, 0.0],
            [3.0 / 98.0, 0.0, -59.0 / 98.0, 0.0, 32.0 / 49.0, -4.0 / 49.0],
        ]
    )
    h = np.ones(n)
    h[:4] = hb
    h[-4:] = hb[::-1]

    d = np.zeros((n, n))
    interior = np.array([1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0])
    for i in range(4, n - 4):
        d[i, i - 2 : i + 3] = interior
    d[:4, :6] = dbc
    d[-4:, -6:] = -dbc[::-1, ::-1]
    q = h[:, None] * d
    # Symmetrize the rounding in the closure so the SBP identity is exact.
    q = 0.5 * (q - q.T)
    q[0, 0] = -0.5
    q[-1, -1] = 0.5
    return h, q


def build_sbp(order_tag: str, grid: Grid1D) -> SbpPair:
    """Construct the SBP pair ``order_tag`` on ``grid``.

    >>> p = build_sbp("[1,2,1]", Grid1D(4, 1.0))
    >>> p.h.tolist()
    [0.5, 1.0, 1.0, 0.5]
    """
    tag = normalize_order_tag(order_tag)
    if grid.n < _MIN_POINTS[tag]:
        raise ValueError(
            f"{tag} closure needs at least {_MIN_POINTS[tag]} points, got {grid.n}"
        )
    if tag == "[1,2,1]":
        h_unit, q = _stencil_121(grid.n)
    else:
        h_unit, q = _stencil_424(grid.n)
    h = grid.spacing * h_unit
    d = q / h[:, None]
    for a in (h, q, d):
        a.setflags(write=False)
    return SbpPair(h=h, q=q, d=d, order_tag=tag, grid=grid)


def check_sbp_identity(pair: SbpPair, u: np.ndarray, v: np.ndarray) -> float:
    """Residual of discrete integration by parts for the vectors ``u``, ``v``."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != (pair.n,) or v.shape != (pair.n,):
        raise ValueError(
            f"expected vectors of length {pair.n}, got {u.shape} and {v.shape}"
        )
    lhs = (pair.d @ u) @ (pair.h * v) + u @ (pair.h * (pair.d @ v))
    return float(abs(lhs - (u[-1] * v[-1] - u[0] * v[0])))


@dataclass(frozen=True, eq=False)
class AffineOperator:
    """Regularized derivative ``x -> homogeneous @ x + offset``.

    ``extended`` is the physical ``(n+1) x (n+1)`` representation acting on
    ``(x, 1)``; its corner entry is ``1/spacing`` so that
    ``spacing * extended`` is the dimensionless matrix with corner 1.
    """

    homogeneous: np.ndarray
    offset: np.ndarray
    target: float
    boundary_index: int
    spacing: float

    @property
    def n(self) -> int:
        return self.offset.size

    @property
    def extended(self) -> np.ndarray:
        n = self.n
        ext = np.zeros((n + 1, n + 1))
        ext[:n, :n] = self.homogeneous
        ext[:n, n] = self.offset
        ext[n, n] = 1.0 / self.spacing
        return ext

    def dimensionless_extended(self) -> np.ndarray:
        return self.spacing * self.extended

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return apply_affine(self, x)


def regularize(pair: SbpPair, boundary_index: int, target: float) -> AffineOperator:
    """Penalize ``D`` at ``boundary_index`` towards the boundary datum ``target``."""
    n = pair.n
    if boundary_index not in (0, n - 1, -1):
        raise ValueError(f"boundary index must be 0 or {n - 1}, got {boundary_index}")
    b = boundary_index % n
    hom = pair.d.copy()
    hom[b, b] += 1.0 / pair.h[b]
    offset = np.zeros(n)
    offset[b] = -float(target) / pair.h[b]
    hom.setflags(write=False)
    offset.setflags(write=False)
    return AffineOperator(
        homogeneous=hom,
        offset=offset,
        target=float(target),
        boundary_index=b,
        spacing=pair.grid.spacing,
    )


def apply_affine(opr: AffineOperator, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (opr.n,):
        raise ValueError(f"expected vector of length {opr.n}, got shape {x.shape}")
    return opr.homogeneous @ x + opr.offset


@dataclass(frozen=True, eq=False)
class TensorOperator:
    """Kronecker product ``op_tau (x) op_sigma`` on tau-major flattened fields."""

    op_tau: np.ndarray
    op_sigma: np.ndarray
    layout: str = "tau-major"

    @property
    def shape2d(self) -> tuple[int, int]:
        return self.op_tau.shape[1], self.op_sigma.shape[1]

    def apply(self, field: np.ndarray) -> np.ndarray:
        """Apply to a flat or ``(n_tau, n_sigma)`` field, returning the same shape."""
        f = np.asarray(field, dtype=float)
        flat = f.ndim == 1
        f2 = f.reshape(self.shape2d)
        out = self.op_tau @ f2 @ self.op_sigma.T
        return out.ravel() if flat else out

    def matrix(self) -> np.ndarray:
        return np.kron(self.op_tau, self.op_sigma)

    def sparse(self) -> sparse.csr_matrix:
        return sparse.kron(
            sparse.csr_matrix(self.op_tau), sparse.csr_matrix(self.op_sigma), format="csr"
        )


def tensorize(
    op_1d: np.ndarray, axis: Axis, grid_tau: Grid1D, grid_sigma: Grid1D
) -> TensorOperator:
    if axis not in ("tau", "sigma"):
        raise ValueError(f"axis must be 'tau' or 'sigma', got {axis!r}")
    op_1d = np.asarray(op_1d, dtype=float)
    n = grid_tau.n if axis == "tau" else grid_sigma.n
    if op_1d.shape != (n, n):
        raise ValueError(f"operator of shape {op_1d.shape} does not match {axis} grid n={n}")
    if axis == "tau":
        return TensorOperator(op_tau=op_1d, op_sigma=np.eye(grid_sigma.n))
    return TensorOperator(op_tau=np.eye(grid_tau.n), op_sigma=op_1d)


def tensor_offset(
    pair: SbpPair, axis: Axis, boundary_index: int, targets: np.ndarray, n_other: int
) -> np.ndarray:
    """Offset field of an affine operator penalized along ``axis``.

    ``targets`` holds one boundary datum per grid line of the other axis.
    The result has shape ``(n_tau, n_sigma)``.
    """
    targets = np.broadcast_to(np.asarray(targets, dtype=float), (n_other,))
    line = np.zeros(pair.n)
    b = boundary_index % pair.n
    line[b] = -1.0 / pair.h[b]
    off = np.outer(line, targets)
    return off if axis == "tau" else off.T


def quadrature_weights_2d(pair_tau: SbpPair, pair_sigma: SbpPair) -> np.ndarray:
    return np.outer(pair_tau.h, pair_sigma.h)
