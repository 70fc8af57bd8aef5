"""Null-space and spectrum diagnostics for (regularized) SBP operators."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SpectrumError",
    "NullSpaceReport",
    "SpectrumReport",
    "null_space",
    "spectrum",
    "pi_mode",
    "pi_mode_overlap",
    "projection_onto_span",
]


class SpectrumError(RuntimeError):
    """Raised when the dense eigensolver fails to converge."""


@dataclass
class NullSpaceReport:
    dim_right: int
    dim_left: int
    right_basis: list[np.ndarray]
    left_basis: list[np.ndarray]
    tolerance: float
    singular_values: np.ndarray
    # dimension of ker(M^k) once it stops growing, i.e. the algebraic
    # multiplicity of the zero eigenvalue
    generalized_dim: int = 0


@dataclass
class SpectrumReport:
    eigenvalues: np.ndarray
    min_abs: float
    min_real_part: float
    has_unit_eigenvalue: bool
    unit_count: int = 0
    unit_tolerance: float = 1e-10
    notes: list[str] = field(default_factory=list)


def _square(matrix) -> np.ndarray:
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    return m


def _rank_deficiency(m: np.ndarray, tolerance: float) -> int:
    s = np.linalg.svd(m, compute_uv=False)
    if s[0] == 0.0:
        return m.shape[0]
    return int(np.sum(s < tolerance * s[0]))


def _zero_multiplicity(m: np.ndarray, tolerance: float) -> int:
    """Algebraic multiplicity of the eigenvalue 0.

    Uses ``ker(M^{k+1}) = ker((I - P_k) M)`` with ``P_k`` the orthogonal
    projector onto ``ker(M^k)``; unlike SVDs of matrix powers this keeps the
    conditioning of ``M`` itself.
    """
    n = m.shape[0]
    smax = np.linalg.norm(m, 2)
    if smax == 0.0:
        return n
    basis = np.zeros((n, 0))
    while basis.shape[1] < n:
        proj = m - basis @ (basis.T @ m)
        _, s, vt = np.linalg.svd(proj)
        nxt = vt[s < tolerance * smax]
        if nxt.shape[0] == basis.shape[1]:
            break
        basis = nxt.T
    return basis.shape[1]


def null_space(matrix, tolerance: float = 1e-10, weights=None) -> NullSpaceReport:
    """Right and left null spaces of ``matrix`` from its SVD.

    Singular values below ``tolerance * sigma_max`` count as zero.  When
    ``weights`` (diagonal quadrature) are given, the left null space is taken
    with respect to the weighted pairing ``z^T diag(weights) M = 0``, which is
    the pairing that appears in quadratic actions ``(M x)^T H (M x)``.
    """
    m = _square(matrix)
    if not tolerance > 0:
        raise ValueError("tolerance must be positive")
    u, s, vt = np.linalg.svd(m)
    smax = s[0] if s.size else 0.0
    zero = s < tolerance * smax if smax > 0 else np.ones_like(s, dtype=bool)
    right = [vt[i] / np.linalg.norm(vt[i]) for i in np.flatnonzero(zero)]
    left = []
    for i in np.flatnonzero(zero):
        y = u[:, i]
        if weights is not None:
            y = y / np.asarray(weights, dtype=float)
        left.append(y / np.linalg.norm(y))

    return NullSpaceReport(
        dim_right=len(right),
        dim_left=len(left),
        right_basis=right,
        left_basis=left,
        tolerance=tolerance,
        singular_values=s,
        generalized_dim=_zero_multiplicity(m, tolerance) if zero.any() else 0,
    )


def spectrum(matrix, unit_tolerance: float = 1e-10, zero_tolerance: float = 1e-10) -> SpectrumReport:
    """Eigenvalues sorted by real then imaginary part.

    A defective zero eigenvalue of multiplicity ``g`` is only resolved to about
    ``eps**(1/g)`` by a dense eigensolver.  The multiplicity is therefore taken
    from SVD ranks of matrix powers and the ``g`` eigenvalues nearest the
    origin are reported as exact zeros, provided they lie within that
    perturbation radius.
    """
    m = _square(matrix)
    try:
        ev = np.linalg.eigvals(m)
    except np.linalg.LinAlgError as exc:
        raise SpectrumError(f"eigenvalue computation did not converge: {exc}") from exc
    notes = []
    norm = np.linalg.norm(m, 2) if m.size else 0.0
    if norm > 0:
        nullity = _rank_deficiency(m, zero_tolerance)
        g = _zero_multiplicity(m, zero_tolerance) if nullity else 0
        if g:
            nearest = np.argsort(np.abs(ev))[:g]
            radius = norm * max(zero_tolerance, np.finfo(float).eps ** (1.0 / g)) * 10.0
            if np.all(np.abs(ev[nearest]) <= radius):
                ev = ev.copy()
                ev[nearest] = 0.0
                notes.append(f"zero eigenvalue of algebraic multiplicity {g} (geometric {nullity})")
            else:
                notes.append("rank-deficient but eigenvalues not clustered at 0; left as computed")
    ev = ev[np.lexsort((ev.imag, ev.real))]
    unit = np.abs(ev - 1.0) <= unit_tolerance
    return SpectrumReport(
        eigenvalues=ev,
        min_abs=float(np.min(np.abs(ev))),
        min_real_part=float(np.min(ev.real)),
        has_unit_eigenvalue=bool(unit.any()),
        unit_count=int(unit.sum()),
        unit_tolerance=unit_tolerance,
        notes=notes,
    )


def pi_mode(n: int) -> np.ndarray:
    """The maximally oscillating grid function ``(-1)**j``."""
    return (-1.0) ** np.arange(n)


def pi_mode_overlap(v) -> float:
    v = np.asarray(v, dtype=float)
    nv = np.linalg.norm(v)
    if nv == 0.0:
        raise ValueError("overlap of the zero vector is undefined")
    p = pi_mode(v.size)
    return float(abs(v @ p) / (nv * np.linalg.norm(p)))


def projection_onto_span(v, basis) -> float:
    """Norm of the orthogonal projection of the normalized ``v`` onto ``span(basis)``."""
    v = np.asarray(v, dtype=float)
    v = v / np.linalg.norm(v)
    if len(basis) == 0:
        return 0.0
    q, _ = np.linalg.qr(np.column_stack(basis))
    return float(np.linalg.norm(q.T @ v))
