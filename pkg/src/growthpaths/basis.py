"""Clamped B-spline bases on a time interval, their L2 Gram matrix, and
Gram-Schmidt orthonormalization in the Gram-weighted inner product."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.interpolate import BSpline

from .errors import DataError, DegeneracyError, DomainError

__all__ = [
    "BasisSystem",
    "build_basis",
    "basis_from_knots",
    "evaluate",
    "orthogonalize",
    "orthonormalize_against",
    "symmetric_sqrt",
]

DOMAIN_TOL = 1e-12


def symmetric_sqrt(mat: np.ndarray, floor: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(H, H^{-1})`` with ``H`` the symmetric square root of ``mat``.

    Eigenvalues are clamped at ``floor`` before the square root.
    """
    evals, evecs = np.linalg.eigh(mat)
    evals = np.maximum(evals, floor)
    root = np.sqrt(evals)
    half = (evecs * root) @ evecs.T
    half_inv = (evecs / root) @ evecs.T
    return half, half_inv


@dataclass(frozen=True, eq=False)
class BasisSystem:
    """A clamped B-spline basis with precomputed L2 Gram matrix.

    Attributes
    ----------
    degree : int
        Polynomial degree of each piece (order minus one).
    interior_knots : ndarray
        Strictly increasing knots inside ``domain``.
    domain : tuple of float
        Closed interval ``(t_min, t_max)``.
    gram : ndarray
        ``W[i, j] = integral of pi_i(t) pi_j(t) dt`` over the domain.
    gram_half : ndarray
        Symmetric square root of ``gram``.
    gram_half_inv : ndarray
        Inverse of ``gram_half``.
    integrals : ndarray
        ``integral of pi_j(t) dt`` for each basis function.
    """

    degree: int
    interior_knots: np.ndarray
    domain: tuple[float, float]
    gram: np.ndarray
    gram_half: np.ndarray
    gram_half_inv: np.ndarray
    integrals: np.ndarray

    @property
    def knots(self) -> np.ndarray:
        lo, hi = self.domain
        k = self.degree + 1
        return np.concatenate([np.full(k, lo), self.interior_knots, np.full(k, hi)])

    @property
    def dim(self) -> int:
        return len(self.interior_knots) + self.degree + 1

    def clamp(self, t) -> np.ndarray:
        """Clamp times lying within tolerance outside the domain; reject others."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        lo, hi = self.domain
        tol = DOMAIN_TOL * max(1.0, abs(lo), abs(hi))
        bad = (t < lo - tol) | (t > hi + tol) | ~np.isfinite(t)
        if np.any(bad):
            raise DomainError(
                f"time {t[bad][0]!r} outside basis domain [{lo}, {hi}]"
            )
        return np.clip(t, lo, hi)

    def design(self, t) -> np.ndarray:
        """Basis values at each time, shape ``(len(t), dim)``."""
        t = self.clamp(t)
        if t.size == 0:
            return np.zeros((0, self.dim))
        return BSpline.design_matrix(t, self.knots, self.degree).toarray()

    def functions(self, coef: np.ndarray, t) -> np.ndarray:
        """Evaluate ``pi(t)^T coef`` (``coef`` may be a matrix of columns)."""
        return self.design(t) @ np.asarray(coef, dtype=float)

    def norm(self, coef: np.ndarray) -> float:
        coef = np.asarray(coef, dtype=float)
        return math.sqrt(max(float(coef @ self.gram @ coef), 0.0))


def _gram_by_quadrature(knots: np.ndarray, degree: int, n_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    nodes, weights = np.polynomial.legendre.leggauss(n_nodes)
    breaks = np.unique(knots)
    lo, hi = breaks[:-1], breaks[1:]
    half = 0.5 * (hi - lo)
    pts = (0.5 * (hi + lo))[:, None] + half[:, None] * nodes[None, :]
    w = (half[:, None] * weights[None, :]).ravel()
    design = BSpline.design_matrix(pts.ravel(), knots, degree).toarray()
    gram = design.T @ (design * w[:, None])
    gram = 0.5 * (gram + gram.T)
    integrals = design.T @ w
    return gram, integrals


def gram_nodes(degree: int) -> int:
    """Gauss-Legendre nodes per knot span that integrate products of two
    degree-``degree`` pieces exactly."""
    return math.ceil((2 * degree + 1) / 2) + 1


def basis_from_knots(domain: Sequence[float], degree: int, interior_knots, quad_nodes: int | None = None) -> BasisSystem:
    """Build a clamped basis from explicit interior knots."""
    lo, hi = float(domain[0]), float(domain[1])
    if not (np.isfinite(lo) and np.isfinite(hi)) or hi <= lo:
        raise DataError(f"invalid domain [{lo}, {hi}]")
    if int(degree) != degree or degree < 0:
        raise DataError(f"degree must be a nonnegative integer, got {degree}")
    degree = int(degree)
    interior = np.asarray(interior_knots, dtype=float).ravel()
    if interior.size and (np.any(interior <= lo) or np.any(interior >= hi)):
        raise DegeneracyError("interior knots must lie strictly inside the domain")
    if np.any(np.diff(interior) <= 0):
        raise DegeneracyError("interior knots must be strictly increasing")
    knots = np.concatenate([np.full(degree + 1, lo), interior, np.full(degree + 1, hi)])
    n_nodes = gram_nodes(degree) if quad_nodes is None else int(quad_nodes)
    gram, integrals = _gram_by_quadrature(knots, degree, n_nodes)
    evals = np.linalg.eigvalsh(gram)
    if evals[0] <= 1e-14 * evals[-1]:
        raise DegeneracyError(
            f"Gram matrix is singular (smallest eigenvalue {evals[0]:.3g})"
        )
    half, half_inv = symmetric_sqrt(gram)
    if not np.allclose(half.T @ half, gram, rtol=0, atol=1e-8):
        raise DegeneracyError("Gram square root failed to reproduce the Gram matrix")
    for arr in (interior, gram, half, half_inv, integrals):
        arr.setflags(write=False)
    return BasisSystem(degree, interior, (lo, hi), gram, half, half_inv, integrals)


def build_basis(domain: Sequence[float], degree: int, num_interior: int, pooled_times, quad_nodes: int | None = None) -> BasisSystem:
    """Place interior knots at equally spaced empirical quantiles of the
    pooled observation times and build the basis.

    Knot ``j`` sits at the ``j / (num_interior + 1)`` quantile. Quantile
    ties that would merge knots raise :class:`DegeneracyError` rather than
    silently shrinking the basis.
    """
    if int(num_interior) != num_interior or num_interior < 0:
        raise DataError(f"num_interior must be a nonnegative integer, got {num_interior}")
    pooled = np.asarray(pooled_times, dtype=float).ravel()
    if pooled.size == 0:
        raise DataError("pooled_times is empty")
    lo, hi = float(domain[0]), float(domain[1])
    tol = DOMAIN_TOL * max(1.0, abs(lo), abs(hi))
    if np.any(pooled < lo - tol) or np.any(pooled > hi + tol):
        raise DomainError("pooled_times fall outside the domain")
    if num_interior > 0 and np.ptp(pooled) == 0:
        raise DegeneracyError(
            "all pooled times are equal; quantile knot placement is uninformative"
        )
    probs = np.arange(1, num_interior + 1) / (num_interior + 1)
    knots = np.quantile(pooled, probs)
    unique = np.unique(knots)
    if unique.size != knots.size:
        raise DegeneracyError(
            f"quantile knots collapse ({knots.size} requested, {unique.size} distinct); "
            "reduce num_interior"
        )
    return basis_from_knots((lo, hi), degree, knots, quad_nodes=quad_nodes)


def evaluate(basis: BasisSystem, t: float) -> np.ndarray:
    """All basis function values at a single time."""
    return basis.design(np.array([t], dtype=float))[0]


def orthonormalize_against(half: np.ndarray, half_inv: np.ndarray, candidate, previous) -> np.ndarray:
    """Modified Gram-Schmidt in the inner product ``<a, b> = a^T H^T H b``.

    Works on ``H @ candidate``; a second sweep restores orthogonality lost
    to rounding. Raises :class:`DegeneracyError` when the residual norm
    falls below ``1e-12`` relative to the candidate.
    """
    cand = np.asarray(candidate, dtype=float)
    v = half @ cand
    start = float(np.linalg.norm(v))
    if start == 0.0 or not np.isfinite(start):
        raise DegeneracyError("candidate has zero norm")
    basis_vecs = [half @ np.asarray(p, dtype=float) for p in previous]
    for _ in range(2):
        for u in basis_vecs:
            v = v - (u @ v) * u
    resid = float(np.linalg.norm(v))
    if resid < 1e-12 * start:
        raise DegeneracyError(
            "candidate lies in the span of the previous components; restart required"
        )
    return half_inv @ (v / resid)


def orthogonalize(basis: BasisSystem, candidate, previous=()) -> np.ndarray:
    """Orthonormalize a coefficient vector against previous unit vectors
    under the basis Gram matrix."""
    return orthonormalize_against(basis.gram_half, basis.gram_half_inv, candidate, previous)
