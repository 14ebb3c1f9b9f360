"""Scaled monomial bases on cells and faces, and L2 projectors."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .quadrature import cell_quadrature, face_quadrature


def dim_cell(degree: int) -> int:
    return (degree + 1) * (degree + 2) // 2


def dim_face(degree: int) -> int:
    return degree + 1


@lru_cache(maxsize=None)
def exponents(degree: int) -> np.ndarray:
    """Multi-indices (a, b) with a + b <= degree, ordered by total degree.

    The ordering is hierarchical: the first ``dim_cell(l)`` entries span
    P^l for every l <= degree.
    """
    e = [(d - j, j) for d in range(degree + 1) for j in range(d + 1)]
    arr = np.array(e, dtype=int)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class CellBasis:
    """Monomials ((x - x_T)/h_T)^a ((y - y_T)/h_T)^b, optionally orthonormalized.

    When ``orthonormal`` is set the monomials are replaced by their
    Cholesky-based Gram-Schmidt transform in the L2(T) inner product, which
    keeps the hierarchical ordering.
    """

    center: np.ndarray
    scale: float
    degree: int
    transform: np.ndarray | None = None  # coefficients of the basis in monomials

    @property
    def dim(self) -> int:
        return dim_cell(self.degree)

    def _monomials(self, x: np.ndarray, grad: bool):
        e = exponents(self.degree)
        z = (np.asarray(x, dtype=float) - self.center) / self.scale
        p = self.degree
        # powers[i, j, :] = z_j ** i
        powers = np.ones((p + 1, 2, len(z)))
        for i in range(1, p + 1):
            powers[i] = powers[i - 1] * z.T
        val = (powers[e[:, 0], 0] * powers[e[:, 1], 1]).T
        if not grad:
            return val
        a, b = e[:, 0], e[:, 1]
        am1, bm1 = np.maximum(a - 1, 0), np.maximum(b - 1, 0)
        gx = (a[:, None] * powers[am1, 0] * powers[b, 1]).T / self.scale
        gy = (b[:, None] * powers[a, 0] * powers[bm1, 1]).T / self.scale
        return val, np.stack([gx, gy], axis=-1)

    def values(self, x) -> np.ndarray:
        """(nq, dim) basis values at points x of shape (nq, 2)."""
        v = self._monomials(x, grad=False)
        return v if self.transform is None else v @ self.transform

    def values_and_gradients(self, x):
        """Values (nq, dim) and gradients (nq, dim, 2)."""
        v, g = self._monomials(x, grad=True)
        if self.transform is not None:
            v = v @ self.transform
            g = np.einsum("qid,ij->qjd", g, self.transform)
        return v, g


@dataclass(frozen=True)
class FaceBasis:
    """Monomials of s = (x - x_F) . t_F / h_F on a face."""

    midpoint: np.ndarray
    tangent: np.ndarray
    scale: float
    degree: int

    @property
    def dim(self) -> int:
        return dim_face(self.degree)

    def values(self, x) -> np.ndarray:
        s = (np.asarray(x, dtype=float) - self.midpoint) @ self.tangent / self.scale
        return s[:, None] ** np.arange(self.degree + 1)[None, :]


def cell_basis(mesh, c: int, degree: int, orthonormal: bool = False, quad_degree: int | None = None) -> CellBasis:
    basis = CellBasis(mesh.cell_centroids[c], float(mesh.cell_diameters[c]), degree)
    if not orthonormal:
        return basis
    q = cell_quadrature(mesh, c, 2 * degree if quad_degree is None else quad_degree)
    v = basis.values(q.points)
    m = v.T @ (q.weights[:, None] * v)
    lower = np.linalg.cholesky(m)
    return CellBasis(basis.center, basis.scale, degree, np.linalg.inv(lower).T)


def face_basis(mesh, f: int, degree: int) -> FaceBasis:
    return FaceBasis(mesh.face_midpoints[f], mesh.face_tangents[f], float(mesh.face_lengths[f]), degree)


def mass_matrix(values: np.ndarray, weights: np.ndarray, other: np.ndarray | None = None) -> np.ndarray:
    """Gram matrix sum_q w_q phi_i(x_q) psi_j(x_q)."""
    other = values if other is None else other
    return values.T @ (weights[:, None] * other)


def stiffness_matrix(grads: np.ndarray, weights: np.ndarray) -> np.ndarray:
    g = grads * np.sqrt(weights)[:, None, None]
    return np.einsum("qid,qjd->ij", g, g)


def l2_project_cell(func, mesh, c: int, degree: int, quad_degree: int | None = None, basis: CellBasis | None = None):
    """Coefficients of the L2(T)-orthogonal projection of ``func`` onto P^degree(T).

    ``func`` maps an (nq, 2) array of points to (nq,) values.
    """
    basis = cell_basis(mesh, c, degree) if basis is None else basis
    q = cell_quadrature(mesh, c, 2 * degree + 4 if quad_degree is None else quad_degree)
    v = basis.values(q.points)
    m = mass_matrix(v, q.weights)
    rhs = v.T @ (q.weights * np.asarray(func(q.points), dtype=float))
    return np.linalg.solve(m, rhs)


def l2_project_face(func, mesh, f: int, degree: int, quad_degree: int | None = None):
    basis = face_basis(mesh, f, degree)
    q = face_quadrature(mesh, f, 2 * degree + 4 if quad_degree is None else quad_degree)
    v = basis.values(q.points)
    m = mass_matrix(v, q.weights)
    rhs = v.T @ (q.weights * np.asarray(func(q.points), dtype=float))
    return np.linalg.solve(m, rhs)
