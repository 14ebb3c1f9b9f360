"""Quadrature on segments, triangles and star-shaped polygons.

Triangles use a conical-product (collapsed Gauss-Jacobi x Gauss-Legendre)
rule, which has positive weights and any requested exactness. Polygons are
fan-triangulated from their centroid.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre


class QuadratureError(ValueError):
    pass


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # (nq, 2)
    weights: np.ndarray  # (nq,)
    degree: int

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))


def _n_points(degree: int) -> int:
    if degree < 0:
        raise QuadratureError("degree must be nonnegative")
    return degree // 2 + 1


@lru_cache(maxsize=None)
def gauss_legendre_01(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [0, 1], exact up to ``degree``."""
    t, w = roots_legendre(_n_points(degree))
    return 0.5 * (t + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def reference_triangle(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Rule on the triangle (0,0), (1,0), (0,1); weights sum to 1/2."""
    n = _n_points(degree)
    tu, wu = roots_jacobi(n, 1.0, 0.0)
    u = 0.5 * (tu + 1.0)
    wu = 0.25 * wu
    v, wv = gauss_legendre_01(2 * n - 1)
    U, V = np.meshgrid(u, v, indexing="ij")
    pts = np.column_stack([U.ravel(), ((1.0 - U) * V).ravel()])
    wts = np.outer(wu, wv).ravel()
    pts.setflags(write=False)
    wts.setflags(write=False)
    return pts, wts


def triangle_quadrature(a, b, c, degree: int) -> QuadratureRule:
    a, b, c = (np.asarray(p, dtype=float) for p in (a, b, c))
    ref, w = reference_triangle(degree)
    jac = np.column_stack([b - a, c - a])
    det = jac[0, 0] * jac[1, 1] - jac[0, 1] * jac[1, 0]
    if abs(det) <= 1e-300:
        raise QuadratureError("degenerate triangle")
    return QuadratureRule(a + ref @ jac.T, w * abs(det), degree)


def polygon_quadrature(xy: np.ndarray, degree: int, centroid=None) -> QuadratureRule:
    """Fan triangulation from the centroid; triangles are integrated directly."""
    xy = np.asarray(xy, dtype=float)
    if len(xy) == 3:
        return triangle_quadrature(xy[0], xy[1], xy[2], degree)
    ref, w = reference_triangle(degree)
    g = xy.mean(axis=0) if centroid is None else np.asarray(centroid, dtype=float)
    a = xy - g
    b = np.roll(xy, -1, axis=0) - g
    det = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    if np.any(det <= 0.0):
        raise QuadratureError("degenerate or inverted fan sub-triangle; cell is not star-shaped from its centroid")
    # x = g + a * xi + b * eta for each sub-triangle
    pts = g + a[:, None, :] * ref[None, :, 0:1] + b[:, None, :] * ref[None, :, 1:2]
    wts = det[:, None] * w[None, :]
    return QuadratureRule(pts.reshape(-1, 2), wts.ravel(), degree)


def cell_quadrature(mesh, c: int, degree: int) -> QuadratureRule:
    return polygon_quadrature(mesh.cell_vertices(c), degree, mesh.cell_centroids[c])


def segment_quadrature(p0, p1, degree: int) -> QuadratureRule:
    p0, p1 = np.asarray(p0, dtype=float), np.asarray(p1, dtype=float)
    s, w = gauss_legendre_01(degree)
    length = np.hypot(*(p1 - p0))
    return QuadratureRule(p0 + s[:, None] * (p1 - p0), w * length, degree)


def face_quadrature(mesh, f: int, degree: int) -> QuadratureRule:
    a, b = mesh.faces[f]
    return segment_quadrature(mesh.vertices[a], mesh.vertices[b], degree)
