"""Physical coefficients and the boundary/interface classification they induce."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .mesh import Mesh, MeshError
from .quadrature import face_quadrature


def _zero(x, tag=None):
    return np.zeros(len(x))


@dataclass
class PhysicalData:
    """Coefficients of  div(-nu grad u + beta u) + mu u = f,  u = g on the inflow/diffusive boundary.

    ``nu`` maps subdomain tags to nonnegative constants. ``beta`` maps points
    (n, 2) to velocities (n, 2) and must be divergence free. ``beta_grad``
    (optional) returns the Jacobian (n, 2, 2) with rows indexed by the
    velocity component. ``f`` and ``g`` take points and the subdomain tag of
    the cell they are evaluated in.
    """

    nu: dict
    beta: Callable
    mu: float | Callable = 1.0
    f: Callable = _zero
    g: Callable = _zero
    beta_grad: Callable | None = None
    name: str = "custom"

    def __post_init__(self):
        if any(v < 0 for v in self.nu.values()):
            raise ValueError("diffusion coefficient must be nonnegative")

    def nu_cells(self, mesh: Mesh) -> np.ndarray:
        try:
            return np.array([self.nu[int(t)] for t in mesh.cell_tags], dtype=float)
        except KeyError as err:
            raise MeshError(f"no diffusion coefficient for subdomain tag {err.args[0]}") from None

    def mu_at(self, x) -> np.ndarray:
        if callable(self.mu):
            return np.asarray(self.mu(x), dtype=float)
        return np.full(len(x), float(self.mu))


@dataclass
class BoundaryClassification:
    """Face sets induced by the coefficients on a mesh.

    ``nu_face`` is the smallest diffusion of the cells sharing a face,
    ``diffusive_cell`` the cell of largest diffusion (the owner on ties),
    ``gamma`` flags boundary faces where the Dirichlet datum applies,
    ``interface`` flags diffusive/nondiffusive interfaces and
    ``interface_sign`` is +1 on I+ and -1 on I- (0 elsewhere).
    """

    nu_face: np.ndarray
    diffusive_cell: np.ndarray
    gamma: np.ndarray
    interface: np.ndarray
    interface_sign: np.ndarray
    degenerate: bool = field(default=False)

    @property
    def i_plus(self) -> np.ndarray:
        return np.flatnonzero(self.interface_sign > 0)

    @property
    def i_minus(self) -> np.ndarray:
        return np.flatnonzero(self.interface_sign < 0)


def classify(mesh: Mesh, data: PhysicalData, quad_degree: int = 8, tol: float = 1e-12) -> BoundaryClassification:
    nu_c = data.nu_cells(mesh)
    nf = mesh.n_faces
    nu_face = np.empty(nf)
    diffusive = np.empty(nf, dtype=int)
    gamma = np.zeros(nf, dtype=bool)
    interface = np.zeros(nf, dtype=bool)
    sign = np.zeros(nf, dtype=int)
    for f in range(nf):
        t1, t2 = mesh.face_cells[f]
        q = face_quadrature(mesh, f, quad_degree)
        bn = np.einsum("qd,d->q", np.asarray(data.beta(q.points), dtype=float), mesh.face_normals[f])
        if t2 < 0:
            nu_face[f] = nu_c[t1]
            diffusive[f] = t1
            gamma[f] = nu_c[t1] > 0 or np.any(bn < -tol)
            if nu_c[t1] == 0 and np.all(np.abs(bn) <= tol):
                raise MeshError(f"face {f}: no diffusion and tangential velocity on a boundary face")
            continue
        nu1, nu2 = nu_c[t1], nu_c[t2]
        nu_face[f] = min(nu1, nu2)
        diffusive[f] = t1 if nu1 >= nu2 else t2
        if nu1 == 0 and nu2 == 0:
            if np.all(np.abs(bn) <= tol):
                raise MeshError(f"face {f}: diffusion vanishes on both sides and beta . n vanishes on the face")
            continue
        if (nu1 == 0) != (nu2 == 0):
            interface[f] = True
            # n_I points out of the diffusive cell
            bn_i = bn if nu1 > 0 else -bn
            if np.all(bn_i > tol):
                sign[f] = 1
            elif np.all(bn_i < -tol):
                sign[f] = -1
            else:
                raise MeshError(
                    f"face {f}: beta . n_I changes sign or vanishes on an interface face; "
                    "the mesh is incompatible with the diffusive/nondiffusive interface"
                )
    return BoundaryClassification(
        nu_face=nu_face,
        diffusive_cell=diffusive,
        gamma=gamma,
        interface=interface,
        interface_sign=sign,
        degenerate=bool(np.any(nu_c == 0)),
    )
