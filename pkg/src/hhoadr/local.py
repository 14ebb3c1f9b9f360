"""Per-cell operators of the face-based scheme.

Local unknowns on a cell T are ordered as the cell block (a polynomial of
degree k, ``dim_cell(k)`` coefficients) followed by one block of ``k + 1``
coefficients per face, in the order of ``mesh.cell_faces[T]``.

All matrices follow the convention ``A[i, j] = a(phi_j, phi_i)``: rows are
test functions, columns trial functions.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .basis import (
    CellBasis,
    cell_basis,
    dim_cell,
    dim_face,
    face_basis,
    mass_matrix,
    stiffness_matrix,
)
from .fluxes import FluxFunction, face_coefficients
from .quadrature import cell_quadrature, face_quadrature


class LocalOperatorError(ValueError):
    pass


@dataclass(frozen=True)
class LocalDofLayout:
    k: int
    n_faces: int

    @property
    def n_cell(self) -> int:
        return dim_cell(self.k)

    @property
    def n_face(self) -> int:
        return dim_face(self.k)

    @property
    def size(self) -> int:
        return self.n_cell + self.n_faces * self.n_face

    @property
    def cell(self) -> slice:
        return slice(0, self.n_cell)

    def face(self, i: int) -> slice:
        start = self.n_cell + i * self.n_face
        return slice(start, start + self.n_face)


def truncated_basis(basis: CellBasis, degree: int) -> CellBasis:
    """The first dim_cell(degree) functions of a hierarchical basis."""
    n = dim_cell(degree)
    t = None if basis.transform is None else basis.transform[:n, :n]
    return CellBasis(basis.center, basis.scale, degree, t)


@dataclass
class FaceData:
    """Quadrature data of one face seen from one cell."""

    face: int
    normal: np.ndarray  # n_TF
    h: float
    points: np.ndarray
    weights: np.ndarray
    cell_values: np.ndarray  # (nq, dim P^{k+1}) cell basis on the face
    normal_grads: np.ndarray  # (nq, dim P^{k+1}) grad phi . n_TF
    face_values: np.ndarray  # (nq, k+1)
    mass: np.ndarray  # face mass matrix (k+1, k+1)
    beta_n: np.ndarray  # beta . n_TF at the points
    nu_face: float
    boundary: bool
    coef_plus: np.ndarray = None
    coef_minus: np.ndarray = None
    coef_abs: np.ndarray = None


@dataclass
class LocalOperatorSet:
    """Dense operators of one cell.

    ``reconstruction`` maps local unknowns to P^{k+1} coefficients of the
    potential reconstruction; ``correction`` to those of
    v_T + (p v - pi^k_T p v); ``adv_derivative`` to the P^k coefficients
    of the discrete advective derivative.
    """

    cell: int
    layout: LocalDofLayout
    basis: CellBasis  # degree k+1; its first dim_cell(k) functions span P^k
    nu: float
    tag: int
    h: float
    stiffness: np.ndarray
    mass_high: np.ndarray
    mass: np.ndarray
    reconstruction: np.ndarray
    correction: np.ndarray
    stab_nu: np.ndarray
    diffusion: np.ndarray
    adv_rhs: np.ndarray
    adv_derivative: np.ndarray
    reaction: np.ndarray
    s_plus: np.ndarray
    s_minus: np.ndarray
    s_abs: np.ndarray
    advection_reaction: np.ndarray
    faces: list = field(repr=False)
    boundary_form: np.ndarray = field(repr=False, default=None)
    boundary_load_ops: list = field(repr=False, default_factory=list)
    flux_residual: float = 0.0

    @property
    def cell_basis_k(self) -> CellBasis:
        return truncated_basis(self.basis, self.layout.k)

    def face_selector(self, i: int) -> np.ndarray:
        sel = np.zeros((self.layout.n_face, self.layout.size))
        sel[:, self.layout.face(i)] = np.eye(self.layout.n_face)
        return sel

    def cell_selector(self) -> np.ndarray:
        sel = np.zeros((self.layout.n_cell, self.layout.size))
        sel[:, self.layout.cell] = np.eye(self.layout.n_cell)
        return sel


DIV_CHECK_DEGREE = 24


def default_quad_degree(k: int) -> int:
    return 2 * (k + 1) + 2


def build_local_operators(
    mesh,
    c: int,
    k: int,
    data,
    nu_cells: np.ndarray,
    nu_faces: np.ndarray,
    flux: FluxFunction,
    penalty: float = 1.0,
    pe_mode: str = "pointwise",
    quad_degree: int | None = None,
    orthonormal: bool = False,
) -> LocalOperatorSet:
    """Assemble every local operator of cell ``c``.

    ``nu_faces`` holds nu_F = min over cells sharing F of nu_T.
    ``pe_mode`` is ``"pointwise"`` (Peclet number evaluated at each face
    quadrature point) or ``"face_averaged"``.
    """
    if k < 0:
        raise LocalOperatorError("polynomial degree must be nonnegative")
    if pe_mode not in ("pointwise", "face_averaged"):
        raise LocalOperatorError(f"unknown Peclet mode {pe_mode!r}")
    qdeg = default_quad_degree(k) if quad_degree is None else quad_degree
    fids = mesh.cell_faces[c]
    normals = mesh.cell_normals(c)
    layout = LocalDofLayout(k, len(fids))
    nk, n1, nfk, N = layout.n_cell, dim_cell(k + 1), layout.n_face, layout.size
    nu_t = float(nu_cells[c])
    tag = int(mesh.cell_tags[c])

    basis = cell_basis(mesh, c, k + 1, orthonormal=orthonormal, quad_degree=qdeg)
    q = cell_quadrature(mesh, c, qdeg)
    w = q.weights
    V, Gr = basis.values_and_gradients(q.points)
    M1 = mass_matrix(V, w)
    K1 = stiffness_matrix(Gr, w)
    Mk = M1[:nk, :nk]
    Vk = V[:, :nk]

    beta_q = np.asarray(data.beta(q.points), dtype=float)
    mu_q = data.mu_at(q.points)

    # right-hand sides of the reconstruction (B) and advective derivative (C)
    B = np.zeros((n1, N))
    B[:, :nk] = K1[:, :nk]
    C = np.zeros((nk, N))
    bgrad = np.einsum("qid,qd->qi", Gr[:, :nk], beta_q)
    C[:, :nk] = -bgrad.T @ (w[:, None] * Vk)

    faces = []
    flux_sum, flux_scale = 0.0, 0.0
    for i, f in enumerate(fids):
        sl = layout.face(i)
        n = normals[i]
        qf = face_quadrature(mesh, f, qdeg)
        wf = qf.weights
        Vf, Gf = basis.values_and_gradients(qf.points)
        gn = Gf @ n
        Psi = face_basis(mesh, f, k).values(qf.points)
        B[:, sl] += gn.T @ (wf[:, None] * Psi)
        B[:, :nk] -= gn.T @ (wf[:, None] * Vf[:, :nk])
        bn = np.asarray(data.beta(qf.points), dtype=float) @ n
        C[:, sl] += Vf[:, :nk].T @ ((wf * bn)[:, None] * Psi)
        # the divergence check uses its own rule so that it does not depend on the scheme's quadrature
        qc = face_quadrature(mesh, f, DIV_CHECK_DEGREE)
        bn_c = np.asarray(data.beta(qc.points), dtype=float) @ n
        flux_sum += float(qc.weights @ bn_c)
        flux_scale += float(qc.weights @ np.abs(bn_c))
        faces.append(FaceData(
            face=int(f), normal=n, h=float(mesh.face_lengths[f]), points=qf.points, weights=wf,
            cell_values=Vf, normal_grads=gn, face_values=Psi, mass=mass_matrix(Psi, wf),
            beta_n=bn, nu_face=float(nu_faces[f]), boundary=bool(mesh.face_cells[f, 1] < 0),
        ))

    # potential reconstruction: the constant-mode row (zero in K1 and B since
    # basis function 0 is constant) is replaced by the mean-value condition
    Kt = K1.copy()
    Kt[0, :] = w @ V
    Bt = B.copy()
    Bt[0, :] = 0.0
    Bt[0, :nk] = w @ Vk
    try:
        P = np.linalg.solve(Kt, Bt)
    except np.linalg.LinAlgError:
        raise LocalOperatorError(f"cell {c}: singular reconstruction system") from None

    Pik = np.linalg.solve(Mk, M1[:nk, :])  # pi^k_T on P^{k+1} coefficients
    R = P.copy()
    R[:nk, :] -= Pik @ P
    R[:nk, :nk] += np.eye(nk)

    S_nu = np.zeros((N, N))
    if nu_t > 0.0:
        for i, fd in enumerate(faces):
            sl = layout.face(i)
            NF = fd.face_values.T @ (fd.weights[:, None] * fd.cell_values)
            D = -np.linalg.solve(fd.mass, NF @ R)
            D[:, sl] += np.eye(nfk)
            S_nu += (nu_t / fd.h) * (D.T @ fd.mass @ D)
    A_nu = nu_t * (P.T @ K1 @ P) + S_nu if nu_t > 0.0 else np.zeros((N, N))

    G = np.linalg.solve(Mk, C)
    Mmu = Vk.T @ ((w * mu_q)[:, None] * Vk)

    S_plus = np.zeros((N, N))
    S_minus = np.zeros((N, N))
    S_abs = np.zeros((N, N))
    A_bnd = np.zeros((N, N))
    bnd_load = []
    for i, fd in enumerate(faces):
        sl = layout.face(i)
        if pe_mode == "pointwise":
            bn_eval = fd.beta_n
        else:
            bn_eval = np.full_like(fd.beta_n, (fd.weights @ fd.beta_n) / fd.weights.sum())
        cp, cm, ca = face_coefficients(flux, fd.nu_face, fd.h, bn_eval)
        fd.coef_plus, fd.coef_minus, fd.coef_abs = cp, cm, ca
        J = np.zeros((len(fd.weights), N))
        J[:, :nk] = -fd.cell_values[:, :nk]
        J[:, sl] = fd.face_values
        S_plus += J.T @ ((fd.weights * cp)[:, None] * J)
        S_minus += J.T @ ((fd.weights * cm)[:, None] * J)
        S_abs += J.T @ ((fd.weights * ca)[:, None] * J)
        if fd.boundary:
            Psi, wf = fd.face_values, fd.weights
            # -(nu_F grad p w . n, v_F)_F + (penalty nu_F / h_F)(w_F, v_F)_F + (nu_F/h_F A+ w_F, v_F)_F
            A_bnd[sl, :] -= fd.nu_face * (Psi.T @ (wf[:, None] * fd.normal_grads)) @ P
            A_bnd[sl, sl] += (penalty * fd.nu_face / fd.h) * fd.mass
            A_bnd[sl, sl] += Psi.T @ ((wf * cp)[:, None] * Psi)
            bnd_load.append((i, Psi.T * (wf * (cm + penalty * fd.nu_face / fd.h))[None, :]))

    A_adv = np.zeros((N, N))
    A_adv[:, :nk] = -C.T
    A_adv[:nk, :nk] += Mmu
    A_adv += S_minus

    return LocalOperatorSet(
        cell=c, layout=layout, basis=basis, nu=nu_t, tag=tag, h=float(mesh.cell_diameters[c]),
        stiffness=K1, mass_high=M1, mass=Mk, reconstruction=P, correction=R,
        stab_nu=S_nu, diffusion=A_nu, adv_rhs=C, adv_derivative=G, reaction=Mmu,
        s_plus=S_plus, s_minus=S_minus, s_abs=S_abs, advection_reaction=A_adv,
        faces=faces, boundary_form=A_bnd, boundary_load_ops=bnd_load,
        flux_residual=abs(flux_sum) / flux_scale if flux_scale > 0 else 0.0,
    )


def local_load(ops: LocalOperatorSet, data, quad_degree: int | None = None, mesh=None) -> np.ndarray:
    """Local right-hand side: (f, v_T)_T plus the weak boundary data terms."""
    layout = ops.layout
    b = np.zeros(layout.size)
    qdeg = default_quad_degree(layout.k) if quad_degree is None else quad_degree
    q = cell_quadrature(mesh, ops.cell, qdeg)
    Vk = truncated_basis(ops.basis, layout.k).values(q.points)
    fq = np.asarray(data.f(q.points, ops.tag), dtype=float)
    b[layout.cell] = Vk.T @ (q.weights * fq)
    for i, op in ops.boundary_load_ops:
        fd = ops.faces[i]
        gq = np.asarray(data.g(fd.points, ops.tag), dtype=float)
        b[layout.face(i)] += op @ gq
    return b
