"""Global assembly with weak boundary conditions, static condensation and solve."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .basis import dim_cell, dim_face
from .data import BoundaryClassification, PhysicalData, classify
from .fluxes import FluxFunction, face_coefficients, get_flux
from .local import LocalOperatorSet, build_local_operators, local_load
from .mesh import Mesh
from .quadrature import cell_quadrature, face_quadrature

log = logging.getLogger(__name__)


class AssemblyError(RuntimeError):
    pass


@dataclass(frozen=True)
class GlobalDofMap:
    """Face unknowns first (k+1 per face), then cell unknowns (dim P^k per cell)."""

    n_faces: int
    n_cells: int
    k: int

    @property
    def n_face_dof(self) -> int:
        return dim_face(self.k)

    @property
    def n_cell_dof(self) -> int:
        return dim_cell(self.k)

    @property
    def n_face_dofs(self) -> int:
        return self.n_faces * self.n_face_dof

    @property
    def size(self) -> int:
        return self.n_face_dofs + self.n_cells * self.n_cell_dof

    def face_dofs(self, f) -> np.ndarray:
        f = np.atleast_1d(f)
        return (f[:, None] * self.n_face_dof + np.arange(self.n_face_dof)).ravel()

    def cell_dofs(self, c: int) -> np.ndarray:
        return self.n_face_dofs + c * self.n_cell_dof + np.arange(self.n_cell_dof)

    def local_dofs(self, mesh: Mesh, c: int) -> np.ndarray:
        return np.concatenate([self.cell_dofs(c), self.face_dofs(mesh.cell_faces[c])])


class Discretization:
    """Mesh, coefficients and scheme parameters together with all local operators."""

    def __init__(
        self,
        mesh: Mesh,
        data: PhysicalData,
        k: int,
        flux: str | FluxFunction = "upwind",
        penalty: float = 1.0,
        pe_mode: str = "pointwise",
        quad_degree: int | None = None,
        orthonormal: bool = False,
        div_tol: float = 1e-6,
    ):
        if penalty <= 0:
            raise AssemblyError("boundary penalty must be positive")
        self.mesh, self.data, self.k = mesh, data, int(k)
        self.flux = get_flux(flux)
        self.penalty = float(penalty)
        self.pe_mode = pe_mode
        self.quad_degree = quad_degree
        self.orthonormal = orthonormal
        self.classification: BoundaryClassification = classify(mesh, data)
        if self.classification.degenerate and not self.flux.robust:
            raise AssemblyError(
                f"the {self.flux.name} flux is not admissible when the diffusion vanishes somewhere: "
                "it violates the growth conditions |A|(s) >= a|s| and |A|(s)/s -> 1"
            )
        self.nu_cells = data.nu_cells(mesh)
        self.dofmap = GlobalDofMap(mesh.n_faces, mesh.n_cells, self.k)
        self.local_ops: list[LocalOperatorSet] = [
            build_local_operators(
                mesh, c, self.k, data, self.nu_cells, self.classification.nu_face, self.flux,
                penalty=self.penalty, pe_mode=pe_mode, quad_degree=quad_degree, orthonormal=orthonormal,
            )
            for c in range(mesh.n_cells)
        ]
        worst = max(op.flux_residual for op in self.local_ops)
        if worst > div_tol:
            raise AssemblyError(
                f"velocity field is not divergence free: relative net cell flux {worst:.3e} exceeds {div_tol:g}"
            )

    def local_matrix(self, c: int) -> np.ndarray:
        op = self.local_ops[c]
        return op.diffusion + op.advection_reaction + op.boundary_form

    def local_rhs(self, c: int) -> np.ndarray:
        return local_load(self.local_ops[c], self.data, self.quad_degree, self.mesh)


@dataclass
class AssembledSystem:
    """Uncondensed system a_h(u, v) = l_h(v), kept both as local blocks and globally."""

    disc: Discretization
    local_matrices: list
    local_rhs: list
    _matrix: sp.csr_matrix | None = field(default=None, repr=False)
    _rhs: np.ndarray | None = field(default=None, repr=False)

    @property
    def dofmap(self) -> GlobalDofMap:
        return self.disc.dofmap

    def _build(self):
        mesh, dm = self.disc.mesh, self.dofmap
        rows, cols, vals = [], [], []
        rhs = np.zeros(dm.size)
        for c, (A, b) in enumerate(zip(self.local_matrices, self.local_rhs)):
            idx = dm.local_dofs(mesh, c)
            rows.append(np.repeat(idx, len(idx)))
            cols.append(np.tile(idx, len(idx)))
            vals.append(A.ravel())
            np.add.at(rhs, idx, b)
        self._matrix = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(dm.size, dm.size)
        )
        self._rhs = rhs

    @property
    def matrix(self) -> sp.csr_matrix:
        if self._matrix is None:
            self._build()
        return self._matrix

    @property
    def rhs(self) -> np.ndarray:
        if self._rhs is None:
            self._build()
        return self._rhs


def assemble(
    mesh: Mesh,
    data: PhysicalData,
    k: int,
    flux: str | FluxFunction = "upwind",
    penalty: float = 1.0,
    **options,
) -> AssembledSystem:
    disc = options.pop("disc", None) or Discretization(mesh, data, k, flux, penalty, **options)
    mats = [disc.local_matrix(c) for c in range(mesh.n_cells)]
    rhs = [disc.local_rhs(c) for c in range(mesh.n_cells)]
    return AssembledSystem(disc, mats, rhs)


@dataclass
class CondensedSystem:
    """Face-only system and the data needed to recover cell unknowns."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    free_dofs: np.ndarray  # global face-dof indices of the unknowns of ``matrix``
    fixed_values: np.ndarray  # values of all face dofs that are prescribed (zeros where free)
    recovery: list  # per cell (A_TT^-1 A_TF, A_TT^-1 b_T)
    system: AssembledSystem = field(repr=False)


def condense(system: AssembledSystem, dirichlet: dict | None = None) -> CondensedSystem:
    """Eliminate cell unknowns by local Schur complements.

    ``dirichlet`` optionally maps face ids to prescribed coefficient vectors;
    those unknowns are removed from the system (strong enforcement).
    """
    disc = system.disc
    mesh, dm = disc.mesh, system.dofmap
    nk = dm.n_cell_dof
    fixed = np.zeros(dm.n_face_dofs)
    is_free = np.ones(dm.n_face_dofs, dtype=bool)
    for f, vals in (dirichlet or {}).items():
        d = dm.face_dofs(f)
        is_free[d] = False
        fixed[d] = vals
    free = np.flatnonzero(is_free)
    position = -np.ones(dm.n_face_dofs, dtype=int)
    position[free] = np.arange(len(free))

    rows, cols, vals = [], [], []
    rhs = np.zeros(len(free))
    recovery = []
    for c in range(mesh.n_cells):
        A, b = system.local_matrices[c], system.local_rhs[c]
        fdofs = dm.face_dofs(mesh.cell_faces[c])
        Att, Atf = A[:nk, :nk], A[:nk, nk:]
        Aft, Aff = A[nk:, :nk], A[nk:, nk:]
        try:
            X = np.linalg.solve(Att, np.column_stack([Atf, b[:nk]]))
        except np.linalg.LinAlgError:
            raise AssemblyError(f"cell {c}: singular cell block, cannot condense") from None
        recovery.append((X[:, :-1], X[:, -1]))
        S = Aff - Aft @ X[:, :-1]
        r = b[nk:] - Aft @ X[:, -1] - S @ fixed[fdofs]
        pos = position[fdofs]
        keep = pos >= 0
        p = pos[keep]
        rows.append(np.repeat(p, len(p)))
        cols.append(np.tile(p, len(p)))
        vals.append(S[np.ix_(keep, keep)].ravel())
        np.add.at(rhs, p, r[keep])
    n = len(free)
    mat = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    return CondensedSystem(mat, rhs, free, fixed, recovery, system)


@dataclass
class DiscreteSolution:
    cell_coeffs: np.ndarray  # (n_cells, dim P^k)
    face_coeffs: np.ndarray  # (n_faces, k+1)
    residual: float = 0.0

    def vector(self, dofmap: GlobalDofMap) -> np.ndarray:
        return np.concatenate([self.face_coeffs.ravel(), self.cell_coeffs.ravel()])

    @classmethod
    def from_vector(cls, x: np.ndarray, dofmap: GlobalDofMap, residual: float = 0.0) -> "DiscreteSolution":
        nf = dofmap.n_face_dofs
        return cls(
            x[nf:].reshape(dofmap.n_cells, dofmap.n_cell_dof),
            x[:nf].reshape(dofmap.n_faces, dofmap.n_face_dof),
            residual,
        )

    def local_vector(self, mesh: Mesh, c: int) -> np.ndarray:
        return np.concatenate([self.cell_coeffs[c], self.face_coeffs[mesh.cell_faces[c]].ravel()])

    def potential(self, disc: Discretization, c: int) -> np.ndarray:
        """P^{k+1} coefficients of the reconstructed potential in cell ``c``."""
        return disc.local_ops[c].reconstruction @ self.local_vector(disc.mesh, c)


def solve_faces(matrix: sp.spmatrix, rhs: np.ndarray) -> np.ndarray:
    """Sparse direct solve (LU, nonsymmetric)."""
    if matrix.shape[0] == 0:
        return np.zeros(0)
    try:
        lu = spla.splu(sp.csc_matrix(matrix))
    except RuntimeError as err:
        raise AssemblyError(f"factorization failed: {err}") from None
    x = lu.solve(rhs)
    if not np.all(np.isfinite(x)):
        raise AssemblyError("factorization produced non-finite values (near-singular system)")
    return x


def recover(condensed: CondensedSystem, face_values: np.ndarray) -> DiscreteSolution:
    system = condensed.system
    mesh, dm = system.disc.mesh, system.dofmap
    faces = condensed.fixed_values.copy()
    faces[condensed.free_dofs] = face_values
    cells = np.empty((mesh.n_cells, dm.n_cell_dof))
    for c, (X, y) in enumerate(condensed.recovery):
        cells[c] = y - X @ faces[dm.face_dofs(mesh.cell_faces[c])]
    return DiscreteSolution(cells, faces.reshape(dm.n_faces, dm.n_face_dof))


def solve(condensed: CondensedSystem) -> DiscreteSolution:
    x = solve_faces(condensed.matrix, condensed.rhs)
    sol = recover(condensed, x)
    system = condensed.system
    full = sol.vector(system.dofmap)
    r = system.matrix @ full - system.rhs
    nb = np.linalg.norm(system.rhs)
    if condensed.free_dofs.size < system.dofmap.n_face_dofs:
        # prescribed face unknowns carry no equation of their own
        mask = np.ones(system.dofmap.size, dtype=bool)
        mask[np.setdiff1d(np.arange(system.dofmap.n_face_dofs), condensed.free_dofs)] = False
        r, nb = r[mask], np.linalg.norm(system.rhs[mask])
    sol.residual = float(np.linalg.norm(r) / nb) if nb > 0 else float(np.linalg.norm(r))
    return sol


def solve_uncondensed(system: AssembledSystem) -> DiscreteSolution:
    """Direct solve of the full cell + face system, for verification."""
    x = solve_faces(system.matrix, system.rhs)
    r = system.matrix @ x - system.rhs
    nb = np.linalg.norm(system.rhs)
    return DiscreteSolution.from_vector(x, system.dofmap, float(np.linalg.norm(r) / nb) if nb > 0 else 0.0)


def write_coo(matrix: sp.spmatrix, path) -> None:
    """Coordinate text dump: one 'row col value' line per stored entry, 0-based."""
    m = sp.coo_matrix(matrix)
    order = np.lexsort((m.col, m.row))
    with open(path, "w") as fh:
        fh.write(f"% {m.shape[0]} {m.shape[1]} {m.nnz}\n")
        for i, j, v in zip(m.row[order], m.col[order], m.data[order]):
            fh.write(f"{int(i)} {int(j)} {float(v)!r}\n")


# ---------------------------------------------------------------------------
# lowest-order flux form (hybrid mimetic mixed), an independent k = 0 oracle


@dataclass
class FluxFormSystem:
    """Flux-balance (cell rows) and weighted flux-continuity (face rows) system.

    Unknown ordering matches :class:`GlobalDofMap` with k = 0. Face rows are
    scaled by ``-|F|`` so that the system equals the variational form tested
    with face indicators.
    """

    matrix: sp.csr_matrix
    rhs: np.ndarray
    dofmap: GlobalDofMap
    diffusive: list  # per cell (W, weights) so that |F| F_d = W @ (u_T - u_F)
    advective: list  # per cell (a_plus, a_minus) arrays: nu_F/h_F A+-(Pe_TF)

    def cell_fluxes(self, mesh: Mesh, u_cells: np.ndarray, u_faces: np.ndarray) -> list:
        """Total fluxes |F| (F_d + F_a)_TF for each cell and face."""
        out = []
        for c in range(mesh.n_cells):
            fids = mesh.cell_faces[c]
            delta = u_cells[c] - u_faces[fids]
            ap, am = self.advective[c]
            out.append(self.diffusive[c] @ delta + mesh.face_lengths[fids] * (ap * u_cells[c] - am * u_faces[fids]))
        return out


def hmm_flux_assemble(mesh: Mesh, data: PhysicalData, flux: str | FluxFunction = "upwind", quad_degree: int = 8):
    """Assemble the k = 0 flux form with diagonal stabilization nu_T |F| / h_F.

    Diffusive fluxes come from the consistent cell gradient
    G_T u = (1/|T|) sum_F |F| (u_F - u_T) n_TF and the face residuals
    u_F - u_T - G_T u . (x_F - x_T); advective fluxes use the face-averaged
    Peclet number. Requires nu > 0 everywhere and mu = 0.
    """
    flux = get_flux(flux)
    nu_c = data.nu_cells(mesh)
    if np.any(nu_c <= 0):
        raise AssemblyError("flux form requires strictly positive diffusion")
    if callable(data.mu) or float(data.mu) != 0.0:
        raise AssemblyError("flux form requires mu = 0")
    nu_f = np.array([nu_c[[t for t in mesh.face_cells[f] if t >= 0]].min() for f in range(mesh.n_faces)])

    dm = GlobalDofMap(mesh.n_faces, mesh.n_cells, 0)
    rows, cols, vals = [], [], []
    rhs = np.zeros(dm.size)
    diffusive, advective = [], []
    for c in range(mesh.n_cells):
        fids = mesh.cell_faces[c]
        m = len(fids)
        lengths = mesh.face_lengths[fids]
        normals = mesh.cell_normals(c)
        xt = mesh.cell_centroids[c]
        area = mesh.cell_areas[c]
        nu = nu_c[c]
        # gradient of delta = u_T - u_F:  G = gmat @ delta
        gmat = -(lengths[:, None] * normals).T / area
        rmat = -np.eye(m) - (mesh.face_midpoints[fids] - xt) @ gmat
        h_f = lengths  # face diameter equals length in 2D
        W = nu * area * gmat.T @ gmat + rmat.T @ np.diag(nu / h_f * lengths) @ rmat
        ap, am = np.empty(m), np.empty(m)
        for i, f in enumerate(fids):
            q = face_quadrature(mesh, f, quad_degree)
            bn_mean = float(q.weights @ (np.asarray(data.beta(q.points)) @ normals[i])) / lengths[i]
            p, mm, _ = face_coefficients(flux, nu_f[f], lengths[i], np.array([bn_mean]))
            ap[i], am[i] = p[0], mm[0]
        diffusive.append(W)
        advective.append((ap, am))
        # total flux |F|(F_d + F_a) as a linear map of (u_T, u_F...)
        fluxmap = np.zeros((m, m + 1))
        fluxmap[:, 0] = W.sum(axis=1) + lengths * ap
        fluxmap[:, 1:] = -W - np.diag(lengths * am)
        idx = np.concatenate([[dm.n_face_dofs + c], fids])
        # cell balance row
        rows.append(np.full(m + 1, dm.n_face_dofs + c))
        cols.append(idx)
        vals.append(fluxmap.sum(axis=0))
        # face rows: -|F| times the face's share of the continuity equation
        rows.append(np.repeat(fids, m + 1))
        cols.append(np.tile(idx, m))
        vals.append(-fluxmap.ravel())
        qc = cell_quadrature(mesh, c, quad_degree)
        rhs[dm.n_face_dofs + c] = qc.weights @ np.asarray(data.f(qc.points, int(mesh.cell_tags[c])))
    mat = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(dm.size, dm.size))
    return FluxFormSystem(mat, rhs, dm, diffusive, advective)


def condense_flux_form(system: FluxFormSystem, strong_faces=None) -> tuple[sp.csr_matrix, np.ndarray, np.ndarray]:
    """Schur complement of the flux form onto the face unknowns not in ``strong_faces`` (set to zero)."""
    dm = system.dofmap
    nf = dm.n_face_dofs
    A = sp.csr_matrix(system.matrix)
    keep = np.ones(nf, dtype=bool)
    if strong_faces is not None:
        keep[np.asarray(strong_faces, dtype=int)] = False
    free = np.flatnonzero(keep)
    cells = np.arange(nf, dm.size)
    Att = A[cells][:, cells]
    d = Att.diagonal()
    if spla.norm(Att - sp.diags(d)) > 0:
        raise AssemblyError("flux-form cell block is not diagonal")
    Aff = A[free][:, free]
    Aft = A[free][:, cells]
    Atf = A[cells][:, free]
    S = Aff - Aft @ sp.diags(1.0 / d) @ Atf
    r = system.rhs[free] - Aft @ (system.rhs[cells] / d)
    return sp.csr_matrix(S), r, free
