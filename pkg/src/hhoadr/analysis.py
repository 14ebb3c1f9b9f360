"""Interpolation, discrete norms, error reports, convergence orders and stability probes."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .assembly import AssembledSystem, Discretization, DiscreteSolution, GlobalDofMap, assemble
from .basis import face_basis, mass_matrix
from .local import LocalOperatorSet, default_quad_degree, truncated_basis
from .quadrature import cell_quadrature, face_quadrature


# ---------------------------------------------------------------------------
# reference constants


@dataclass
class NormWeights:
    beta_c: float  # reference velocity
    l_beta: float  # Lipschitz-type bound of beta
    tau_c: float  # reference time
    mu0: float
    resolves_velocity: bool = True  # h_T L_beta <= beta_c on every cell
    not_reaction_dominated: bool = True  # h_T mu0 <= beta_c on every cell

    @property
    def zeta(self) -> float:
        return min(0.5, self.tau_c * self.mu0)


def _fd_jacobian(beta, x, eps=1e-6):
    jac = np.empty((len(x), 2, 2))
    for d in range(2):
        e = np.zeros(2)
        e[d] = eps
        jac[:, :, d] = (np.asarray(beta(x + e)) - np.asarray(beta(x - e))) / (2 * eps)
    return jac


def norm_weights(disc: Discretization) -> NormWeights:
    """Sup-norm estimates sampled at cell quadrature points and vertices."""
    mesh, data = disc.mesh, disc.data
    qdeg = default_quad_degree(disc.k)
    pts = [mesh.vertices]
    for c in range(mesh.n_cells):
        pts.append(cell_quadrature(mesh, c, qdeg).points)
    x = np.concatenate(pts)
    b = np.asarray(data.beta(x), dtype=float)
    beta_c = float(np.sqrt((b ** 2).sum(axis=1)).max())
    jac = data.beta_grad(x) if data.beta_grad is not None else _fd_jacobian(data.beta, x)
    l_beta = float(np.sqrt((np.asarray(jac) ** 2).sum(axis=2)).max())
    mu = data.mu_at(x)
    mu0 = float(mu.min())
    denom = max(float(np.abs(mu).max()), l_beta)
    tau_c = 1.0 / denom if denom > 0 else np.inf
    h = mesh.cell_diameters
    return NormWeights(
        beta_c=beta_c, l_beta=l_beta, tau_c=tau_c, mu0=mu0,
        resolves_velocity=bool(np.all(h * l_beta <= beta_c)),
        not_reaction_dominated=bool(np.all(h * mu0 <= beta_c)),
    )


# ---------------------------------------------------------------------------
# interpolation


def _as_tagged(u):
    try:
        u(np.zeros((1, 2)), 1)
        return u
    except TypeError:
        return lambda x, tag: u(x)


def interpolate_local(op: LocalOperatorSet, mesh, u, quad_degree: int | None = None) -> np.ndarray:
    """Local unknowns (pi^k_T u, pi^k_F u, ...) of a single-valued ``u(points)`` in the layout of ``op``."""
    k = op.layout.k
    qdeg = default_quad_degree(k) if quad_degree is None else quad_degree
    q = cell_quadrature(mesh, op.cell, qdeg)
    v = truncated_basis(op.basis, k).values(q.points)
    out = [np.linalg.solve(op.mass, v.T @ (q.weights * np.asarray(u(q.points), dtype=float)))]
    for f in mesh.cell_faces[op.cell]:
        qf = face_quadrature(mesh, f, qdeg)
        psi = face_basis(mesh, f, k).values(qf.points)
        out.append(np.linalg.solve(mass_matrix(psi, qf.weights), psi.T @ (qf.weights * np.asarray(u(qf.points)))))
    return np.concatenate(out)


def interpolate_global(disc: Discretization, u, quad_degree: int | None = None) -> DiscreteSolution:
    """Cell and face L2 projections; face values use the trace from the most diffusive side.

    ``u(points, tag)`` evaluates the exact solution of the subdomain ``tag``;
    a one-argument callable is accepted for single-valued solutions.
    """
    u = _as_tagged(u)
    mesh, k = disc.mesh, disc.k
    qdeg = default_quad_degree(k) if quad_degree is None else quad_degree
    dm = disc.dofmap
    cells = np.empty((mesh.n_cells, dm.n_cell_dof))
    for c, op in enumerate(disc.local_ops):
        q = cell_quadrature(mesh, c, qdeg)
        v = truncated_basis(op.basis, k).values(q.points)
        cells[c] = np.linalg.solve(op.mass, v.T @ (q.weights * np.asarray(u(q.points, op.tag), dtype=float)))
    faces = np.empty((mesh.n_faces, dm.n_face_dof))
    side = disc.classification.diffusive_cell
    for f in range(mesh.n_faces):
        q = face_quadrature(mesh, f, qdeg)
        psi = face_basis(mesh, f, k).values(q.points)
        tag = int(mesh.cell_tags[side[f]])
        faces[f] = np.linalg.solve(mass_matrix(psi, q.weights), psi.T @ (q.weights * np.asarray(u(q.points, tag))))
    return DiscreteSolution(cells, faces)


# ---------------------------------------------------------------------------
# norms


def _as_solution(v, dm: GlobalDofMap) -> DiscreteSolution:
    if isinstance(v, DiscreteSolution):
        return v
    return DiscreteSolution.from_vector(np.asarray(v, dtype=float), dm)


def norm_matrices(disc: Discretization, weights: NormWeights | None = None) -> dict:
    """Global sparse quadratic forms whose values on v are the squared norm contributions."""
    weights = norm_weights(disc) if weights is None else weights
    mesh, dm = disc.mesh, disc.dofmap
    inv_tau = 0.0 if np.isinf(weights.tau_c) else 1.0 / weights.tau_c
    keys = ("nu_cells", "nu_boundary", "beta_cells", "beta_boundary", "adv", "l2")
    parts = {key: ([], [], []) for key in keys}

    def add(key, idx, mat):
        r, c_, v = parts[key]
        r.append(np.repeat(idx, len(idx)))
        c_.append(np.tile(idx, len(idx)))
        v.append(mat.ravel())

    for c, op in enumerate(disc.local_ops):
        idx = dm.local_dofs(mesh, c)
        nk, n = op.layout.n_cell, op.layout.size
        cell_mass = np.zeros((n, n))
        cell_mass[:nk, :nk] = op.mass
        add("nu_cells", idx, op.diffusion)
        add("l2", idx, cell_mass)
        add("beta_cells", idx, 0.5 * op.s_abs + inv_tau * cell_mass)
        if weights.beta_c > 0:
            G = op.adv_derivative
            add("adv", idx, op.h / weights.beta_c * (G.T @ op.mass @ G))
        for i, fd in enumerate(op.faces):
            if not fd.boundary:
                continue
            fidx = idx[op.layout.face(i)]
            add("nu_boundary", fidx, fd.nu_face / fd.h * fd.mass)
            psi = fd.face_values
            add("beta_boundary", fidx, 0.5 * psi.T @ ((fd.weights * fd.coef_abs)[:, None] * psi))
    out = {}
    for key, (r, c_, v) in parts.items():
        if r:
            out[key] = sp.csr_matrix((np.concatenate(v), (np.concatenate(r), np.concatenate(c_))),
                                     shape=(dm.size, dm.size))
        else:
            out[key] = sp.csr_matrix((dm.size, dm.size))
    out["flat"] = out["nu_cells"] + out["nu_boundary"] + out["beta_cells"] + out["beta_boundary"]
    out["sharp"] = out["flat"] + out["adv"]
    return out


def norms(disc: Discretization, v, weights: NormWeights | None = None, matrices: dict | None = None) -> dict:
    """Discrete norms of a global unknown vector or solution.

    Keys: ``nu`` (energy diffusion norm with its boundary seminorm),
    ``nu_boundary``, ``beta_mu`` (advection-reaction norm with its boundary
    seminorm), ``beta_boundary``, ``flat``, ``sharp`` and ``l2`` (L2 norm of
    the cell unknowns).
    """
    mats = norm_matrices(disc, weights) if matrices is None else matrices
    x = v.vector(disc.dofmap) if isinstance(v, DiscreteSolution) else np.asarray(v, dtype=float)

    def q(key):
        return float(x @ (mats[key] @ x))

    root = lambda s: float(np.sqrt(max(s, 0.0)))  # noqa: E731
    nub, bb = q("nu_boundary"), q("beta_boundary")
    return {
        "nu": root(q("nu_cells") + nub),
        "nu_boundary": root(nub),
        "beta_mu": root(q("beta_cells") + bb),
        "beta_boundary": root(bb),
        "flat": root(q("flat")),
        "sharp": root(q("sharp")),
        "l2": root(q("l2")),
    }


def norms_by_quadrature(disc: Discretization, v, weights: NormWeights | None = None) -> dict:
    """Same norms as :func:`norms`, evaluated by integrating pointwise values.

    Functions (reconstructed gradients, face differences, advective
    derivatives) are evaluated at quadrature points and integrated directly,
    instead of through the stored quadratic forms.
    """
    weights = norm_weights(disc) if weights is None else weights
    mesh, k = disc.mesh, disc.k
    qdeg = default_quad_degree(k) if disc.quad_degree is None else disc.quad_degree
    v = _as_solution(v, disc.dofmap)
    inv_tau = 0.0 if np.isinf(weights.tau_c) else 1.0 / weights.tau_c
    nu2 = bm2 = adv2 = l22 = nub2 = bb2 = 0.0
    for c, op in enumerate(disc.local_ops):
        x = v.local_vector(mesh, c)
        layout = op.layout
        q = cell_quadrature(mesh, c, qdeg)
        vals, grads = op.basis.values_and_gradients(q.points)
        nk = layout.n_cell
        p = op.reconstruction @ x
        gp = np.einsum("qid,i->qd", grads, p)
        vt_q = vals[:, :nk] @ x[layout.cell]
        cell_l2 = q.weights @ vt_q ** 2
        l22 += cell_l2
        nu2 += op.nu * (q.weights @ (gp ** 2).sum(axis=1))
        corr = op.correction @ x
        for i, fd in enumerate(op.faces):
            psi, wf = fd.face_values, fd.weights
            vf_q = psi @ x[layout.face(i)]
            diff = vf_q - fd.cell_values @ corr
            # L2(F) projection of the pointwise difference by least squares in the weighted inner product
            coef = np.linalg.lstsq(np.sqrt(wf)[:, None] * psi, np.sqrt(wf) * diff, rcond=None)[0]
            proj = psi @ coef
            nu2 += op.nu / fd.h * (wf @ proj ** 2)
            jump = vf_q - fd.cell_values[:, :nk] @ x[layout.cell]
            bm2 += 0.5 * (wf @ (fd.coef_abs * jump ** 2))
            if fd.boundary:
                nub2 += fd.nu_face / fd.h * (wf @ vf_q ** 2)
                bb2 += 0.5 * (wf @ (fd.coef_abs * vf_q ** 2))
        bm2 += inv_tau * cell_l2
        if weights.beta_c > 0:
            g_q = vals[:, :nk] @ (op.adv_derivative @ x)
            adv2 += op.h / weights.beta_c * (q.weights @ g_q ** 2)
    flat2 = nu2 + nub2 + bm2 + bb2
    root = lambda s: float(np.sqrt(max(s, 0.0)))  # noqa: E731
    return {
        "nu": root(nu2 + nub2),
        "nu_boundary": root(nub2),
        "beta_mu": root(bm2 + bb2),
        "beta_boundary": root(bb2),
        "flat": root(flat2),
        "sharp": root(flat2 + adv2),
        "l2": root(l22),
    }


# ---------------------------------------------------------------------------
# error reports


@dataclass
class ErrorReport:
    meshsize: float
    sharp: float
    flat: float
    nu: float
    beta_mu: float
    l2_potential: float
    rel_sharp: float
    rel_flat: float
    rel_l2_potential: float
    components: dict = field(default_factory=dict)


def error_report(disc: Discretization, u, solution: DiscreteSolution, weights: NormWeights | None = None,
                 interpolant: DiscreteSolution | None = None) -> ErrorReport:
    weights = norm_weights(disc) if weights is None else weights
    dm = disc.dofmap
    ih = interpolate_global(disc, u) if interpolant is None else interpolant
    e = ih.vector(dm) - solution.vector(dm)
    mats = norm_matrices(disc, weights)
    ne = norms(disc, e, matrices=mats)
    nr = norms(disc, ih.vector(dm), matrices=mats)
    for key in ("sharp", "flat", "l2"):
        if nr[key] == 0.0:
            raise ZeroDivisionError("exact solution interpolates to zero; relative errors undefined")
    return ErrorReport(
        meshsize=disc.mesh.meshsize,
        sharp=ne["sharp"], flat=ne["flat"], nu=ne["nu"], beta_mu=ne["beta_mu"], l2_potential=ne["l2"],
        rel_sharp=ne["sharp"] / nr["sharp"], rel_flat=ne["flat"] / nr["flat"], rel_l2_potential=ne["l2"] / nr["l2"],
        components=ne,
    )


# ---------------------------------------------------------------------------
# convergence orders


@dataclass
class EOC:
    slopes: np.ndarray  # per consecutive pair
    fit: float  # least-squares slope of log(error) against log(h)


def eoc(h, errors) -> EOC:
    h = np.asarray(h, dtype=float)
    e = np.asarray(errors, dtype=float)
    if len(h) < 2 or len(h) != len(e):
        raise ValueError("need at least two (h, error) pairs")
    if np.any(e <= 0):
        raise ValueError("errors must be positive")
    if np.any(np.diff(h) >= 0):
        raise ValueError("meshsizes must be strictly decreasing")
    lh, le = np.log(h), np.log(e)
    slopes = np.diff(le) / np.diff(lh)
    fit = float(np.polyfit(lh, le, 1)[0])
    return EOC(slopes, fit)


# ---------------------------------------------------------------------------
# stability and identity probes


def ibp_residual(disc: Discretization, w, v) -> float:
    """Relative residual of the discrete integration-by-parts identity for the advective derivative."""
    mesh, dm = disc.mesh, disc.dofmap
    w = _as_solution(w, dm)
    v = _as_solution(v, dm)
    terms = np.zeros(4)
    scale = 0.0
    for c, op in enumerate(disc.local_ops):
        xw, xv = w.local_vector(mesh, c), v.local_vector(mesh, c)
        cs = op.layout.cell
        nk = op.layout.n_cell
        t0 = xv[cs] @ op.mass @ (op.adv_derivative @ xw)
        t1 = xw[cs] @ op.mass @ (op.adv_derivative @ xv)
        terms[0] += t0 + t1
        scale += abs(t0) + abs(t1)
        for i, fd in enumerate(op.faces):
            sl = op.layout.face(i)
            jw = fd.face_values @ xw[sl] - fd.cell_values[:, :nk] @ xw[cs]
            jv = fd.face_values @ xv[sl] - fd.cell_values[:, :nk] @ xv[cs]
            t2 = fd.weights @ (fd.beta_n * jw * jv)
            terms[1] += t2
            scale += abs(t2)
            if fd.boundary:
                t3 = fd.weights @ (fd.beta_n * (fd.face_values @ xw[sl]) * (fd.face_values @ xv[sl]))
                terms[2] -= t3
                scale += abs(t3)
    return float(abs(terms.sum()) / scale) if scale > 0 else 0.0


@dataclass
class StabilityReport:
    zeta: float
    min_ratio: float
    max_ratio: float
    ibp_residual: float
    samples: int
    weights: NormWeights
    exact_min: float | None = None  # smallest generalized eigenvalue, for small systems

    @property
    def coercive(self) -> bool:
        return self.min_ratio >= self.zeta


def stability_probe(disc: Discretization, samples: int = 1000, seed: int = 0,
                    system: AssembledSystem | None = None, exact_limit: int = 2500) -> StabilityReport:
    """Sample a_h(v, v) / ||v||_flat^2 over random unknown vectors.

    For systems of at most ``exact_limit`` unknowns the infimum of the
    quotient is also computed exactly, as the smallest eigenvalue of the
    symmetric part of a_h relative to the flat-norm matrix.
    """
    system = assemble(disc.mesh, disc.data, disc.k, disc=disc) if system is None else system
    A = system.matrix
    weights = norm_weights(disc)
    rng = np.random.default_rng(seed)
    flat = norm_matrices(disc, weights)["flat"]
    X = rng.standard_normal((system.dofmap.size, samples))
    ratios = np.einsum("is,is->s", X, A @ X) / np.einsum("is,is->s", X, flat @ X)
    ibp = max(
        ibp_residual(disc, rng.standard_normal(system.dofmap.size), rng.standard_normal(system.dofmap.size))
        for _ in range(min(samples, 10))
    )
    exact = None
    if system.dofmap.size <= exact_limit:
        Ad = A.toarray()
        exact = float(sla.eigh(0.5 * (Ad + Ad.T), flat.toarray(), eigvals_only=True, subset_by_index=[0, 0])[0])
    return StabilityReport(weights.zeta, float(ratios.min()), float(ratios.max()), ibp, samples, weights, exact)
