import numpy as np
import pytest

from hhoadr.analysis import (
    eoc,
    error_report,
    ibp_residual,
    interpolate_global,
    norm_matrices,
    norm_weights,
    norms,
    norms_by_quadrature,
    stability_probe,
)
from hhoadr.assembly import Discretization, assemble, condense, solve
from hhoadr.basis import face_basis
from hhoadr.data import PhysicalData
from hhoadr.local import truncated_basis
from hhoadr.mesh import cartesian, hexagonal, kershaw, triangular
from hhoadr.problems import DIFFUSIVE, FRAME, locally_degenerate, uniform_diffusion
from hhoadr.quadrature import face_quadrature

ROT = lambda x: np.column_stack([0.5 - x[:, 1], x[:, 0] - 0.5])  # noqa: E731
ZERO = lambda x: np.zeros((len(x), 2))  # noqa: E731


def frame_disc(n, k):
    problem = locally_degenerate()
    mesh = problem.prepare(triangular(n, FRAME))
    return problem, Discretization(mesh, problem.data, k)


def test_norm_weights_uniform_problem():
    w = norm_weights(Discretization(cartesian(4), uniform_diffusion(1.0).data, 1))
    assert abs(w.beta_c - np.sqrt(0.5)) < 1e-12
    assert abs(w.l_beta - 1.0) < 1e-12
    assert abs(w.tau_c - 1.0) < 1e-12
    assert w.zeta == 0.5
    assert w.resolves_velocity and w.not_reaction_dominated


def test_norms_vanish_at_zero():
    disc = Discretization(hexagonal(3), uniform_diffusion(1e-3).data, 1)
    out = norms(disc, np.zeros(disc.dofmap.size))
    assert all(v == 0.0 for v in out.values())


def test_norms_without_velocity():
    disc = Discretization(kershaw(3), PhysicalData(nu={1: 1.0}, beta=ZERO, mu=1.0), 1)
    rng = np.random.default_rng(0)
    v = rng.standard_normal(disc.dofmap.size)
    out = norms(disc, v)
    assert out["sharp"] == out["flat"]
    assert out["beta_boundary"] == 0.0
    # tau_c = 1 here, so the advection-reaction part is the cell L2 norm
    assert abs(out["beta_mu"] - out["l2"]) <= 1e-14 * out["l2"]


@pytest.mark.parametrize("factory", [cartesian, triangular, hexagonal, kershaw])
@pytest.mark.parametrize("k", [0, 1, 2])
def test_norms_two_ways(factory, k):
    disc = Discretization(factory(3), uniform_diffusion(1.0).data, k, flux="scharfetter_gummel")
    rng = np.random.default_rng(k)
    v = rng.standard_normal(disc.dofmap.size)
    a, b = norms(disc, v), norms_by_quadrature(disc, v)
    for key in a:
        assert abs(a[key] - b[key]) <= 1e-11 * max(a[key], 1e-300), key


def test_norm_ordering():
    disc = Discretization(triangular(3), uniform_diffusion(1e-3).data, 1)
    v = np.random.default_rng(1).standard_normal(disc.dofmap.size)
    n = norms(disc, v)
    assert n["sharp"] >= n["flat"] >= max(n["nu"], n["beta_mu"])
    assert n["nu"] >= n["nu_boundary"] and n["beta_mu"] >= n["beta_boundary"]


@pytest.mark.parametrize("case", ["nu1", "nu0", "degenerate"])
def test_norm_kernel_is_trivial(case):
    if case == "degenerate":
        _, disc = frame_disc(4, 1)
    else:
        nu = 1.0 if case == "nu1" else 0.0
        disc = Discretization(triangular(3), uniform_diffusion(nu).data, 1)
    mats = norm_matrices(disc)
    for key in ("flat", "sharp"):
        M = mats[key].toarray()
        ev = np.linalg.eigvalsh(0.5 * (M + M.T))
        assert ev[0] > 1e-10 * ev[-1]


def test_interpolation_ignores_side_for_continuous_solution():
    mesh = cartesian(4)
    mesh2 = mesh.with_tags(np.where(mesh.cell_centroids[:, 0] < 0.5, 1, 2))
    u = lambda x: np.exp(x[:, 0]) * np.sin(2 * x[:, 1])  # noqa: E731
    a = interpolate_global(Discretization(mesh, PhysicalData(nu={1: 1.0}, beta=ROT), 2), u)
    b = interpolate_global(Discretization(mesh2, PhysicalData(nu={1: 1.0, 2: 3.0}, beta=ROT), 2), u)
    assert np.abs(a.face_coeffs - b.face_coeffs).max() < 1e-12


def test_interpolation_of_polynomials_matches_traces():
    disc = Discretization(hexagonal(3), uniform_diffusion(1.0).data, 2)
    u = lambda x: 1 + x[:, 0] - 3 * x[:, 0] * x[:, 1] + x[:, 1] ** 2  # noqa: E731
    ih = interpolate_global(disc, u)
    mesh = disc.mesh
    for f in range(mesh.n_faces):
        for c in mesh.face_cells[f]:
            if c < 0:
                continue
            q = face_quadrature(mesh, f, 6)
            trace = truncated_basis(disc.local_ops[c].basis, 2).values(q.points) @ ih.cell_coeffs[c]
            face = face_basis(mesh, f, 2).values(q.points) @ ih.face_coeffs[f]
            assert np.abs(trace - face).max() < 1e-12


def test_interpolation_takes_diffusive_branch_on_outflow_interface():
    problem, disc = frame_disc(8, 0)
    ih = interpolate_global(disc, problem.exact)
    faces = disc.classification.i_minus
    assert len(faces) > 0
    mesh = disc.mesh
    for f in faces:
        x0, x1 = mesh.vertices[mesh.faces[f]][:, 0]
        # (theta - pi)^2 = pi^2 on the positive x axis; the other branch gives 3 pi (2 pi - pi) = 3 pi^2
        assert abs(ih.face_coeffs[f, 0] - np.pi ** 2) < 1e-12
        assert min(x0, x1) >= 0.5 - 1e-12


def test_error_report_of_interpolate_is_zero():
    problem = uniform_diffusion(1.0)
    disc = Discretization(triangular(4), problem.data, 1)
    ih = interpolate_global(disc, problem.exact)
    rep = error_report(disc, problem.exact, ih)
    assert rep.sharp == 0.0 and rep.flat == 0.0 and rep.l2_potential == 0.0


def test_error_report_zero_normalizer():
    disc = Discretization(cartesian(2), PhysicalData(nu={1: 1.0}, beta=ROT), 0)
    sol = solve(condense(assemble(disc.mesh, disc.data, 0, disc=disc)))
    with pytest.raises(ZeroDivisionError):
        error_report(disc, lambda x: np.zeros(len(x)), sol)


@pytest.mark.parametrize("nu,band", [(1.0, (1.6, 2.4)), (0.0, (1.1, 1.9))])
def test_two_mesh_slope(nu, band):
    problem = uniform_diffusion(nu)
    hs, errs = [], []
    for n in (16, 32):
        disc = Discretization(triangular(n), problem.data, 1)
        sol = solve(condense(assemble(disc.mesh, problem.data, 1, disc=disc)))
        rep = error_report(disc, problem.exact, sol)
        hs.append(rep.meshsize)
        errs.append(rep.sharp)
    s = eoc(hs, errs).slopes[0]
    assert band[0] <= s <= band[1]


def test_eoc_examples():
    h = np.array([0.5, 0.25, 0.125, 0.0625])
    r = eoc(h, 3.0 * h ** 2)
    assert abs(r.fit - 2.0) < 1e-12 and np.allclose(r.slopes, 2.0, atol=1e-12)
    assert abs(eoc(h, 0.1 * h ** 3.5).fit - 3.5) < 1e-12
    with pytest.raises(ValueError):
        eoc(h, np.array([1.0, 0.0, 1.0, 1.0]))
    with pytest.raises(ValueError):
        eoc(h[::-1], h)
    with pytest.raises(ValueError):
        eoc([0.1], [1.0])


def test_eoc_fit_follows_pairs():
    h = np.array([0.4, 0.2, 0.1, 0.05])
    e = h ** 2 * (1 + 0.3 * h)
    r = eoc(h, e)
    assert r.slopes.min() - 1e-12 <= r.fit <= r.slopes.max() + 1e-12


def test_probe_pure_diffusion_coercive():
    disc = Discretization(hexagonal(3), PhysicalData(nu={1: 1.0}, beta=ZERO, mu=1.0), 1)
    rep = stability_probe(disc, samples=1000)
    assert rep.coercive
    assert rep.min_ratio >= rep.exact_min - 1e-12


def test_exact_infimum_depends_on_penalty():
    # random samples miss the worst direction; the exact infimum needs a large enough penalty
    data = PhysicalData(nu={1: 1.0}, beta=ZERO, mu=1.0)
    lows = [stability_probe(Discretization(hexagonal(3), data, 1, penalty=p), samples=10).exact_min
            for p in (1.0, 4.0, 8.0)]
    assert lows[0] < 0 < lows[1] < lows[2]
    assert lows[2] >= 0.5


def test_probe_centered_nondegenerate_positive():
    disc = Discretization(triangular(3), uniform_diffusion(1.0).data, 1, flux="centered", penalty=4.0)
    rep = stability_probe(disc, samples=500)
    assert rep.min_ratio > 0 and rep.exact_min > 0


def test_exact_minimum_matches_dense_eigenvalue():
    disc = Discretization(cartesian(2), uniform_diffusion(1e-3).data, 0, penalty=4.0)
    rep = stability_probe(disc, samples=50)
    A = assemble(disc.mesh, disc.data, 0, disc=disc).matrix.toarray()
    B = norm_matrices(disc)["flat"].toarray()
    L = np.linalg.cholesky(B)
    Li = np.linalg.inv(L)
    ev = np.linalg.eigvalsh(Li @ (0.5 * (A + A.T)) @ Li.T)
    assert abs(rep.exact_min - ev[0]) < 1e-10 * abs(ev).max()


@pytest.mark.parametrize("factory", [cartesian, hexagonal, kershaw])
@pytest.mark.parametrize("k", [0, 1, 2])
def test_integration_by_parts(factory, k):
    disc = Discretization(factory(8 if factory is cartesian else 3), uniform_diffusion(1.0).data, k)
    rng = np.random.default_rng(2)
    for _ in range(3):
        w, v = rng.standard_normal((2, disc.dofmap.size))
        assert ibp_residual(disc, w, v) < 1e-10


def test_face_unknowns_track_diffusive_trace_on_outflow_interface():
    errs = []
    for n in (8, 16, 32):
        problem, disc = frame_disc(n, 0)
        sol = solve(condense(assemble(disc.mesh, problem.data, 0, disc=disc)))
        faces = disc.classification.i_minus
        errs.append(np.abs(sol.face_coeffs[faces, 0] - np.pi ** 2).max())
        assert problem.exact(disc.mesh.face_midpoints[faces], DIFFUSIVE) == pytest.approx(np.pi ** 2)
    assert errs[2] < errs[1] < errs[0]
