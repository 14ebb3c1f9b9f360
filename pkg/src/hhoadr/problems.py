"""Built-in manufactured test problems and symbolic derivation of their forcing."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import sympy as sp

from .data import PhysicalData
from .mesh import Domain, Mesh, UNIT_SQUARE

X1, X2 = sp.symbols("x y", real=True)
_NAMES = {"x": X1, "y": X2}


def parse(expr):
    """Sympy expression in the real symbols ``x`` and ``y``."""
    return sp.sympify(expr, locals=_NAMES)


@dataclass
class TestProblem:
    """A domain, coefficients and a (possibly subdomain-wise) exact solution.

    ``exact(points, tag)`` evaluates the solution branch of subdomain ``tag``.
    ``tag_cells`` assigns subdomain tags to a mesh generated on ``domain``.
    """

    __test__ = False  # not a pytest class

    name: str
    domain: Domain
    data: PhysicalData
    exact: Callable
    tag_cells: Callable | None = None
    polynomial_degree: int | None = None  # degree of the exact solution when polynomial

    def prepare(self, mesh: Mesh) -> Mesh:
        return mesh if self.tag_cells is None else mesh.with_tags(self.tag_cells(mesh))


def _lambdify(expr):
    f = sp.lambdify((X1, X2), expr, "numpy")

    def ev(x, tag=None):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(f(x[:, 0], x[:, 1]), dtype=float), (len(x),)).copy()

    return ev


def _vector(exprs):
    comps = [_lambdify(e) for e in exprs]

    def ev(x):
        return np.column_stack([c(x) for c in comps])

    return ev


def _jacobian(exprs):
    entries = [[_lambdify(sp.diff(e, s)) for s in (X1, X2)] for e in exprs]

    def ev(x):
        out = np.empty((len(x), 2, 2))
        for i in range(2):
            for j in range(2):
                out[:, i, j] = entries[i][j](x)
        return out

    return ev


def derive_forcing(u, nu, beta, mu):
    """Symbolic  f = -nu Lap u + beta . grad u + mu u  (div beta = 0 assumed) and g = u.

    Arguments are sympy expressions in ``x`` and ``y`` (``nu`` constant).
    Returns the evaluators ``(f, g)`` taking ``(points, tag)``.
    """
    u, nu, mu = parse(u), parse(nu), parse(mu)
    beta = [parse(b) for b in beta]
    div = sp.simplify(sp.diff(beta[0], X1) + sp.diff(beta[1], X2))
    if div != 0:
        raise ValueError(f"velocity field is not divergence free (div beta = {div})")
    f = -nu * (sp.diff(u, X1, 2) + sp.diff(u, X2, 2)) + beta[0] * sp.diff(u, X1) + beta[1] * sp.diff(u, X2) + mu * u
    return _lambdify(sp.expand(f)), _lambdify(u)


def manufactured(u: str, nu: float = 1.0, beta=("0", "0"), mu: str | float = 1.0, domain: Domain = UNIT_SQUARE,
                 name: str = "custom") -> TestProblem:
    """Single-subdomain problem from expression strings in ``x`` and ``y``."""
    u_e = parse(u)
    beta_e = [parse(b) for b in beta]
    mu_e = parse(mu)
    f, g = derive_forcing(u_e, nu, beta_e, mu_e)
    mu_value = float(mu_e) if mu_e.is_number else _lambdify(mu_e)
    data = PhysicalData(nu={1: float(nu)}, beta=_vector(beta_e), mu=mu_value, f=f, g=g,
                        beta_grad=_jacobian(beta_e), name=name)
    degree = None
    if u_e.is_polynomial(X1, X2):
        degree = int(sp.Poly(u_e, X1, X2).total_degree()) if u_e != 0 else 0
    return TestProblem(name, domain, data, g, polynomial_degree=degree)


def uniform_diffusion(nu: float = 1.0) -> TestProblem:
    """Rotating velocity on the unit square with u = sin(pi x) sin(pi y)."""
    return manufactured("sin(pi*x)*sin(pi*y)", nu=nu, beta=("1/2 - y", "x - 1/2"), mu=1,
                        name="uniform_diffusion")


# ---------------------------------------------------------------------------
# locally degenerate diffusion on a square frame

FRAME = Domain(-1.0, 1.0, -1.0, 1.0, hole=(-0.5, 0.5, -0.5, 0.5))
DIFFUSIVE, NONDIFFUSIVE = 1, 2


def _angle(x, tag):
    """Polar angle in (0, pi) on the upper half and (pi, 2 pi) on the lower half."""
    a = np.arctan2(np.abs(x[:, 1]), x[:, 0])
    return a if tag == DIFFUSIVE else 2 * np.pi - a


def _azimuthal(x):
    r2 = (x ** 2).sum(axis=1)
    return np.column_stack([-x[:, 1] / r2, x[:, 0] / r2])


def _azimuthal_grad(x):
    r2 = (x ** 2).sum(axis=1)
    a, b = x[:, 0], x[:, 1]
    out = np.empty((len(x), 2, 2))
    out[:, 0, 0] = 2 * a * b / r2 ** 2
    out[:, 0, 1] = (b ** 2 - a ** 2) / r2 ** 2
    out[:, 1, 0] = (b ** 2 - a ** 2) / r2 ** 2
    out[:, 1, 1] = -2 * a * b / r2 ** 2
    return out


def locally_degenerate(mu: float = 1e-6) -> TestProblem:
    """Diffusion pi on the upper half of the frame, none below; azimuthal velocity."""
    pi = np.pi

    def exact(x, tag):
        t = _angle(np.asarray(x, dtype=float), tag)
        return (t - pi) ** 2 if tag == DIFFUSIVE else 3 * pi * (t - pi)

    def forcing(x, tag):
        x = np.asarray(x, dtype=float)
        t = _angle(x, tag)
        r2 = (x ** 2).sum(axis=1)
        if tag == DIFFUSIVE:
            return -2 * pi / r2 + 2 * (t - pi) / r2 + mu * (t - pi) ** 2
        return 3 * pi / r2 + mu * 3 * pi * (t - pi)

    def tags(mesh: Mesh):
        return np.where(mesh.cell_centroids[:, 1] > 0, DIFFUSIVE, NONDIFFUSIVE)

    data = PhysicalData(nu={DIFFUSIVE: pi, NONDIFFUSIVE: 0.0}, beta=_azimuthal, mu=mu, f=forcing, g=exact,
                        beta_grad=_azimuthal_grad, name="locally_degenerate")
    return TestProblem("locally_degenerate", FRAME, data, exact, tag_cells=tags)


PROBLEMS = {"uniform_diffusion": uniform_diffusion, "locally_degenerate": locally_degenerate}
