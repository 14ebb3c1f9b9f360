"""Convergence-study driver: assemble, solve and measure errors over a refinement series."""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis import ErrorReport, eoc, error_report, stability_probe
from .assembly import Discretization, assemble, condense, condense_flux_form, hmm_flux_assemble, solve, write_coo
from .config import RunConfig
from .local import truncated_basis
from .mesh import generate_mesh
from .problems import TestProblem

log = logging.getLogger(__name__)

COLUMNS = ("meshsize", "err_sharp", "err_flat", "err_l2_potential", "residual", "n_face_dofs", "seconds")


class RunError(RuntimeError):
    pass


@dataclass
class Row:
    n: int
    k: int
    report: ErrorReport
    residual: float
    n_face_dofs: int
    seconds: float
    jump_error: float | None = None  # worst relative error of the cell-trace jump on I-

    def csv_values(self, relative: bool) -> list:
        r = self.report
        errs = (r.rel_sharp, r.rel_flat, r.rel_l2_potential) if relative else (r.sharp, r.flat, r.l2_potential)
        return [repr(r.meshsize), *(repr(float(e)) for e in errs), repr(self.residual), self.n_face_dofs,
                f"{self.seconds:.3f}"]


@dataclass
class Series:
    k: int
    rows: list = field(default_factory=list)

    def slopes(self, key: str = "sharp", relative: bool = False):
        h = [r.report.meshsize for r in self.rows]
        attr = ("rel_" + key) if relative else key
        return eoc(h, [getattr(r.report, attr) for r in self.rows])


@dataclass
class RunResult:
    config: RunConfig
    problem: TestProblem
    series: dict  # k -> Series
    files: list = field(default_factory=list)

    def summary_lines(self) -> list[str]:
        relative = self.problem.name == "locally_degenerate"
        kind = "relative " if relative else ""
        lines = [f"problem={self.problem.name} family={self.config.family} flux={self.config.flux} "
                 f"penalty={self.config.penalty:g} ({kind}errors)"]
        for k, s in sorted(self.series.items()):
            lines.append(f"k={k}")
            lines.append(f"  {'n':>4} {'h':>10} {'sharp':>11} {'flat':>11} {'l2':>11} {'residual':>9}")
            for r in s.rows:
                rep = r.report
                vals = (rep.rel_sharp, rep.rel_flat, rep.rel_l2_potential) if relative else (rep.sharp, rep.flat, rep.l2_potential)
                lines.append(f"  {r.n:>4} {rep.meshsize:10.4e} {vals[0]:11.4e} {vals[1]:11.4e} {vals[2]:11.4e} "
                             f"{r.residual:9.1e}")
            if len(s.rows) >= 2:
                for key in ("sharp", "flat", "l2_potential"):
                    try:
                        e = s.slopes(key, relative)
                        pairs = " ".join(f"{v:.3f}" for v in e.slopes)
                        lines.append(f"  EOC {key:<13} fit {e.fit:.3f}  pairs {pairs}")
                    except ValueError:
                        lines.append(f"  EOC {key:<13} undefined (errors at solver tolerance)")
        return lines


def jump_errors(disc: Discretization, solution, expected: float) -> float:
    """Worst relative deviation of |u_T1 - u_T2| at the midpoints of I- faces from ``expected``."""
    mesh, k = disc.mesh, disc.k
    faces = disc.classification.i_minus
    if len(faces) == 0:
        return float("nan")
    worst = 0.0
    for f in faces:
        x = mesh.face_midpoints[f][None]
        vals = [(truncated_basis(disc.local_ops[c].basis, k).values(x) @ solution.cell_coeffs[c])[0]
                for c in mesh.face_cells[f]]
        worst = max(worst, abs(abs(vals[0] - vals[1]) / expected - 1.0))
    return worst


def build_mesh_for(config: RunConfig, problem: TestProblem, n: int):
    return problem.prepare(generate_mesh(config.family, n, problem.domain))


def discretize(config: RunConfig, problem: TestProblem, mesh, k: int) -> Discretization:
    return Discretization(mesh, problem.data, k, flux=config.flux, penalty=config.penalty, pe_mode=config.pe_mode,
                          quad_degree=config.quad_degree, orthonormal=config.orthonormal)


def solve_one(config: RunConfig, problem: TestProblem, n: int, k: int) -> tuple[Row, Discretization, object]:
    t0 = time.perf_counter()
    mesh = build_mesh_for(config, problem, n)
    disc = discretize(config, problem, mesh, k)
    system = assemble(mesh, problem.data, k, disc=disc)
    condensed = condense(system)
    sol = solve(condensed)
    seconds = time.perf_counter() - t0
    rep = error_report(disc, problem.exact, sol)
    jump = None
    if problem.name == "locally_degenerate":
        jump = jump_errors(disc, sol, 2 * np.pi ** 2)
    row = Row(n, k, rep, sol.residual, condensed.matrix.shape[0], seconds, jump)
    return row, disc, condensed


def run(config: RunConfig, write: bool = True) -> RunResult:
    problem = config.build_problem()
    if problem.name == "locally_degenerate" and config.flux == "centered":
        raise RunError(
            "the centered flux is not admissible for the locally degenerate problem: "
            "with vanishing diffusion the scheme needs |A|(s) >= a|s| for |s| >= 1 and |A|(s)/s -> 1"
        )
    result = RunResult(config, problem, {})
    relative = problem.name == "locally_degenerate"
    out = Path(config.output)
    if write:
        out.mkdir(parents=True, exist_ok=True)
    for k in config.degrees:
        series = Series(k)
        for n in config.refinements:
            try:
                row, disc, condensed = solve_one(config, problem, n, k)
            except Exception as err:
                raise RunError(f"{problem.name}, {config.family}({n}), k={k}: {err}") from err
            log.info("k=%d n=%d h=%.4e sharp=%.4e (%.2fs)", k, n, row.report.meshsize, row.report.sharp, row.seconds)
            series.rows.append(row)
            if write and config.dump_matrix:
                path = out / f"{problem.name}_{config.family}{n}_k{k}.coo"
                write_coo(condensed.matrix, path)
                result.files.append(path)
        result.series[k] = series
        if write:
            path = out / f"{problem.name}_{config.family}_k{k}.csv"
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(COLUMNS)
                for row in series.rows:
                    w.writerow(row.csv_values(relative))
            result.files.append(path)
    if write:
        path = out / f"{problem.name}_{config.family}_summary.txt"
        path.write_text("\n".join(result.summary_lines()) + "\n")
        result.files.append(path)
    return result


# ---------------------------------------------------------------------------
# pass/fail checks


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def _fit(series: Series, key: str, relative: bool):
    try:
        return series.slopes(key, relative).fit
    except ValueError:
        return float("nan")


def check_run(result: RunResult) -> list[Check]:
    """Residual checks plus the convergence bands the problem is known to satisfy."""
    checks = []
    cfg, prob = result.config, result.problem
    for k, s in sorted(result.series.items()):
        worst = max(r.residual for r in s.rows)
        checks.append(Check(f"residual k={k}", worst < 1e-9, f"max relative residual {worst:.2e}"))
        if prob.polynomial_degree is not None and prob.polynomial_degree <= k:
            err = max(r.report.sharp for r in s.rows)
            checks.append(Check(f"exactness k={k}", err < 1e-8, f"max sharp error {err:.2e}"))
            continue
        if len(s.rows) < 2:
            continue
        if prob.name == "uniform_diffusion" and cfg.nu in (0.0, 1.0):
            lo, hi = (k + 0.7, k + 1.5) if cfg.nu == 1.0 else (k + 0.2, k + 1.0)
            fit = _fit(s, "sharp", False)
            checks.append(Check(f"EOC sharp k={k}", lo <= fit <= hi, f"{fit:.3f} in [{lo:.1f}, {hi:.1f}]"))
        if prob.name == "locally_degenerate":
            for key in ("l2_potential", "sharp"):
                e = [getattr(r.report, "rel_" + key) for r in s.rows]
                mono = all(b < a for a, b in zip(e, e[1:]))
                checks.append(Check(f"monotone {key} k={k}", mono, " > ".join(f"{v:.3e}" for v in e)))
            fit = _fit(s, "sharp", True)
            checks.append(Check(f"EOC sharp k={k}", fit >= k + 0.2, f"{fit:.3f} >= {k + 0.2:.1f}"))
            jump = s.rows[-1].jump_error
            checks.append(Check(f"jump across I- k={k}", jump is not None and jump <= 0.1,
                                f"worst relative deviation {jump:.3e} on the finest mesh"))
    return checks


@dataclass
class ProbeResult:
    checks: list
    lines: list


def probe(config: RunConfig) -> ProbeResult:
    """Coercivity sampling, integration-by-parts identity and (optionally) the flux-form cross-check.

    Runs on the coarsest mesh of the configured series.
    """
    problem = config.build_problem()
    n = config.refinements[0]
    mesh = build_mesh_for(config, problem, n)
    checks, lines = [], []
    for k in config.degrees:
        disc = discretize(config, problem, mesh, k)
        rep = stability_probe(disc, samples=config.samples, seed=config.seed)
        lines.append(f"k={k} {config.family}({n}): zeta={rep.zeta:.4g} min ratio={rep.min_ratio:.4g} "
                     f"max ratio={rep.max_ratio:.4g} ibp residual={rep.ibp_residual:.2e}")
        checks.append(Check(f"coercivity k={k}", rep.coercive, f"min a_h(v,v)/|v|^2 {rep.min_ratio:.4g} >= {rep.zeta:.4g}"))
        checks.append(Check(f"integration by parts k={k}", rep.ibp_residual < 1e-10, f"{rep.ibp_residual:.2e}"))
    if config.hmm:
        checks.append(hmm_check(mesh, problem, config.flux))
    return ProbeResult(checks, lines)


def hmm_check(mesh, problem: TestProblem, flux: str = "upwind", tol: float = 1e-11) -> Check:
    """Compare the condensed k = 0 system (averaged Peclet, strong zero data) with the flux form."""
    from dataclasses import replace

    data = replace(problem.data, mu=0.0)
    if min(data.nu.values()) <= 0:
        return Check("flux-form equivalence", False, "requires strictly positive diffusion")
    disc = Discretization(mesh, data, 0, flux=flux, pe_mode="face_averaged")
    bf = mesh.boundary_faces
    hho = condense(assemble(mesh, data, 0, disc=disc), dirichlet={int(f): np.zeros(1) for f in bf}).matrix
    hmm, _, _ = condense_flux_form(hmm_flux_assemble(mesh, data, flux), bf)
    diff = float(abs(hho - hmm).max())
    return Check("flux-form equivalence", diff <= tol, f"max entry difference {diff:.2e}")
