"""Command line entry point: ``hhoadr {run, probe, dump-matrix, validate-mesh, generate-mesh}``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .assembly import AssemblyError, assemble, condense, solve, write_coo
from .config import ConfigError, load_config
from .mesh import FAMILIES, Domain, MeshError, generate_mesh, load_mesh, save_mesh, validate
from .runner import Check, RunError, build_mesh_for, check_run, discretize, probe, run


def _report(checks: list[Check], check: bool) -> int:
    for c in checks:
        print(c.line())
    if check and not all(c.passed for c in checks):
        return 1
    return 0


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.output:
        cfg.output = Path(args.output)
    result = run(cfg)
    print("\n".join(result.summary_lines()))
    for path in result.files:
        print(f"wrote {path}")
    return _report(check_run(result), args.check) if args.check else 0


def cmd_probe(args) -> int:
    cfg = load_config(args.config)
    if args.samples:
        cfg.samples = args.samples
    res = probe(cfg)
    print("\n".join(res.lines))
    return _report(res.checks, args.check)


def cmd_dump(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.output) if args.output else cfg.output
    out.mkdir(parents=True, exist_ok=True)
    problem = cfg.build_problem()
    n = cfg.refinements[0] if args.n is None else args.n
    mesh = build_mesh_for(cfg, problem, n)
    checks = []
    for k in cfg.degrees:
        disc = discretize(cfg, problem, mesh, k)
        system = assemble(mesh, problem.data, k, disc=disc)
        condensed = condense(system)
        path = out / f"{problem.name}_{cfg.family}{n}_k{k}.coo"
        write_coo(condensed.matrix, path)
        print(f"wrote {path} ({condensed.matrix.shape[0]} face unknowns, {condensed.matrix.nnz} nonzeros)")
        if args.uncondensed:
            full = out / f"{problem.name}_{cfg.family}{n}_k{k}_full.coo"
            write_coo(system.matrix, full)
            print(f"wrote {full}")
        sol = solve(condensed)
        checks.append(Check(f"residual k={k}", sol.residual < 1e-9, f"{sol.residual:.2e}"))
    return _report(checks, args.check) if args.check else 0


def cmd_validate(args) -> int:
    mesh = load_mesh(args.mesh)
    rep = validate(mesh)
    print("\n".join(rep.lines()))
    checks = [
        Check("star-shaped cells", rep.star_shaped, f"{len(rep.non_star_cells)} offending cells"),
        Check("h_F <= h_T", rep.face_ratio_ok, f"worst ratio {rep.worst_face_ratio:.4g}"),
    ]
    return _report(checks, args.check) if args.check else 0


def cmd_generate(args) -> int:
    lims = [float(t) for t in args.domain.replace(",", " ").split()] if args.domain else []
    hole = tuple(float(t) for t in args.hole.replace(",", " ").split()) if args.hole else None
    domain = Domain(*lims, hole=hole) if lims else Domain(hole=hole)
    mesh = generate_mesh(args.family, args.n, domain)
    save_mesh(mesh, args.output)
    print(f"wrote {args.output}: {mesh.n_cells} cells, {mesh.n_faces} faces")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hhoadr", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="convergence study; writes CSV files and a summary")
    r.add_argument("config")
    r.add_argument("-o", "--output", help="override the output directory")
    r.add_argument("--check", action="store_true", help="exit nonzero if a residual or rate check fails")
    r.set_defaults(func=cmd_run)

    pr = sub.add_parser("probe", help="coercivity sampling and identity checks on the coarsest mesh")
    pr.add_argument("config")
    pr.add_argument("--samples", type=int)
    pr.add_argument("--check", action="store_true")
    pr.set_defaults(func=cmd_probe)

    d = sub.add_parser("dump-matrix", help="write condensed matrices in coordinate format")
    d.add_argument("config")
    d.add_argument("-o", "--output")
    d.add_argument("-n", type=int, help="mesh resolution (default: first refinement)")
    d.add_argument("--uncondensed", action="store_true", help="also write the cell + face matrix")
    d.add_argument("--check", action="store_true")
    d.set_defaults(func=cmd_dump)

    v = sub.add_parser("validate-mesh", help="mesh regularity report for a mesh file")
    v.add_argument("mesh")
    v.add_argument("--check", action="store_true")
    v.set_defaults(func=cmd_validate)

    g = sub.add_parser("generate-mesh", help="write a generated mesh in the text format")
    g.add_argument("family", choices=sorted(FAMILIES))
    g.add_argument("n", type=int)
    g.add_argument("output")
    g.add_argument("--domain", help="xmin,xmax,ymin,ymax")
    g.add_argument("--hole", help="xmin,xmax,ymin,ymax of a rectangular hole")
    g.set_defaults(func=cmd_generate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, MeshError, AssemblyError, RunError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
