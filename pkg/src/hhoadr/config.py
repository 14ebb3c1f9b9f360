"""Run configuration read from INI-style files.

Schema (all sections optional except ``[run]``)::

    [run]
    problem = uniform_diffusion      ; uniform_diffusion | locally_degenerate | custom
    output = results                 ; directory for CSV files

    [mesh]
    family = triangular              ; cartesian | triangular | hexagonal | kershaw
    refinements = 8, 16, 32, 64      ; strictly increasing resolutions

    [scheme]
    degrees = 0, 1, 2
    flux = upwind                    ; centered | upwind | theta_upwind | scharfetter_gummel
    penalty = 1.0
    pe_mode = pointwise              ; pointwise | face_averaged
    quad_degree =                    ; empty for the default 2(k+1)+2
    orthonormal = false

    [problem]
    nu = 1.0                         ; uniform_diffusion and custom
    mu = 1.0                         ; reaction (locally_degenerate default 1e-6)
    u = x*y                          ; custom only, sympy syntax in x and y
    beta = 1/2 - y, x - 1/2          ; custom only
    domain = 0, 1, 0, 1              ; custom only

    [checks]
    stability_probe = false
    samples = 1000
    seed = 0
    hmm = false
    dump_matrix = false
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .fluxes import FLUXES
from .mesh import FAMILIES, Domain, UNIT_SQUARE
from .problems import PROBLEMS, TestProblem, locally_degenerate, manufactured, uniform_diffusion


class ConfigError(ValueError):
    pass


def _ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"expected a list of integers, got {text!r}") from None


@dataclass
class RunConfig:
    problem: str = "uniform_diffusion"
    family: str = "triangular"
    refinements: list = field(default_factory=lambda: [8, 16, 32, 64])
    degrees: list = field(default_factory=lambda: [0, 1, 2, 3])
    flux: str = "upwind"
    penalty: float = 1.0
    pe_mode: str = "pointwise"
    quad_degree: int | None = None
    orthonormal: bool = False
    nu: float = 1.0
    mu: float | None = None
    u: str | None = None
    beta: tuple = ("0", "0")
    domain: Domain = UNIT_SQUARE
    output: Path = Path("results")
    stability_probe: bool = False
    samples: int = 1000
    seed: int = 0
    hmm: bool = False
    dump_matrix: bool = False

    def __post_init__(self):
        if self.problem not in PROBLEMS and self.problem != "custom":
            raise ConfigError(f"unknown problem {self.problem!r}")
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown mesh family {self.family!r}")
        if self.flux not in FLUXES:
            raise ConfigError(f"unknown flux {self.flux!r}")
        if self.pe_mode not in ("pointwise", "face_averaged"):
            raise ConfigError(f"unknown Peclet mode {self.pe_mode!r}")
        if not self.refinements or any(b <= a for a, b in zip(self.refinements, self.refinements[1:])):
            raise ConfigError("refinements must be a nonempty, strictly increasing list")
        if min(self.refinements) < 1:
            raise ConfigError("refinements must be positive")
        if not self.degrees or min(self.degrees) < 0:
            raise ConfigError("degrees must be a nonempty list of nonnegative integers")
        if self.penalty <= 0:
            raise ConfigError("penalty must be positive")
        if self.problem == "custom" and not self.u:
            raise ConfigError("custom problem needs an exact solution 'u'")

    def build_problem(self) -> TestProblem:
        if self.problem == "uniform_diffusion":
            return uniform_diffusion(self.nu)
        if self.problem == "locally_degenerate":
            return locally_degenerate(1e-6 if self.mu is None else self.mu)
        return manufactured(self.u, nu=self.nu, beta=self.beta, mu=1.0 if self.mu is None else self.mu,
                            domain=self.domain)


def load_config(path) -> RunConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    if not parser.read(path):
        raise ConfigError(f"cannot read config file {path}")
    return from_parser(parser, base=Path(path).parent)


def from_parser(parser: configparser.ConfigParser, base: Path = Path(".")) -> RunConfig:
    def get(section, key, default=None):
        if parser.has_option(section, key):
            value = parser.get(section, key).strip()
            return value if value != "" else default
        return default

    def boolean(section, key, default):
        if parser.has_option(section, key) and parser.get(section, key).strip():
            return parser.getboolean(section, key)
        return default

    kw = {}
    if get("run", "problem"):
        kw["problem"] = get("run", "problem")
    out = get("run", "output")
    kw["output"] = base / out if out else base / "results"
    if get("mesh", "family"):
        kw["family"] = get("mesh", "family")
    if get("mesh", "refinements"):
        kw["refinements"] = _ints(get("mesh", "refinements"))
    if get("scheme", "degrees"):
        kw["degrees"] = _ints(get("scheme", "degrees"))
    if get("scheme", "flux"):
        kw["flux"] = get("scheme", "flux")
    if get("scheme", "pe_mode"):
        kw["pe_mode"] = get("scheme", "pe_mode")
    try:
        if get("scheme", "penalty"):
            kw["penalty"] = float(get("scheme", "penalty"))
        if get("scheme", "quad_degree"):
            kw["quad_degree"] = int(get("scheme", "quad_degree"))
        if get("problem", "nu"):
            kw["nu"] = float(get("problem", "nu"))
        if get("problem", "mu"):
            kw["mu"] = float(get("problem", "mu"))
        if get("checks", "samples"):
            kw["samples"] = int(get("checks", "samples"))
        if get("checks", "seed"):
            kw["seed"] = int(get("checks", "seed"))
        if get("problem", "domain"):
            lims = [float(t) for t in get("problem", "domain").replace(",", " ").split()]
            kw["domain"] = Domain(*lims)
        kw["orthonormal"] = boolean("scheme", "orthonormal", False)
        kw["stability_probe"] = boolean("checks", "stability_probe", False)
        kw["hmm"] = boolean("checks", "hmm", False)
        kw["dump_matrix"] = boolean("checks", "dump_matrix", False)
    except ValueError as err:
        raise ConfigError(str(err)) from None
    if get("problem", "u"):
        kw["u"] = get("problem", "u")
    if get("problem", "beta"):
        parts = [t.strip() for t in get("problem", "beta").split(",")]
        if len(parts) != 2:
            raise ConfigError("beta needs two comma-separated components")
        kw["beta"] = tuple(parts)
    return RunConfig(**kw)
