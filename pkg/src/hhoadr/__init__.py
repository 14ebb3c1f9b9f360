"""Hybrid high-order discretization of advection-diffusion-reaction problems on polygonal meshes."""
from .assembly import (
    AssembledSystem,
    CondensedSystem,
    DiscreteSolution,
    Discretization,
    assemble,
    condense,
    hmm_flux_assemble,
    solve,
    solve_uncondensed,
)
from .data import PhysicalData, classify
from .fluxes import FLUXES, get_flux
from .mesh import Domain, Mesh, MeshError, generate_mesh, load_mesh, save_mesh, validate

__all__ = [
    "AssembledSystem", "CondensedSystem", "DiscreteSolution", "Discretization", "assemble", "condense",
    "hmm_flux_assemble", "solve", "solve_uncondensed", "PhysicalData", "classify", "FLUXES", "get_flux",
    "Domain", "Mesh", "MeshError", "generate_mesh", "load_mesh", "save_mesh", "validate",
]
