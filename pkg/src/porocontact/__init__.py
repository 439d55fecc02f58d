"""Finite elements for Biot poroelasticity with frictionless unilateral contact.

Displacements are P1 vectors, pressures P0 and Darcy fluxes RT0 on triangles.
Each backward-Euler step is solved by the fixed-stress splitting: a stabilized
mixed flow solve followed by a contact-constrained elasticity solve.
"""
from .assembly import Loads, MaterialParams
from .contact import ContactOptions, solve_contact_vi
from .fixed_stress import (
    Discretization,
    FixedStressSolver,
    State,
    beta,
    contraction_bound,
    initial_state,
    run_simulation,
)
from .mesh import Mesh, Tag, build_rect_mesh, read_mesh, write_mesh
from .oracle import monolithic_step

__version__ = "0.1.0"

__all__ = [
    "Loads", "MaterialParams", "ContactOptions", "solve_contact_vi", "Discretization", "FixedStressSolver",
    "State", "beta", "contraction_bound", "initial_state", "run_simulation", "Mesh", "Tag",
    "build_rect_mesh", "read_mesh", "write_mesh", "monolithic_step",
]
