"""Ginzburg-Landau vortices of tangent vector fields on closed triangulated surfaces."""

from __future__ import annotations

__version__ = "0.1.0"

from .surface import SurfaceMesh, SurfacePoint, load_mesh  # noqa: E402
from .meshgen import preset  # noqa: E402
from .connection import FrameField, TangentVectorField, build_frame  # noqa: E402
from .topology import harmonic_basis, homology_basis  # noqa: E402
from .potential import GreenOperator, psi, psi0  # noqa: E402
from .canonical import VortexConfiguration, canonical_field, flux_lattice, localize, vorticity  # noqa: E402
from .renorm import W_formula, W_limit, minimize_W, renormalized_energy  # noqa: E402
from .profile import DEFAULT_F, PotentialF, I_F, gamma_F  # noqa: E402
from .glsolver import expansion_experiment, minimize_E, recovery_sequence  # noqa: E402

__all__ = [
    "__version__",
    "SurfaceMesh",
    "SurfacePoint",
    "load_mesh",
    "preset",
    "FrameField",
    "TangentVectorField",
    "build_frame",
    "harmonic_basis",
    "homology_basis",
    "GreenOperator",
    "psi",
    "psi0",
    "VortexConfiguration",
    "canonical_field",
    "flux_lattice",
    "localize",
    "vorticity",
    "W_formula",
    "W_limit",
    "minimize_W",
    "renormalized_energy",
    "DEFAULT_F",
    "PotentialF",
    "I_F",
    "gamma_F",
    "expansion_experiment",
    "minimize_E",
    "recovery_sequence",
]
