"""2D hybridizable discontinuous Galerkin solver for dynamic linear
thermo-poroelasticity.

Volume unknowns are the three velocity-like vector fields (solid velocity,
Darcy velocity, heat flux) at degree k+1 together with effective stress,
pore pressure and temperature at degree k; single-valued numerical traces
live on the mesh skeleton at degree k+1. Element unknowns are condensed
onto the skeleton at every implicit Crank-Nicolson step.
"""

from tpwave.mesh import Mesh, build_structured_mesh, refine_uniform, locate_point
from tpwave.materials import (
    MaterialParameters,
    CoefficientMatrices,
    MaterialField,
    material_library,
)

__version__ = "0.1.0"

__all__ = [
    "Mesh",
    "build_structured_mesh",
    "refine_uniform",
    "locate_point",
    "MaterialParameters",
    "CoefficientMatrices",
    "MaterialField",
    "material_library",
    "__version__",
]
