"""Volume minimization of voxel structures under thermo-elastic compliance
and linear buckling constraints."""

__version__ = "0.1.0"

from .model import (
    Design,
    FacePressure,
    LoadCase,
    Material,
    ModelError,
    PointLoad,
    VoxelGrid,
    build_grid,
    default_frozen_mask,
    volume_fraction,
)
from .elements import (
    ElementKernels,
    build_kernels,
    element_geometric_stiffness,
    element_thermal_load,
    elasticity_matrix,
    stress_block_gradient,
    thermal_strain,
)
from .fem import (
    Operators,
    Problem,
    SolveStats,
    SolverError,
    SolverOptions,
    compliance,
    solve_static,
    total_force,
)

__all__ = [name for name in dir() if not name.startswith("_")]
