"""Periodic homogenization of elastic porous media with a viscous pore fluid.

Modules: ``microcell`` (voxel cells and connectivity), ``scaling``
(parameter limits and regime selection), ``grid``/``solvers``/``tensors``
(discrete infrastructure), ``cell_elastic``, ``cell_fluid`` and
``visco_cell`` (cell problems and effective coefficients), ``macro``
(macroscale demonstration solvers) and ``cli``.
"""

from .cell_elastic import (EffectiveElasticSet, ElasticCellHomogenizer,
                           assemble_effective_elastic, solve_elastic_cell)
from .cell_fluid import (PotentialPermeability, StokesPermeability, kernel_B1, kernel_integral,
                         permeability_B2, solve_neumann_B3, solve_steady_stokes,
                         solve_unsteady_stokes)
from .macro import solve_darcy_steady, solve_darcy_transient, solve_lame_static
from .microcell import (VoxelCell, analyze_connectivity, cube_inclusion, fluid_matrix,
                        laminate, load_geometry, solid_only)
from .scaling import (ExtReal, LimitSet, Regime, RegimeClassifier, ScalingSpec,
                      apply_tau_renormalization, check_admissible, classify, derive_limits,
                      limit_of)
from .visco_cell import (ViscoBindings, ViscoCellHomogenizer, assemble_visco_kernels,
                         solve_visco_evolution)

__version__ = "0.1.0"
