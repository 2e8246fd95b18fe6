"""Finite-element integrator for coupled magnetization and spin-accumulation
dynamics in ferromagnetic multilayers.

The time integrator is decoupled and linearly implicit: each step solves one
linear system for the discrete time derivative of the magnetization in the
nodewise tangent space, updates the magnetization without renormalizing, and
then solves one linear system for the spin accumulation with the projected
magnetization as a bounded coefficient.
"""
from .config import SimConfig, load_config, parse_config
from .diagnostics import (EnergyLedger, dense_oracle_step, energy,
                          energy_estimate_monitor, nodewise_modulus_check,
                          step_identity_check, weak_residual_probe)
from .driver import (RunResult, SimState, default_trilayer_config, initialize,
                     refinement_study, run)
from .errors import (ConfigurationError, ConstraintError, DomainError,
                     MeshError, SolverError)
from .fem import (FemWorkspace, NodalField3, QuadratureRule, Support, assemble,
                  discrete_norm_check, element_mass, element_stiffness,
                  nodal_interpolate, nodal_projection)
from .fields import (PiOperator, SourceField, apply_pi, pi_uniaxial, pi_zero,
                     sample_source, verify_pi_bound)
from .llg import (LlgSystem, TangentBasis, assemble_llg_system,
                  build_tangent_basis, solve_v, update_m)
from .mesh import (FacetTag, Region, TetMesh, build_multilayer_mesh, mesh_size,
                   validate_mesh)
from .params import MaterialParams, SolverConfig
from .scaling import (INTRINSIC, NondimParams, SIParams, intrinsic_length,
                      nondimensionalize, redimensionalize_time)
from .spin import SpinSystem, assemble_spin_form, assemble_spin_rhs, solve_s

__version__ = "0.1.0"

__all__ = [
    "SimConfig", "load_config", "parse_config",
    "EnergyLedger", "dense_oracle_step", "energy", "energy_estimate_monitor",
    "nodewise_modulus_check", "step_identity_check", "weak_residual_probe",
    "RunResult", "SimState", "default_trilayer_config", "initialize",
    "refinement_study", "run",
    "ConfigurationError", "ConstraintError", "DomainError", "MeshError",
    "SolverError",
    "FemWorkspace", "NodalField3", "QuadratureRule", "Support", "assemble",
    "discrete_norm_check", "element_mass", "element_stiffness",
    "nodal_interpolate", "nodal_projection",
    "PiOperator", "SourceField", "apply_pi", "pi_uniaxial", "pi_zero",
    "sample_source", "verify_pi_bound",
    "LlgSystem", "TangentBasis", "assemble_llg_system", "build_tangent_basis",
    "solve_v", "update_m",
    "FacetTag", "Region", "TetMesh", "build_multilayer_mesh", "mesh_size",
    "validate_mesh",
    "MaterialParams", "SolverConfig",
    "INTRINSIC", "NondimParams", "SIParams", "intrinsic_length",
    "nondimensionalize", "redimensionalize_time",
    "SpinSystem", "assemble_spin_form", "assemble_spin_rhs", "solve_s",
]
