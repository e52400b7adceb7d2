"""Fractional evolutionary equations on exponentially weighted time grids."""

from .errors import (
    ConfigError,
    DimensionError,
    EvofracError,
    GridError,
    LawError,
    SingularSystemError,
)
from .fraccalc import apply_frac_power, rl_integral_oracle, rho0_for, symbol_power
from .material import (
    MaterialLaw,
    OperatorBlock,
    fokker_planck_material,
    kelvin_voigt_material,
    material_symbol,
)
from .solver import EvolutionaryProblem, DeltaSource, causality_check, solve, time_stepping_oracle
from .spatial import SkewOperator, build_elasticity_1d, build_grad_div_1d
from .timegrid import Signal, Spectrum, TimeGrid, forward_transform, inverse_transform, weighted_norm
from .wellposed import ProjectorTriple, verify_condition

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DimensionError",
    "EvofracError",
    "GridError",
    "LawError",
    "SingularSystemError",
    "apply_frac_power",
    "rl_integral_oracle",
    "rho0_for",
    "symbol_power",
    "MaterialLaw",
    "OperatorBlock",
    "fokker_planck_material",
    "kelvin_voigt_material",
    "material_symbol",
    "EvolutionaryProblem",
    "DeltaSource",
    "causality_check",
    "solve",
    "time_stepping_oracle",
    "SkewOperator",
    "build_elasticity_1d",
    "build_grad_div_1d",
    "Signal",
    "Spectrum",
    "TimeGrid",
    "forward_transform",
    "inverse_transform",
    "weighted_norm",
    "ProjectorTriple",
    "verify_condition",
]
