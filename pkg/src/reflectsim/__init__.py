"""Reflected diffusions of hard-core particle systems in intersection domains."""

from .chain import ChainModel, ChainParams, chain_constants
from .domain import (
    Constraint,
    Domain,
    DomainError,
    DomainModel,
    ProjectionError,
    active_set,
    check_membership,
    cone_decompose,
    project,
)
from .geometry import certify, sample_boundary
from .globules import GlobuleModel, GlobuleParams, PairPotential, globule_constants
from .integrator import SdeCoefficients, SimulationConfig, gradient_system, self_convergence, simulate, step
from .runspec import RunSpec, SpecError

__all__ = [
    "ChainModel",
    "ChainParams",
    "Constraint",
    "Domain",
    "DomainError",
    "DomainModel",
    "GlobuleModel",
    "GlobuleParams",
    "PairPotential",
    "ProjectionError",
    "RunSpec",
    "SdeCoefficients",
    "SimulationConfig",
    "SpecError",
    "active_set",
    "certify",
    "chain_constants",
    "check_membership",
    "cone_decompose",
    "globule_constants",
    "gradient_system",
    "project",
    "sample_boundary",
    "self_convergence",
    "simulate",
    "step",
]
