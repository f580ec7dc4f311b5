"""Radial Ricci flow on the disc: cusp barriers, an implicit solver for
``dv/dt = exp(-2 v) lap(v)`` and diagnostics for the contracting cusp."""
from .metrics import (
    CappedCusp,
    Cigar,
    Cusp,
    DomainError,
    Flat,
    Poincare,
    QuadratureError,
    RadialGrid,
    Sampled,
    Sphere,
    eval_u,
    eval_v,
    gauss_curvature,
    l1_distance,
)
from .solver import FlowState, SolverConfig, init_state, run, step

__all__ = [
    "CappedCusp", "Cigar", "Cusp", "DomainError", "Flat", "FlowState", "Poincare",
    "QuadratureError", "RadialGrid", "Sampled", "SolverConfig", "Sphere", "eval_u",
    "eval_v", "gauss_curvature", "init_state", "l1_distance", "run", "step",
]
__version__ = "0.1.0"
