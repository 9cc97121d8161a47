"""Reflected mean-field particle systems: coefficients, engine, law iteration, experiments."""

from .coefficients import REGISTRY, Builtin, CoefficientError, CoefficientSet, EmpiricalMeasure, make_coefficients
from .engine import (
    InitialLaw,
    LawFlow,
    ParticleEnsemble,
    SimulationError,
    Trajectories,
    euler_reflect_step,
    simulate_system,
    verification_paths,
)
from .experiments import (
    ChaosResult,
    LipschitzWarning,
    ProbeResult,
    StabilityResult,
    coupled_chaos_run,
    lipschitz_probe,
    stability_run,
    sup_sq_error,
)
from .picard import ContractionWarning, PicardResult, law_distance, picard_solve

__all__ = [
    "REGISTRY",
    "Builtin",
    "CoefficientError",
    "CoefficientSet",
    "EmpiricalMeasure",
    "make_coefficients",
    "InitialLaw",
    "LawFlow",
    "ParticleEnsemble",
    "SimulationError",
    "Trajectories",
    "euler_reflect_step",
    "simulate_system",
    "verification_paths",
    "ChaosResult",
    "LipschitzWarning",
    "ProbeResult",
    "StabilityResult",
    "coupled_chaos_run",
    "lipschitz_probe",
    "stability_run",
    "sup_sq_error",
    "ContractionWarning",
    "PicardResult",
    "law_distance",
    "picard_solve",
]
