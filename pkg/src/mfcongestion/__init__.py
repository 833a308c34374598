"""Stationary equilibria, dynamics and welfare of mean-field congestion games."""
from .game import (
    EquilibriumReport,
    Exponential,
    GameInstance,
    MassDistribution,
    ParallelConstant,
    ParallelIncreasing,
    PiecewiseLinear,
    PowerLaw,
    SharedTwoAction,
    SojournProfile,
    validate_instance,
)

__all__ = [
    "EquilibriumReport",
    "Exponential",
    "GameInstance",
    "MassDistribution",
    "ParallelConstant",
    "ParallelIncreasing",
    "PiecewiseLinear",
    "PowerLaw",
    "SharedTwoAction",
    "SojournProfile",
    "validate_instance",
]
