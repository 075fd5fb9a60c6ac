"""Semimartingale characteristics in a filtration and in a smaller one.

Closed-form characteristics of several model families, Monte Carlo
projections onto observed information, the engines that turn large-filtration
characteristics into small-filtration ones, model-free estimators, and a
harness that compares all three.
"""

from .core import (
    CharacteristicReport,
    CompensatorMeasure,
    DifferentialCharacteristics,
    FiltrageError,
    JumpEvents,
    PathBundle,
    TimeGrid,
)

__version__ = "0.1.0"

__all__ = [
    "CharacteristicReport",
    "CompensatorMeasure",
    "DifferentialCharacteristics",
    "FiltrageError",
    "JumpEvents",
    "PathBundle",
    "TimeGrid",
]
