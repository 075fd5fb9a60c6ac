from .base import ClosedFormMissing, ModelFamily
from .coarse import CoarseBrownianModel
from .diffusion import BivariateDiffusionModel
from .poisson_pair import PoissonPairModel, interarrival_times
from .random_time import RandomTimeModel
from .structure import Coefficient, Driver, StructureDrivenModel
from .two_defaults import TwoDefaultsModel

__all__ = [
    "BivariateDiffusionModel",
    "ClosedFormMissing",
    "CoarseBrownianModel",
    "Coefficient",
    "Driver",
    "ModelFamily",
    "PoissonPairModel",
    "RandomTimeModel",
    "StructureDrivenModel",
    "TwoDefaultsModel",
    "interarrival_times",
]
