"""Priority sampling of weighted streams for subset-sum estimation."""

from .estimators import SubsetPredicate, subset_estimate
from .model import ItemRecord, PrioritizedItem, PrioritySample, SchemeTag, SeededGenerator, prioritize
from .samplers import (
    DualRelaxedReservoir,
    PriorityReservoir,
    RelaxedBuffer,
    ThresholdReservoir,
    UniformReservoir,
    WeightedWithReplacement,
)

__version__ = "0.1.0"

__all__ = [
    "DualRelaxedReservoir",
    "ItemRecord",
    "PrioritizedItem",
    "PriorityReservoir",
    "PrioritySample",
    "RelaxedBuffer",
    "SchemeTag",
    "SeededGenerator",
    "SubsetPredicate",
    "ThresholdReservoir",
    "UniformReservoir",
    "WeightedWithReplacement",
    "prioritize",
    "subset_estimate",
]
