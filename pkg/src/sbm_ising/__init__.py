"""Ising model on a two-community stochastic block model."""

from .cw import PhasePoint, Regime, classify_phase, free_energy_functional
from .graph import BlockGraph, ModelParams, sample_graph
from .lattice import LatticeMeasure, exact_partition_cw

__version__ = "0.1.0"

__all__ = [
    "BlockGraph",
    "LatticeMeasure",
    "ModelParams",
    "PhasePoint",
    "Regime",
    "classify_phase",
    "exact_partition_cw",
    "free_energy_functional",
    "sample_graph",
]
