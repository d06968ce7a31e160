"""Heralded fully passive QKD with a parametric down-conversion source.

The package computes heralded signal-state photon statistics, propagates them
through a lossy fiber and threshold detectors, bounds single-photon quantities
with passive decoy-state linear programs and reports secret-key rates.
"""

from pdcqkd.channel import ChannelParams, ClassStats, class_stats, transmittance
from pdcqkd.decoy import DecoyBounds, single_photon_bounds
from pdcqkd.keyrate import (
    ProtocolParams,
    RatePoint,
    active_wcp_baseline,
    max_distance,
    optimize_lambda,
    total_rate,
)
from pdcqkd.mathkit import DEFAULT_TOLERANCE, Tolerance, binary_entropy
from pdcqkd.source import (
    ALL_CLASSES,
    HeraldClass,
    SignalDistribution,
    SourceParams,
    project_x_basis,
    signal_distribution,
)

__version__ = "0.1.0"

__all__ = [
    "ALL_CLASSES",
    "ChannelParams",
    "ClassStats",
    "DEFAULT_TOLERANCE",
    "DecoyBounds",
    "HeraldClass",
    "ProtocolParams",
    "RatePoint",
    "SignalDistribution",
    "SourceParams",
    "Tolerance",
    "active_wcp_baseline",
    "binary_entropy",
    "class_stats",
    "max_distance",
    "optimize_lambda",
    "project_x_basis",
    "signal_distribution",
    "single_photon_bounds",
    "total_rate",
    "transmittance",
]
