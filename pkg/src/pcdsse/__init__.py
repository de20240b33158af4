"""
Dynamic state estimation for unbalanced distribution feeders.

Streaming PMU voltage phasors and slow load meters are fused into a
time-varying robust least-squares problem on a linearized AC power flow,
which a first-order prediction-correction method tracks step by step.
"""

from .cost import CostParams, CostSnapshot, ConvexityBounds, bounds, build_snapshot
from .fopc import (
    ConvergenceCertificate,
    DdseProblem,
    FopcConfig,
    FopcEstimator,
    batch_solve,
    certify,
)
from .linmodel import LinearPowerFlowModel, evaluate, linearize
from .netmodel import NetworkModel, build_network, load_network, solve_power_flow
from .sensing import MeasurementFrame, SelectionSets, build_selection, simulate

__all__ = [
    "ConvergenceCertificate",
    "ConvexityBounds",
    "CostParams",
    "CostSnapshot",
    "DdseProblem",
    "FopcConfig",
    "FopcEstimator",
    "LinearPowerFlowModel",
    "MeasurementFrame",
    "NetworkModel",
    "SelectionSets",
    "batch_solve",
    "bounds",
    "build_network",
    "build_selection",
    "build_snapshot",
    "certify",
    "evaluate",
    "linearize",
    "load_network",
    "simulate",
    "solve_power_flow",
]

__version__ = "0.1.0"
