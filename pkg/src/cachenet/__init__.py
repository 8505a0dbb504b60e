"""Hit-probability analysis and optimal probabilistic cache placement for
cache-enabled small-cell networks with up to n transmission attempts."""

from .coverage import (
    ChannelParams,
    HitProbResult,
    Mobility,
    Policy,
    RhoConstants,
    Scenario,
    hit_prob,
    joint_coverage_p1,
    joint_coverage_p2,
    rho1,
    rho2,
    success_prob_p1,
    success_prob_p2,
)
from .errors import SolverError, ValidationError
from .mcsim import PlacementModel, SimConfig, SimResult, simulate_hit, simulate_joint_coverage
from .popularity import PlacementVector, ZipfLibrary, validate_placement, zipf_request_probs

__all__ = [
    "ChannelParams",
    "HitProbResult",
    "Mobility",
    "PlacementModel",
    "PlacementVector",
    "Policy",
    "RhoConstants",
    "Scenario",
    "SimConfig",
    "SimResult",
    "SolverError",
    "ValidationError",
    "ZipfLibrary",
    "hit_prob",
    "joint_coverage_p1",
    "joint_coverage_p2",
    "rho1",
    "rho2",
    "simulate_hit",
    "simulate_joint_coverage",
    "success_prob_p1",
    "success_prob_p2",
    "validate_placement",
    "zipf_request_probs",
]

__version__ = "0.1.0"
