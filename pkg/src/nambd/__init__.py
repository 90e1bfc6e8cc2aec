"""Brownian-dynamics NAM association rates with a reproducible validation harness."""
from .model import (AdaptiveStep, DetectorKind, EndState, FixedStep, NamGeometry, RngKind,
                    SimulatorConfig, TrajectoryResult, Vec3, make_geometry)
from .rates import (BetaEstimate, ScreenedCoulomb, analytic_beta, association_rate, beta_infinity,
                    estimate_beta, hitting_probability, rate_with_potential, required_replications,
                    smoluchowski_rate)
from .stochastics import RandomStream
from .dynamics import run_trajectory, simulate_batch

__version__ = "0.1.0"

__all__ = [
    "AdaptiveStep", "DetectorKind", "EndState", "FixedStep", "NamGeometry", "RngKind",
    "SimulatorConfig", "TrajectoryResult", "Vec3", "make_geometry", "BetaEstimate",
    "ScreenedCoulomb", "analytic_beta", "association_rate", "beta_infinity", "estimate_beta",
    "hitting_probability", "rate_with_potential", "required_replications", "smoluchowski_rate",
    "RandomStream", "run_trajectory", "simulate_batch", "__version__",
]
