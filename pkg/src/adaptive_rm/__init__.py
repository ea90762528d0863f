"""Normalizing-constant estimation with Resample-Move, Adaptive
Resample-Move and annealed importance sampling."""

from .allocator import AllocationResult, empirical_vhat, optimal_allocation, predicted_min_variance
from .engine import IterationDiag, Method, RunResult, SmcConfig, arm_estimate, rm_estimate, run
from .gpc import GpcModel
from .model import SequentialModel, validate_model
from .particles import ParticleSet
from .rbm import RbmModel, RbmParams

__all__ = [
    "AllocationResult",
    "GpcModel",
    "IterationDiag",
    "Method",
    "ParticleSet",
    "RbmModel",
    "RbmParams",
    "RunResult",
    "SequentialModel",
    "SmcConfig",
    "arm_estimate",
    "empirical_vhat",
    "optimal_allocation",
    "predicted_min_variance",
    "rm_estimate",
    "run",
    "validate_model",
]

__version__ = "0.1.0"
