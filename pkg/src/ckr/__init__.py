"""Compressed kernel regression: ridge regression sparsified by ridge-leverage
Nystrom sampling and truncated to a fixed precision, with checks of its bounds."""

__version__ = "0.1.0"

from .compression import CompressedHypothesis, bit_complexity, compression_generalization_bound
from .kernels import Dataset, KernelSpec, gram, perturb
from .learner import LearnerConfig, evaluate, schedule, train, verify_generalization
from .nystrom import NystromSketch, build_sketch, ridge_leverage_scores
from .spectral import DecayProfile, effective_dimension, fit_decay, spectrum

__all__ = [
    "CompressedHypothesis", "Dataset", "DecayProfile", "KernelSpec", "LearnerConfig",
    "NystromSketch", "bit_complexity", "build_sketch", "compression_generalization_bound",
    "effective_dimension", "evaluate", "fit_decay", "gram", "perturb", "ridge_leverage_scores",
    "schedule", "spectrum", "train", "verify_generalization",
]
