"""csdlab: common/specific decomposition of multi-domain linear classifiers.

A small numerical library plus an experiment CLI for studying how a bank of
per-domain classifiers splits into a shared component (kept at inference)
and a low-rank domain-specific part (discarded). See README.md for usage.
"""

from ._kernels import BACKEND as kernel_backend
from .datagen import GeneratorConfig, MultiDomainDataset, generate
from .decomposition import (Decomposition, GroundTruthModel,
                            check_identifiability, decompose,
                            decomposition_objective, orthogonalize)
from .linalg import SvdResult, pseudoinverse, project_onto_span, svd, truncated_svd
from .model import CsdConfig, CsdParams, TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "CsdConfig",
    "CsdParams",
    "Decomposition",
    "GeneratorConfig",
    "GroundTruthModel",
    "MultiDomainDataset",
    "SvdResult",
    "TrainConfig",
    "check_identifiability",
    "decompose",
    "decomposition_objective",
    "generate",
    "kernel_backend",
    "orthogonalize",
    "project_onto_span",
    "pseudoinverse",
    "svd",
    "train",
    "truncated_svd",
    "__version__",
]
