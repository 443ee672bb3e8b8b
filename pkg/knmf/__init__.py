"""
knmf: Kernel NMF for Hyperspectral Unmixing

Nonnegative matrix factorization in a reproducing kernel Hilbert space
with endmembers kept in the input space, so no pre-image problem arises.
Provides additive and multiplicative update rules for the linear,
polynomial and Gaussian kernels, smoothness / sparsity / spatial
regularizers, evaluation metrics, gradient and nonconvexity diagnostics,
cube I/O and a batch command line.
"""

__version__ = "1.0.0"

from knmf.factorization import HyperCube, RunResult, Scheme, SolverConfig, UnmixingWorkflow, run
from knmf.kernels import KernelSpec, KernelVariant
from knmf.regularizers import RegularizerSet

__all__ = [
    "__version__",
    "HyperCube",
    "KernelSpec",
    "KernelVariant",
    "RegularizerSet",
    "RunResult",
    "Scheme",
    "SolverConfig",
    "UnmixingWorkflow",
    "run",
]
