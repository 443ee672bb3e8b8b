"""
Factorization Types

Data cube, solver configuration and run result for the kernel NMF solvers.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel, ConfigDict, Field

from knmf.errors import InputError, UnsupportedConfigurationError
from knmf.kernels import KernelSpec, KernelVariant
from knmf.regularizers import RegularizerSet

# L×N spectra, one column per endmember
Endmembers = NDArray[np.float64]
# N×T fractions, one column per pixel
Abundances = NDArray[np.float64]


class Scheme(str, Enum):
    ADDITIVE = "add"
    MULTIPLICATIVE = "mult"


class InitMethod(str, Enum):
    RANDOM_UNIFORM = "random"
    DATA_COLUMNS = "data"


@dataclass(frozen=True)
class HyperCube:
    """
    L×T reflectance matrix X of an a×b image.

    Pixel t (1-based) sits at row i = ceil(t/b), column j = t - (i-1)b.
    """

    X: NDArray[np.float64]
    rows: int
    cols: int

    def __post_init__(self) -> None:
        X = np.asarray(self.X, dtype=np.float64)
        if X.ndim != 2:
            raise InputError("cube data must be an L×T matrix", shape=list(X.shape))
        if self.rows * self.cols != X.shape[1]:
            raise InputError(
                f"image {self.rows}x{self.cols} does not hold {X.shape[1]} pixels",
            )
        if not np.all(np.isfinite(X)):
            raise InputError("cube contains non-finite values")
        if np.any(X < 0):
            raise InputError("cube contains negative reflectances")
        object.__setattr__(self, "X", X)

    @classmethod
    def from_matrix(cls, X: ArrayLike, rows: Optional[int] = None, cols: Optional[int] = None) -> "HyperCube":
        """Wrap a matrix; a missing shape defaults to a single image row."""
        arr = np.asarray(X, dtype=np.float64)
        if rows is None or cols is None:
            rows, cols = 1, arr.shape[1] if arr.ndim == 2 else 0
        return cls(X=arr, rows=rows, cols=cols)

    @property
    def bands(self) -> int:
        return self.X.shape[0]

    @property
    def pixels(self) -> int:
        return self.X.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.rows, self.cols


class StepsizePolicy(BaseModel):
    """Scalar stepsizes for the additive scheme, with optional backtracking."""

    model_config = ConfigDict(frozen=True)

    eta_a: float = Field(1e-3, gt=0, description="Stepsize for every a_nt")
    eta_e: float = Field(1e-3, gt=0, description="Stepsize for every e_n")
    backtracking: bool = Field(False, description="Halve until the objective does not increase")
    max_halvings: int = Field(20, ge=0)


class SolverConfig(BaseModel):
    """Resolved configuration of one factorization run."""

    model_config = ConfigDict(frozen=True)

    rank: int = Field(..., ge=1, description="Number of endmembers N")
    kernel: KernelSpec = Field(default_factory=KernelSpec)
    scheme: Scheme = Scheme.MULTIPLICATIVE
    iterations: int = Field(200, ge=1)
    stepsize: StepsizePolicy = Field(default_factory=StepsizePolicy)
    sum_to_one: bool = False
    normalize_every_iteration: bool = Field(
        True, description="Normalize after each A-sweep; otherwise once after the last iteration"
    )
    semi_nmf: bool = Field(False, description="Drop the nonnegativity constraint on E")
    regularizers: RegularizerSet = Field(default_factory=RegularizerSet)
    init: InitMethod = InitMethod.DATA_COLUMNS
    init_jitter: float = Field(1e-3, ge=0, description="Uniform jitter added to data-column endmembers")
    seed: int = Field(0, ge=0)
    epsilon_guard: float = Field(1e-12, gt=0)
    threads: int = Field(1, ge=1, description="Workers for the per-pixel and per-endmember sweeps")

    def check_supported(self) -> None:
        """Raise for option combinations without an update rule."""
        if (
            self.scheme == Scheme.MULTIPLICATIVE
            and self.kernel.variant == KernelVariant.POLYNOMIAL
            and self.kernel.degree != 2
        ):
            raise UnsupportedConfigurationError(
                f"the multiplicative endmember rule exists only for degree 2; "
                f"got degree {self.kernel.degree}, use --scheme add",
                degree=self.kernel.degree,
            )
        if self.scheme == Scheme.MULTIPLICATIVE and self.semi_nmf:
            raise UnsupportedConfigurationError(
                "semi-NMF drops nonnegativity on E, which the multiplicative rule cannot do; use --scheme add",
            )


@dataclass
class RunResult:
    """Final factors, traces and metrics of one run."""

    E: Endmembers
    A: Abundances
    cost_trace: list[float]
    objective_trace: list[float]
    re: float
    re_phi: float
    wall_time: float
    config: SolverConfig
    zero_columns: list[int] = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.cost_trace) - 1

    @property
    def final_cost(self) -> float:
        return self.cost_trace[-1]

    def config_echo(self) -> dict:
        return self.config.model_dump(mode="json")
