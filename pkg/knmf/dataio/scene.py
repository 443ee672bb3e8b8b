"""
Synthetic Scenes

Seeded ground-truth scenes for benchmarking: Gaussian-bump endmember
spectra, Dirichlet abundances with optional spatial blur, linear or
bilinear mixing, and optional white Gaussian noise at a given SNR.
"""

from enum import Enum
from typing import Optional

import numpy as np
import structlog
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.ndimage import uniform_filter

from knmf.factorization.types import HyperCube

logger = structlog.get_logger(__name__)


class EndmemberModel(str, Enum):
    GAUSSIAN_BUMPS = "bumps"
    USER_MATRIX = "user"


class MixingModel(str, Enum):
    LINEAR = "linear"
    BILINEAR = "bilinear"


class SceneSpec(BaseModel):
    """Everything needed to regenerate a synthetic scene bit-for-bit."""

    model_config = ConfigDict(frozen=True)

    bands: int = Field(..., ge=1, description="L")
    rows: int = Field(..., ge=1, description="Image height a")
    cols: int = Field(..., ge=1, description="Image width b")
    rank: int = Field(..., ge=1, description="N")
    endmember_model: EndmemberModel = EndmemberModel.GAUSSIAN_BUMPS
    user_endmembers: Optional[list[list[float]]] = Field(None, description="L×N matrix for the user model")
    concentration: float = Field(1.0, gt=0, description="Symmetric Dirichlet parameter")
    blur_passes: int = Field(0, ge=0, description="3×3 box-filter passes over the abundance maps")
    mixing: MixingModel = MixingModel.LINEAR
    beta: float = Field(0.0, ge=0, description="Bilinear interaction strength")
    noise_snr_db: Optional[float] = Field(None, description="AWGN at this SNR; None for a clean scene")
    seed: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _check_user_matrix(self) -> "SceneSpec":
        if self.endmember_model == EndmemberModel.USER_MATRIX:
            if self.user_endmembers is None:
                raise ValueError("user endmember model needs user_endmembers")
            E = np.asarray(self.user_endmembers, dtype=np.float64)
            if E.shape != (self.bands, self.rank):
                raise ValueError(f"user_endmembers must be {self.bands}x{self.rank}, got {E.shape}")
            if np.any(E < 0):
                raise ValueError("user_endmembers must be nonnegative")
        return self

    @property
    def pixels(self) -> int:
        return self.rows * self.cols


def gaussian_bumps(rng: np.random.Generator, bands: int, rank: int) -> NDArray[np.float64]:
    """L×N spectra, each a sum of 2-4 positive Gaussian peaks scaled into (0, 1]."""
    axis = np.linspace(0.0, 1.0, bands)
    E = np.empty((bands, rank))
    for n in range(rank):
        peaks = int(rng.integers(2, 5))
        centers = rng.uniform(0.0, 1.0, peaks)
        widths = rng.uniform(0.05, 0.25, peaks)
        heights = rng.uniform(0.3, 1.0, peaks)
        spectrum = np.sum(
            heights[:, None] * np.exp(-((axis[None, :] - centers[:, None]) ** 2) / (2.0 * widths[:, None] ** 2)),
            axis=0,
        )
        E[:, n] = spectrum / spectrum.max()
    return E


def _blur(A: NDArray[np.float64], rows: int, cols: int, passes: int) -> NDArray[np.float64]:
    maps = A.reshape(A.shape[0], rows, cols)
    for _ in range(passes):
        maps = uniform_filter(maps, size=(1, 3, 3), mode="nearest")
    A = maps.reshape(A.shape[0], rows * cols)
    return A / A.sum(axis=0)


def synth_scene(spec: SceneSpec) -> tuple[HyperCube, NDArray[np.float64], NDArray[np.float64]]:
    """
    Generate (cube, E_true, A_true); deterministic given spec.seed.

    Bilinear mixing adds beta · sum_{n<m} a_n a_m (e_n ⊙ e_m) per pixel.
    """
    rng = np.random.default_rng(spec.seed)
    if spec.endmember_model == EndmemberModel.USER_MATRIX:
        E = np.asarray(spec.user_endmembers, dtype=np.float64)
    else:
        E = gaussian_bumps(rng, spec.bands, spec.rank)

    A = rng.dirichlet(np.full(spec.rank, spec.concentration), size=spec.pixels).T
    if spec.blur_passes:
        A = _blur(A, spec.rows, spec.cols, spec.blur_passes)

    X = E @ A
    if spec.mixing == MixingModel.BILINEAR and spec.beta > 0:
        for n in range(spec.rank):
            for m in range(n + 1, spec.rank):
                X += spec.beta * np.outer(E[:, n] * E[:, m], A[n] * A[m])

    if spec.noise_snr_db is not None:
        signal_power = float(np.mean(X * X))
        noise_power = signal_power / 10.0 ** (spec.noise_snr_db / 10.0)
        X = np.maximum(X + rng.normal(0.0, np.sqrt(noise_power), size=X.shape), 0.0)

    logger.info(
        "scene_generated",
        bands=spec.bands,
        rows=spec.rows,
        cols=spec.cols,
        rank=spec.rank,
        mixing=spec.mixing.value,
        snr_db=spec.noise_snr_db,
        seed=spec.seed,
    )
    return HyperCube(X=X, rows=spec.rows, cols=spec.cols), E, A
