"""
Kernels

Evaluation, Gram assembly and analytic gradients (with respect to the
first argument) for the linear, polynomial and Gaussian kernels.
Endmembers stay in the input space, so every quantity the solvers need
is expressed through kappa and its gradient; the feature map is never
formed.
"""

from enum import Enum

import numpy as np
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel, ConfigDict, Field
from scipy.spatial.distance import cdist

from knmf.errors import InputError, NumericError


class KernelVariant(str, Enum):
    LINEAR = "linear"
    POLYNOMIAL = "poly"
    GAUSSIAN = "gauss"


class KernelSpec(BaseModel):
    """
    Tagged kernel choice.

    degree and offset apply to the polynomial kernel (zᵀe + c)^d, sigma to
    the Gaussian exp(-‖e - z‖² / 2σ²). The linear kernel ignores all three.
    """

    model_config = ConfigDict(frozen=True)

    variant: KernelVariant = KernelVariant.LINEAR
    degree: int = Field(2, ge=1, description="Polynomial degree d")
    offset: float = Field(0.0, ge=0, description="Polynomial additive constant c")
    sigma: float = Field(1.0, gt=0, description="Gaussian bandwidth")

    @classmethod
    def linear(cls) -> "KernelSpec":
        return cls(variant=KernelVariant.LINEAR)

    @classmethod
    def polynomial(cls, degree: int = 2, offset: float = 0.0) -> "KernelSpec":
        return cls(variant=KernelVariant.POLYNOMIAL, degree=degree, offset=offset)

    @classmethod
    def gaussian(cls, sigma: float) -> "KernelSpec":
        return cls(variant=KernelVariant.GAUSSIAN, sigma=sigma)

    @property
    def label(self) -> str:
        """Short human-readable name, e.g. ``poly(d=2,c=0.44)``."""
        if self.variant == KernelVariant.POLYNOMIAL:
            return f"poly(d={self.degree},c={self.offset:g})"
        if self.variant == KernelVariant.GAUSSIAN:
            return f"gauss(sigma={self.sigma:g})"
        return "linear"

    def describe(self) -> dict:
        """Parameters relevant to this variant only."""
        if self.variant == KernelVariant.POLYNOMIAL:
            return {"variant": self.variant.value, "degree": self.degree, "offset": self.offset}
        if self.variant == KernelVariant.GAUSSIAN:
            return {"variant": self.variant.value, "sigma": self.sigma}
        return {"variant": self.variant.value}


def _as_vector(v: ArrayLike, name: str) -> NDArray[np.float64]:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise InputError(f"{name} must be a non-empty vector", shape=list(arr.shape))
    return arr


def _as_matrix(m: ArrayLike, name: str) -> NDArray[np.float64]:
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2:
        raise InputError(f"{name} must be a matrix", shape=list(arr.shape))
    return arr


def _check_pair(e: ArrayLike, z: ArrayLike) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    ev = _as_vector(e, "e")
    zv = _as_vector(z, "z")
    if ev.shape != zv.shape:
        raise InputError(
            f"dimension mismatch: e has {ev.size} bands, z has {zv.size}",
        )
    return ev, zv


def evaluate(kernel: KernelSpec, e: ArrayLike, z: ArrayLike) -> float:
    """kappa(e, z)."""
    ev, zv = _check_pair(e, z)
    if kernel.variant == KernelVariant.LINEAR:
        value = float(zv @ ev)
    elif kernel.variant == KernelVariant.POLYNOMIAL:
        value = float((zv @ ev + kernel.offset) ** kernel.degree)
    else:
        diff = ev - zv
        value = float(np.exp(-(diff @ diff) / (2.0 * kernel.sigma**2)))
    if not np.isfinite(value):
        raise NumericError("kernel evaluation is not finite", kernel=kernel.label)
    return value


def gradient(kernel: KernelSpec, e: ArrayLike, z: ArrayLike) -> NDArray[np.float64]:
    """Gradient of kappa(e, z) with respect to e."""
    ev, zv = _check_pair(e, z)
    if kernel.variant == KernelVariant.LINEAR:
        return zv.copy()
    if kernel.variant == KernelVariant.POLYNOMIAL:
        d = kernel.degree
        return d * (zv @ ev + kernel.offset) ** (d - 1) * zv
    return -(1.0 / kernel.sigma**2) * evaluate(kernel, ev, zv) * (ev - zv)


def self_gradient(kernel: KernelSpec, e: ArrayLike) -> NDArray[np.float64]:
    """
    First-slot gradient of kappa(·, e) evaluated at e.

    Zero for the Gaussian kernel, where smoothing in the feature space
    carries no information.
    """
    ev = _as_vector(e, "e")
    return gradient(kernel, ev, ev)


def gram(kernel: KernelSpec, E: ArrayLike) -> NDArray[np.float64]:
    """N×N matrix kappa(e_n, e_m) over the columns of E."""
    Em = _as_matrix(E, "E")
    if kernel.variant == KernelVariant.LINEAR:
        return Em.T @ Em
    if kernel.variant == KernelVariant.POLYNOMIAL:
        return (Em.T @ Em + kernel.offset) ** kernel.degree
    sq = cdist(Em.T, Em.T, metric="sqeuclidean")
    return np.exp(-sq / (2.0 * kernel.sigma**2))


def cross_gram(kernel: KernelSpec, E: ArrayLike, Z: ArrayLike) -> NDArray[np.float64]:
    """N×T matrix kappa(e_n, z_t) between the columns of E and Z."""
    Em = _as_matrix(E, "E")
    Zm = _as_matrix(Z, "Z")
    if Em.shape[0] != Zm.shape[0]:
        raise InputError(
            f"dimension mismatch: E has {Em.shape[0]} bands, Z has {Zm.shape[0]}",
        )
    if kernel.variant == KernelVariant.LINEAR:
        return Em.T @ Zm
    if kernel.variant == KernelVariant.POLYNOMIAL:
        return (Em.T @ Zm + kernel.offset) ** kernel.degree
    sq = cdist(Em.T, Zm.T, metric="sqeuclidean")
    return np.exp(-sq / (2.0 * kernel.sigma**2))


def diagonal(kernel: KernelSpec, Z: ArrayLike) -> NDArray[np.float64]:
    """kappa(z_t, z_t) for every column of Z."""
    Zm = _as_matrix(Z, "Z")
    if kernel.variant == KernelVariant.LINEAR:
        return np.einsum("lt,lt->t", Zm, Zm)
    if kernel.variant == KernelVariant.POLYNOMIAL:
        return (np.einsum("lt,lt->t", Zm, Zm) + kernel.offset) ** kernel.degree
    return np.ones(Zm.shape[1])


def weighted_gradient_sum(
    kernel: KernelSpec,
    E: NDArray[np.float64],
    Z: NDArray[np.float64],
    W: NDArray[np.float64],
) -> NDArray[np.float64]:
    """
    Column n of the result is sum_t W[n, t] * grad kappa(e_n, z_t).

    E is L×N, Z is L×T and W is N×T. The gradient of the cost with respect
    to every endmember is two of these sums (data term and E-E term).
    """
    if kernel.variant == KernelVariant.LINEAR:
        return Z @ W.T
    if kernel.variant == KernelVariant.POLYNOMIAL:
        d = kernel.degree
        base = (E.T @ Z + kernel.offset) ** (d - 1)
        return d * (Z @ (W * base).T)
    P = W * cross_gram(kernel, E, Z)
    return (Z @ P.T - E * P.sum(axis=1)) / kernel.sigma**2
