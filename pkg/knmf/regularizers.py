"""
Regularizers

Penalty values, (sub)gradient contributions and split-gradient
numerator/denominator contributions for the constraint extensions:

- 2-norm smoothness of the endmembers in the input space (lambda_input)
- 2-norm smoothness in the feature space (lambda_feature)
- fluctuation smoothness (gamma)
- weighted-average smoothness (rho, alpha)
- abundance sparsity (mu)
- TV-like spatial regularization of the abundance maps (omega_*, alpha_spatial)

Every term reports its gradient as G = denominator - numerator with both
parts entrywise nonnegative whenever E, A >= 0, which is what the
multiplicative rules need to preserve sign.
"""

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
import structlog
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel, ConfigDict, Field
from scipy.linalg import toeplitz

from knmf.errors import InputError
from knmf.kernels import KernelSpec, diagonal, self_gradient

logger = structlog.get_logger(__name__)


class RegularizerSet(BaseModel):
    """Coefficients of every constraint extension; all default to off."""

    model_config = ConfigDict(frozen=True)

    lambda_input: float = Field(0.0, ge=0, description="2-norm smoothness in the input space")
    lambda_feature: float = Field(0.0, ge=0, description="2-norm smoothness in the feature space")
    gamma: float = Field(0.0, ge=0, description="Fluctuation smoothness")
    rho: float = Field(0.0, ge=0, description="Weighted-average smoothness")
    alpha: float = Field(0.0, ge=0, lt=1, description="Weighted-average decay along the bands")
    mu: float = Field(0.0, ge=0, description="Abundance sparsity")
    omega_l: float = Field(0.0, ge=0)
    omega_r: float = Field(0.0, ge=0)
    omega_u: float = Field(0.0, ge=0)
    omega_d: float = Field(0.0, ge=0)
    alpha_spatial: float = Field(0.0, ge=0, lt=1, description="Spatial weighted-average decay")
    scale_endmember_terms: bool = Field(
        False,
        description="Divide endmember-side split terms by the kernel's gradient scale in the multiplicative rule",
    )
    spatial_double_sum: bool = Field(
        True, description="Sum the spatial penalty over both i and j, as the display writes it"
    )

    @property
    def has_endmember_terms(self) -> bool:
        return any(v > 0 for v in (self.lambda_input, self.lambda_feature, self.gamma, self.rho))

    @property
    def has_spatial(self) -> bool:
        return any(w > 0 for w in (self.omega_l, self.omega_r, self.omega_u, self.omega_d))

    @property
    def is_empty(self) -> bool:
        return not (self.has_endmember_terms or self.has_spatial or self.mu > 0)


@dataclass(frozen=True)
class SmoothingOperator:
    """Lower-triangular weighted-average matrix T and Q = (1/s)(I - T)ᵀ(I - T)."""

    T: NDArray[np.float64]
    Q: NDArray[np.float64]

    @property
    def size(self) -> int:
        return self.T.shape[0]

    def split(self) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """Entrywise Q = Q⁺ - Q⁻ with both parts nonnegative."""
        return np.maximum(self.Q, 0.0), np.maximum(-self.Q, 0.0)

    def transposed(self) -> "SmoothingOperator":
        """Operator for the reversed recursion direction (T← = T→ᵀ)."""
        Tt = self.T.T.copy()
        D = np.eye(self.size) - Tt
        return SmoothingOperator(T=Tt, Q=D.T @ D / self.size)


class EndmemberTerms(NamedTuple):
    penalty: float
    gradient: NDArray[np.float64]
    denominator: NDArray[np.float64]
    numerator: NDArray[np.float64]


class AbundanceTerms(NamedTuple):
    penalty: float
    gradient: NDArray[np.float64]
    denominator: NDArray[np.float64]
    numerator: NDArray[np.float64]


def smoothing_matrix(alpha: float, size: int) -> SmoothingOperator:
    """T(p, q) = alpha^(p-q) (1 - alpha) for p >= q, else 0."""
    if not 0.0 <= alpha < 1.0:
        raise InputError(f"alpha must lie in [0, 1), got {alpha}")
    if size < 1:
        raise InputError(f"smoothing size must be >= 1, got {size}")
    column = (1.0 - alpha) * alpha ** np.arange(size, dtype=np.float64)
    row = np.zeros(size)
    row[0] = column[0]
    T = toeplitz(column, row)
    D = np.eye(size) - T
    return SmoothingOperator(T=T, Q=D.T @ D / size)


# Endmember terms

def l2_input_terms(E: NDArray[np.float64], lam: float) -> EndmemberTerms:
    """(lam/2) sum_n ‖e_n‖²; gradient and denominator lam·e_n."""
    grad = lam * E
    return EndmemberTerms(
        penalty=0.5 * lam * float(np.sum(E * E)),
        gradient=grad,
        denominator=grad.copy(),
        numerator=np.zeros_like(E),
    )


def l2_feature_terms(E: NDArray[np.float64], lam_h: float, kernel: KernelSpec) -> EndmemberTerms:
    """(lam_h/2) sum_n kappa(e_n, e_n); gradient lam_h · self_gradient."""
    if lam_h == 0.0:
        return EndmemberTerms(0.0, np.zeros_like(E), np.zeros_like(E), np.zeros_like(E))
    grad = lam_h * np.column_stack([self_gradient(kernel, E[:, n]) for n in range(E.shape[1])])
    return EndmemberTerms(
        penalty=0.5 * lam_h * float(np.sum(diagonal(kernel, E))),
        gradient=grad,
        denominator=np.maximum(grad, 0.0),
        numerator=np.maximum(-grad, 0.0),
    )


def fluctuation_subgradient(e: ArrayLike, gamma: float) -> NDArray[np.float64]:
    """
    +gamma at strict interior local minima, -gamma at strict interior
    local maxima, 0 elsewhere (ties and both endpoints included).
    """
    ev = np.asarray(e, dtype=np.float64)
    out = np.zeros_like(ev)
    if ev.size < 3 or gamma == 0.0:
        return out
    mid, left, right = ev[1:-1], ev[:-2], ev[2:]
    out[1:-1] = np.where(
        (mid < left) & (mid < right),
        gamma,
        np.where((mid > left) & (mid > right), -gamma, 0.0),
    )
    return out


def fluctuation_terms(E: NDArray[np.float64], gamma: float) -> EndmemberTerms:
    """(gamma/2) sum_n sum_{l=2}^{L-1} |e_ln - e_(l-1)n| with the case-table subgradient."""
    grad = np.column_stack(
        [fluctuation_subgradient(E[:, n], gamma) for n in range(E.shape[1])]
    )
    penalty = 0.5 * gamma * float(np.sum(np.abs(np.diff(E[:-1], axis=0)))) if E.shape[0] > 2 else 0.0
    return EndmemberTerms(
        penalty=penalty,
        gradient=grad,
        # local minima (+gamma) to the denominator, local maxima to the numerator
        denominator=np.maximum(grad, 0.0),
        numerator=np.maximum(-grad, 0.0),
    )


def weighted_average_terms(E: NDArray[np.float64], rho: float, alpha: float) -> EndmemberTerms:
    """(rho / 2L) sum_n ‖(I - T) e_n‖²; gradient rho·Q·e_n."""
    L = E.shape[0]
    op = smoothing_matrix(alpha, L)
    residual = E - op.T @ E
    q_pos, q_neg = op.split()
    return EndmemberTerms(
        penalty=rho / (2.0 * L) * float(np.sum(residual * residual)),
        gradient=rho * (op.Q @ E),
        denominator=rho * (q_pos @ E),
        numerator=rho * (q_neg @ E),
    )


def endmember_terms(
    E: NDArray[np.float64], kernel: KernelSpec, regularizers: RegularizerSet
) -> EndmemberTerms:
    """Sum of every active endmember-side term."""
    zeros = np.zeros_like(E)
    total = EndmemberTerms(0.0, zeros, zeros.copy(), zeros.copy())
    parts: list[EndmemberTerms] = []
    if regularizers.lambda_input > 0:
        parts.append(l2_input_terms(E, regularizers.lambda_input))
    if regularizers.lambda_feature > 0:
        parts.append(l2_feature_terms(E, regularizers.lambda_feature, kernel))
    if regularizers.gamma > 0:
        parts.append(fluctuation_terms(E, regularizers.gamma))
    if regularizers.rho > 0:
        parts.append(weighted_average_terms(E, regularizers.rho, regularizers.alpha))
    for part in parts:
        total = EndmemberTerms(
            total.penalty + part.penalty,
            total.gradient + part.gradient,
            total.denominator + part.denominator,
            total.numerator + part.numerator,
        )
    return total


# Abundance terms

def sparsity_terms(A: NDArray[np.float64], mu: float) -> AbundanceTerms:
    """mu sum_{n,t} a_nt; gradient and denominator +mu per entry."""
    grad = np.full_like(A, mu)
    return AbundanceTerms(
        penalty=mu * float(np.sum(A)),
        gradient=grad,
        denominator=grad.copy(),
        numerator=np.zeros_like(A),
    )


def pixel_coordinates(t: int, cols: int) -> tuple[int, int]:
    """1-based pixel index t to 1-based grid coordinates (i, j)."""
    i = -(-t // cols)
    return i, t - (i - 1) * cols


def fold_abundance(A: NDArray[np.float64], n: int, shape: tuple[int, int]) -> NDArray[np.float64]:
    """Abundance map M_n with M_n(i, j) = a_nk, k = (i - 1)b + j."""
    rows, cols = shape
    if rows * cols != A.shape[1]:
        raise InputError(f"map shape {rows}x{cols} does not cover {A.shape[1]} pixels")
    return A[n].reshape(rows, cols)


def unfold_abundance(M: NDArray[np.float64]) -> NDArray[np.float64]:
    """Inverse of fold_abundance for one map."""
    return np.ascontiguousarray(M).reshape(-1)


class _SpatialOperators(NamedTuple):
    right: SmoothingOperator
    left: SmoothingOperator
    down: SmoothingOperator
    up: SmoothingOperator


def _spatial_operators(shape: tuple[int, int], alpha: float) -> _SpatialOperators:
    rows, cols = shape
    right = smoothing_matrix(alpha, cols)
    down = smoothing_matrix(alpha, rows)
    return _SpatialOperators(right, right.transposed(), down, down.transposed())


def _spatial_parts(
    M: NDArray[np.float64],
    ops: _SpatialOperators,
    weights: tuple[float, float, float, float],
    double_sum: bool,
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    rows, cols = M.shape
    w_l, w_r, w_u, w_d = weights
    # each row norm is repeated over the b columns (and column norms over the a rows)
    h = float(cols) if double_sum else 1.0
    v = float(rows) if double_sum else 1.0
    pos = np.zeros_like(M)
    neg = np.zeros_like(M)
    for w, op in ((w_l, ops.right), (w_r, ops.left)):
        if w > 0:
            q_pos, q_neg = op.split()
            pos += h * w * (M @ q_pos)
            neg += h * w * (M @ q_neg)
    for w, op in ((w_u, ops.down), (w_d, ops.up)):
        if w > 0:
            q_pos, q_neg = op.split()
            pos += v * w * (q_pos @ M)
            neg += v * w * (q_neg @ M)
    return pos, neg


def spatial_G(
    M: NDArray[np.float64],
    alpha: float,
    omega_l: float,
    omega_r: float,
    omega_u: float,
    omega_d: float,
    double_sum: bool = True,
) -> NDArray[np.float64]:
    """Gradient of the spatial penalty R_n with respect to every entry of M_n (a×b)."""
    ops = _spatial_operators(M.shape, alpha)
    pos, neg = _spatial_parts(M, ops, (omega_l, omega_r, omega_u, omega_d), double_sum)
    return pos - neg


def spatial_penalty(
    M: NDArray[np.float64],
    alpha: float,
    omega_l: float,
    omega_r: float,
    omega_u: float,
    omega_d: float,
    double_sum: bool = True,
) -> float:
    """
    R_n = 1/2 sum_i sum_j [ (w_l/b)‖(I-T→)M(i,:)ᵀ‖² + (w_r/b)‖(I-T←)M(i,:)ᵀ‖²
                           + (w_u/a)‖(I-T↓)M(:,j)‖² + (w_d/a)‖(I-T↑)M(:,j)‖² ].

    With double_sum=False the outer sums run once per row / column.
    """
    rows, cols = M.shape
    ops = _spatial_operators(M.shape, alpha)

    def _row_energy(op: SmoothingOperator) -> float:
        r = M.T - op.T @ M.T
        return float(np.sum(r * r))

    def _col_energy(op: SmoothingOperator) -> float:
        r = M - op.T @ M
        return float(np.sum(r * r))

    horizontal = (omega_l * _row_energy(ops.right) + omega_r * _row_energy(ops.left)) / cols
    vertical = (omega_u * _col_energy(ops.down) + omega_d * _col_energy(ops.up)) / rows
    if double_sum:
        return 0.5 * (cols * horizontal + rows * vertical)
    return 0.5 * (horizontal + vertical)


def spatial_terms(
    A: NDArray[np.float64], shape: tuple[int, int], regularizers: RegularizerSet
) -> AbundanceTerms:
    """Spatial penalty, gradient and split over all N maps, unfolded to N×T."""
    weights = (regularizers.omega_l, regularizers.omega_r, regularizers.omega_u, regularizers.omega_d)
    ops = _spatial_operators(shape, regularizers.alpha_spatial)
    pos = np.zeros_like(A)
    neg = np.zeros_like(A)
    penalty = 0.0
    for n in range(A.shape[0]):
        M = fold_abundance(A, n, shape)
        p, q = _spatial_parts(M, ops, weights, regularizers.spatial_double_sum)
        pos[n] = unfold_abundance(p)
        neg[n] = unfold_abundance(q)
        penalty += spatial_penalty(
            M, regularizers.alpha_spatial, *weights, double_sum=regularizers.spatial_double_sum
        )
    return AbundanceTerms(penalty=penalty, gradient=pos - neg, denominator=pos, numerator=neg)


def abundance_terms(
    A: NDArray[np.float64],
    regularizers: RegularizerSet,
    shape: Optional[tuple[int, int]] = None,
) -> AbundanceTerms:
    """Sum of every active abundance-side term (sparsity and spatial)."""
    total = sparsity_terms(A, regularizers.mu)
    if regularizers.has_spatial:
        if shape is None:
            raise InputError("spatial regularization needs the image shape (a, b)")
        spatial = spatial_terms(A, shape, regularizers)
        total = AbundanceTerms(
            total.penalty + spatial.penalty,
            total.gradient + spatial.gradient,
            total.denominator + spatial.denominator,
            total.numerator + spatial.numerator,
        )
    return total
