"""
Unmixing Workflow

Alternating driver: initialize, then per iteration sweep A, optionally
normalize its columns, sweep E, and record the cost. Final factors are
scored with RE and RE^Φ and reported to telemetry.
"""

import time
from typing import Optional, Union

import numpy as np
import structlog
from numpy.typing import NDArray

from knmf.errors import DivergedRunError
from knmf.factorization.types import Abundances, Endmembers, HyperCube, RunResult, Scheme, SolverConfig
from knmf.factorization.updates import (
    additive_step_a,
    additive_step_e,
    cost,
    initialize,
    multiplicative_step_a,
    multiplicative_step_e,
    normalize_columns,
    penalty,
    zero_columns,
)
from knmf.governance.telemetry import SolverTelemetry
from knmf.metrics import feature_reconstruction_error, reconstruction_error

logger = structlog.get_logger(__name__)


class UnmixingWorkflow:
    """
    Runs one kernel NMF factorization.

    Sequential mode (threads=1) is the bit-exact reference; with more
    threads the per-pixel A-sweep and per-endmember E-sweep are chunked
    over a thread pool.
    """

    def __init__(self, config: SolverConfig, telemetry: Optional[SolverTelemetry] = None):
        config.check_supported()
        self.config = config
        self.telemetry = telemetry or SolverTelemetry()

    @property
    def _labels(self) -> dict[str, str]:
        return {"kernel": self.config.kernel.variant.value, "scheme": self.config.scheme.value}

    def _step_a(
        self, X: NDArray[np.float64], E: Endmembers, A: Abundances, shape: Optional[tuple[int, int]]
    ) -> Abundances:
        cfg = self.config
        if cfg.scheme == Scheme.MULTIPLICATIVE:
            return multiplicative_step_a(
                X, E, A, cfg.kernel, cfg.regularizers, shape, cfg.epsilon_guard, cfg.threads
            )
        return additive_step_a(X, E, A, cfg.kernel, cfg.stepsize, cfg.regularizers, shape, cfg.threads)

    def _step_e(self, X: NDArray[np.float64], E: Endmembers, A: Abundances) -> Endmembers:
        cfg = self.config
        if cfg.scheme == Scheme.MULTIPLICATIVE:
            return multiplicative_step_e(X, E, A, cfg.kernel, cfg.regularizers, cfg.epsilon_guard, cfg.threads)
        return additive_step_e(
            X, E, A, cfg.kernel, cfg.stepsize, cfg.regularizers, cfg.semi_nmf, cfg.threads
        )

    def _normalize(self, A: Abundances, flagged: set[int]) -> Abundances:
        zeros = zero_columns(A)
        if zeros:
            flagged.update(zeros)
            logger.warning("zero_abundance_columns", count=len(zeros), first=zeros[0])
        return normalize_columns(A)

    def run(
        self,
        data: Union[HyperCube, NDArray[np.float64]],
        initial: Optional[tuple[Endmembers, Abundances]] = None,
    ) -> RunResult:
        """
        Factorize the cube.

        Args:
            data: HyperCube (required for spatial regularization) or an L×T matrix
            initial: optional starting (E, A); overrides config.init

        Returns:
            RunResult with cost_trace of length iterations + 1

        Raises:
            DivergedRunError: the cost became non-finite
        """
        cfg = self.config
        if isinstance(data, HyperCube):
            X, shape = data.X, data.shape
        else:
            X, shape = np.asarray(data, dtype=np.float64), None

        if initial is not None:
            E, A = (np.array(M, dtype=np.float64) for M in initial)
        else:
            E, A = initialize(cfg, X)

        logger.info(
            "run_started",
            kernel=cfg.kernel.label,
            scheme=cfg.scheme.value,
            rank=cfg.rank,
            iterations=cfg.iterations,
            bands=X.shape[0],
            pixels=X.shape[1],
        )
        started = time.perf_counter()

        J = cost(X, E, A, cfg.kernel)
        cost_trace = [J]
        objective_trace = [J + penalty(E, A, cfg.kernel, cfg.regularizers, shape)]
        flagged: set[int] = set()
        normalize_each = cfg.sum_to_one and cfg.normalize_every_iteration

        for iteration in range(1, cfg.iterations + 1):
            A = self._step_a(X, E, A, shape)
            if normalize_each:
                A = self._normalize(A, flagged)
            E = self._step_e(X, E, A)

            J = cost(X, E, A, cfg.kernel)
            if not np.isfinite(J):
                self.telemetry.record_divergence(**self._labels)
                logger.error("run_diverged", iteration=iteration, last_cost=cost_trace[-1])
                raise DivergedRunError(
                    f"cost became non-finite at iteration {iteration}",
                    cost_trace=cost_trace,
                    iteration=iteration,
                )
            cost_trace.append(J)
            objective_trace.append(J + penalty(E, A, cfg.kernel, cfg.regularizers, shape))
            self.telemetry.record_iteration(**self._labels)
            logger.debug("iteration_completed", iteration=iteration, cost=J)

        if cfg.sum_to_one and not cfg.normalize_every_iteration:
            A = self._normalize(A, flagged)
            cost_trace[-1] = cost(X, E, A, cfg.kernel)
            objective_trace[-1] = cost_trace[-1] + penalty(E, A, cfg.kernel, cfg.regularizers, shape)

        re = reconstruction_error(X, E, A)
        re_phi = feature_reconstruction_error(X, E, A, cfg.kernel)
        wall_time = time.perf_counter() - started
        self.telemetry.record_run(seconds=wall_time, re=re, **self._labels)

        logger.info(
            "run_completed",
            final_cost=cost_trace[-1],
            re=re,
            re_phi=re_phi,
            wall_time=round(wall_time, 4),
        )
        return RunResult(
            E=E,
            A=A,
            cost_trace=cost_trace,
            objective_trace=objective_trace,
            re=re,
            re_phi=re_phi,
            wall_time=wall_time,
            config=cfg,
            zero_columns=sorted(flagged),
        )


def run(
    config: SolverConfig,
    data: Union[HyperCube, NDArray[np.float64]],
    initial: Optional[tuple[Endmembers, Abundances]] = None,
) -> RunResult:
    """Convenience wrapper around UnmixingWorkflow(config).run(data)."""
    return UnmixingWorkflow(config).run(data, initial)
