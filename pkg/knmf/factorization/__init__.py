"""Kernel NMF factorization: types, update rules and the alternating driver."""

from knmf.factorization.types import (
    Abundances,
    Endmembers,
    HyperCube,
    InitMethod,
    RunResult,
    Scheme,
    SolverConfig,
    StepsizePolicy,
)
from knmf.factorization.updates import (
    abundance_gradient,
    additive_step_a,
    additive_step_e,
    cost,
    endmember_gradient,
    grad_a,
    grad_e,
    initialize,
    multiplicative_step_a,
    multiplicative_step_e,
    normalize_columns,
    objective,
    penalty,
)
from knmf.factorization.workflow import UnmixingWorkflow, run

__all__ = [
    "Abundances",
    "Endmembers",
    "HyperCube",
    "InitMethod",
    "RunResult",
    "Scheme",
    "SolverConfig",
    "StepsizePolicy",
    "abundance_gradient",
    "additive_step_a",
    "additive_step_e",
    "cost",
    "endmember_gradient",
    "grad_a",
    "grad_e",
    "initialize",
    "multiplicative_step_a",
    "multiplicative_step_e",
    "normalize_columns",
    "objective",
    "penalty",
    "UnmixingWorkflow",
    "run",
]
