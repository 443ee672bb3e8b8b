"""
Solver Telemetry

Prometheus counters and histograms for solver runs and probes, kept in a
dedicated registry so a CLI invocation can dump exactly its own metrics
in the text exposition format (--metrics-file).
"""

from pathlib import Path
from typing import Union

import structlog
from prometheus_client import CollectorRegistry, Counter, Gauge, Histogram, write_to_textfile

logger = structlog.get_logger(__name__)

REGISTRY = CollectorRegistry()

SOLVER_ITERATIONS = Counter(
    "knmf_solver_iterations_total",
    "Completed alternating iterations",
    ["kernel", "scheme"],
    registry=REGISTRY,
)
RUN_SECONDS = Histogram(
    "knmf_run_seconds",
    "Wall time of a full solver run in seconds",
    ["kernel", "scheme"],
    buckets=[0.01, 0.05, 0.1, 0.5, 1.0, 5.0, 10.0, 30.0, 60.0, 300.0],
    registry=REGISTRY,
)
DIVERGED_RUNS = Counter(
    "knmf_diverged_runs_total",
    "Runs aborted on a non-finite cost",
    ["kernel", "scheme"],
    registry=REGISTRY,
)
FINAL_RE = Gauge(
    "knmf_final_reconstruction_error",
    "Input-space RE of the most recent run",
    ["kernel", "scheme"],
    registry=REGISTRY,
)
PROBE_SAMPLES = Counter(
    "knmf_probe_samples_total",
    "Instances drawn by the nonconvexity probe",
    ["kernel"],
    registry=REGISTRY,
)


class SolverTelemetry:
    """Records solver and probe activity; keeps local totals for the current process."""

    def __init__(self) -> None:
        self.iterations = 0
        self.runs = 0
        self.diverged = 0
        self.probe_samples = 0

    def record_iteration(self, kernel: str, scheme: str) -> None:
        SOLVER_ITERATIONS.labels(kernel=kernel, scheme=scheme).inc()
        self.iterations += 1

    def record_run(self, kernel: str, scheme: str, seconds: float, re: float) -> None:
        """Record one completed run."""
        RUN_SECONDS.labels(kernel=kernel, scheme=scheme).observe(seconds)
        FINAL_RE.labels(kernel=kernel, scheme=scheme).set(re)
        self.runs += 1
        logger.debug("run_recorded", kernel=kernel, scheme=scheme, seconds=seconds, re=re)

    def record_divergence(self, kernel: str, scheme: str) -> None:
        DIVERGED_RUNS.labels(kernel=kernel, scheme=scheme).inc()
        self.diverged += 1

    def record_probe(self, kernel: str, samples: int) -> None:
        PROBE_SAMPLES.labels(kernel=kernel).inc(samples)
        self.probe_samples += samples

    def summary(self) -> dict:
        return {
            "iterations": self.iterations,
            "runs": self.runs,
            "diverged": self.diverged,
            "probe_samples": self.probe_samples,
        }


def write_metrics(path: Union[str, Path]) -> Path:
    """Dump the registry in the Prometheus text exposition format."""
    target = Path(path)
    write_to_textfile(str(target), REGISTRY)
    logger.info("metrics_written", path=str(target))
    return target
