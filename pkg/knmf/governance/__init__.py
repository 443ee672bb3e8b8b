"""Run ledger and solver telemetry."""

from knmf.governance.audit_logger import AuditEntry, AuditLogger, digest_arrays, digest_config
from knmf.governance.telemetry import REGISTRY, SolverTelemetry, write_metrics

__all__ = [
    "AuditEntry",
    "AuditLogger",
    "digest_arrays",
    "digest_config",
    "REGISTRY",
    "SolverTelemetry",
    "write_metrics",
]
