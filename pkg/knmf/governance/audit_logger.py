"""
Audit Logger

Append-only run ledger with hash chain integrity. Every CLI operation
(synth, unmix, eval, probe, gradcheck, sweep) leaves one entry holding a
digest of its resolved configuration and of the arrays it produced, so a
rerun with the same flags and seeds can be checked against the ledger.
"""

from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Union
import hashlib
import json
import uuid

import numpy as np
import structlog

logger = structlog.get_logger(__name__)

GENESIS_HASH = "genesis_0000000000000000"


def digest_arrays(*arrays: np.ndarray) -> str:
    """SHA-256 over dtype, shape and raw little-endian bytes of each array."""
    h = hashlib.sha256()
    for arr in arrays:
        a = np.ascontiguousarray(arr, dtype="<f8")
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()


def digest_config(config: dict) -> str:
    """SHA-256 of a JSON-serializable configuration, key order independent."""
    return hashlib.sha256(json.dumps(config, sort_keys=True, default=str).encode()).hexdigest()


class AuditEntry:
    """Single ledger entry with hash chain."""

    def __init__(
        self,
        entry_id: str,
        timestamp: datetime,
        component: str,
        operation: str,
        details: dict,
        previous_hash: str,
    ):
        self.entry_id = entry_id
        self.timestamp = timestamp
        self.component = component
        self.operation = operation
        self.details = details
        self.previous_hash = previous_hash
        self.hash = self._compute_hash()

    def _compute_hash(self) -> str:
        """Compute SHA-256 hash of entry."""
        content = json.dumps(
            {
                "entry_id": self.entry_id,
                "timestamp": self.timestamp.isoformat(),
                "component": self.component,
                "operation": self.operation,
                "details": self.details,
                "previous_hash": self.previous_hash,
            },
            sort_keys=True,
            default=str,
        )
        return hashlib.sha256(content.encode()).hexdigest()

    def to_dict(self) -> dict:
        return {
            "entry_id": self.entry_id,
            "timestamp": self.timestamp.isoformat(),
            "component": self.component,
            "operation": self.operation,
            "details": self.details,
            "previous_hash": self.previous_hash,
            "hash": self.hash,
        }


class AuditLogger:
    """
    Run ledger with hash chain for tamper detection.

    Entries are linked through previous_hash; verify_chain recomputes
    every hash and every link.
    """

    def __init__(self, component: str = "knmf"):
        self.component = component
        self.chain: list[AuditEntry] = []

    def _get_previous_hash(self) -> str:
        if self.chain:
            return self.chain[-1].hash
        return GENESIS_HASH

    def log_operation(self, operation: str, **details: Any) -> AuditEntry:
        """
        Append an operation to the ledger.

        Args:
            operation: Operation type (e.g., "unmix")
            **details: JSON-serializable context (digests, metrics, paths)

        Returns:
            AuditEntry with hash
        """
        entry = AuditEntry(
            entry_id=str(uuid.uuid4()),
            timestamp=datetime.now(timezone.utc),
            component=self.component,
            operation=operation,
            details=self._sanitize_details(details),
            previous_hash=self._get_previous_hash(),
        )
        self.chain.append(entry)

        logger.info(
            "audit_entry",
            entry_id=entry.entry_id,
            component=entry.component,
            operation=entry.operation,
            hash=entry.hash[:16],
        )
        return entry

    def _sanitize_details(self, details: dict) -> dict:
        """Replace array payloads by their digest; truncate long strings."""
        sanitized: dict[str, Any] = {}
        for key, value in details.items():
            if isinstance(value, np.ndarray):
                sanitized[key] = f"sha256:{digest_arrays(value)}"
            elif isinstance(value, str) and len(value) > 1000:
                sanitized[key] = f"[TRUNCATED:{len(value)} chars]"
            elif isinstance(value, Path):
                sanitized[key] = str(value)
            else:
                sanitized[key] = value
        return sanitized

    def verify_chain(self) -> dict:
        """
        Verify integrity of the ledger.

        Returns:
            Verification result with any integrity failures.
        """
        failures = []
        for i, entry in enumerate(self.chain):
            if entry.hash != entry._compute_hash():
                failures.append({"entry_id": entry.entry_id, "error": "hash_mismatch", "position": i})
            expected_prev = self.chain[i - 1].hash if i > 0 else GENESIS_HASH
            if entry.previous_hash != expected_prev:
                failures.append({"entry_id": entry.entry_id, "error": "chain_break", "position": i})

        return {
            "verified": len(failures) == 0,
            "entries_checked": len(self.chain),
            "failures": failures,
        }

    def export(self, path: Union[str, Path]) -> Path:
        """Write the ledger as a JSON array."""
        target = Path(path)
        target.write_text(json.dumps([e.to_dict() for e in self.chain], indent=2, default=str), encoding="utf-8")
        logger.info("audit_exported", path=str(target), entries=len(self.chain))
        return target
