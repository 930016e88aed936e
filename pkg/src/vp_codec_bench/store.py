"""Append-only JSON-lines experiment store."""

from __future__ import annotations

import hashlib
import json
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .log import get_logger

KINDS = (
    "experiment", "ladder", "ladder_point", "alignment", "quality", "curve", "speed", "failure",
)


def make_key(*parts) -> str:
    """Human-readable record key; None renders as 'na'."""
    return "|".join("na" if p is None else str(p) for p in parts)


def digest(data) -> str:
    raw = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(raw.encode()).hexdigest()[:12]


def make_record(
    kind: str,
    key: str,
    data: dict,
    manifest_hash: str,
    volatile: dict | None = None,
) -> dict:
    if kind not in KINDS:
        raise ValueError(f"unknown record kind {kind!r}")
    volatile = dict(volatile or {})
    volatile.setdefault("timestamp", datetime.now(timezone.utc).isoformat())
    return {
        "kind": kind,
        "key": key,
        "manifest_hash": manifest_hash,
        "tool_version": __version__,
        "data": data,
        "volatile": volatile,
    }


def strip_volatile(record: dict) -> dict:
    """Record without the wall-clock fields excluded from determinism checks."""
    return {k: v for k, v in record.items() if k != "volatile"}


class ExperimentStore:
    """Records keyed by (kind, key, manifest_hash); appends of a known key are no-ops."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._records: list[dict] = []
        self._index: dict[tuple[str, str, str], int] = {}
        self._load()

    def _load(self) -> None:
        logger = get_logger()
        if not self.path.exists():
            return
        with open(self.path) as f:
            for lineno, line in enumerate(f, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    record = json.loads(line)
                    ident = (record["kind"], record["key"], record["manifest_hash"])
                except (json.JSONDecodeError, KeyError, TypeError) as e:
                    logger.warning("Skipping malformed store line %d in %s: %s", lineno, self.path, e)
                    continue
                self._index.setdefault(ident, len(self._records))
                self._records.append(record)
        logger.debug("Loaded %d records from %s", len(self._records), self.path)

    def __len__(self) -> int:
        return len(self._records)

    def has(self, kind: str, key: str, manifest_hash: str) -> bool:
        return (kind, key, manifest_hash) in self._index

    def get(self, kind: str, key: str, manifest_hash: str) -> dict | None:
        idx = self._index.get((kind, key, manifest_hash))
        return None if idx is None else self._records[idx]

    def append(self, record: dict) -> bool:
        """Append record unless its identity is already stored. Returns True if written."""
        ident = (record["kind"], record["key"], record["manifest_hash"])
        if ident in self._index:
            return False
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "a") as f:
            f.write(json.dumps(record, sort_keys=True) + "\n")
        self._index[ident] = len(self._records)
        self._records.append(record)
        return True

    def add(
        self,
        kind: str,
        key: str,
        data: dict,
        manifest_hash: str,
        volatile: dict | None = None,
    ) -> bool:
        return self.append(make_record(kind, key, data, manifest_hash, volatile))

    def records(self, kind: str | None = None, manifest_hash: str | None = None) -> list[dict]:
        return [
            r for r in self._records
            if (kind is None or r["kind"] == kind)
            and (manifest_hash is None or r["manifest_hash"] == manifest_hash)
        ]

    def manifest_hashes(self) -> list[str]:
        """Distinct manifest hashes in order of first appearance."""
        seen: list[str] = []
        for r in self._records:
            if r["manifest_hash"] not in seen:
                seen.append(r["manifest_hash"])
        return seen

    def latest_manifest_hash(self) -> str | None:
        """Hash of the most recent experiment record (or record, if none)."""
        for r in reversed(self._records):
            if r["kind"] == "experiment":
                return r["manifest_hash"]
        return self._records[-1]["manifest_hash"] if self._records else None
