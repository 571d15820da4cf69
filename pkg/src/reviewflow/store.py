"""Embedded append-only store: one JSON-lines log per service instance.

Schema: each line is ``{"kind": K, "data": {...}}`` with kind one of
``event``, ``run``, ``comment``, ``resolution``. Records for the same id are
append-updated; the latest line wins on replay. Writes are serialized by a
lock; the canonical JSON encoding (sorted keys, compact separators) keeps
files byte-deterministic for identical histories.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path
from typing import Optional

KINDS = ("event", "run", "comment", "resolution")

_ID_FIELDS = {"event": "event_id", "run": "run_id", "comment": "comment_id"}


def canonical_json(data: dict) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


class LogStore:
    """Append-only log with latest-wins indexes; path=None keeps it in memory."""

    def __init__(self, path: Optional[Path] = None):
        self._path = Path(path) if path else None
        self._lock = threading.Lock()
        self._records: list[dict] = []
        self._latest: dict[str, dict[str, dict]] = {k: {} for k in _ID_FIELDS}
        self._resolutions: list[dict] = []
        if self._path and self._path.exists():
            for line in self._path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    self._ingest(json.loads(line))

    def _ingest(self, record: dict) -> None:
        kind, data = record["kind"], record["data"]
        self._records.append(record)
        if kind in _ID_FIELDS:
            self._latest[kind][data[_ID_FIELDS[kind]]] = data
        elif kind == "resolution":
            self._resolutions.append(data)

    def append(self, kind: str, data: dict) -> None:
        if kind not in KINDS:
            raise ValueError(f"unknown record kind: {kind}")
        record = {"kind": kind, "data": data}
        with self._lock:
            self._ingest(record)
            if self._path:
                with self._path.open("a", encoding="utf-8") as fh:
                    fh.write(canonical_json(record) + "\n")

    def get(self, kind: str, record_id: str) -> Optional[dict]:
        return self._latest[kind].get(record_id)

    def all_latest(self, kind: str) -> list[dict]:
        if kind == "resolution":
            return list(self._resolutions)
        return list(self._latest[kind].values())

    def log(self) -> list[dict]:
        return list(self._records)

    def dump(self) -> str:
        """The full log as canonical text (what the file would contain)."""
        return "".join(canonical_json(record) + "\n" for record in self._records)
