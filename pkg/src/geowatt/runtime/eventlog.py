"""Append-only event log.

Every record carries a strictly increasing sequence number, the pipeline
clock's timestamp, a kind, and a JSON payload. The log is the system of
record: replaying the input-bearing records through a fresh pipeline
reconstructs the exact live state (see pipeline.recover).
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from datetime import datetime
from typing import Callable, Iterable


class EventKind:
    FIX_ACCEPTED = "FixAccepted"
    FIX_REJECTED = "FixRejected"
    PRESENCE = "Presence"
    DECISION = "Decision"
    DEVICE_COMMAND = "DeviceCommand"
    DEVICE_REPLY = "DeviceReply"
    LEDGER_APPEND = "LedgerAppend"
    POLICY_EDIT = "PolicyEdit"

    ALL = (
        FIX_ACCEPTED,
        FIX_REJECTED,
        PRESENCE,
        DECISION,
        DEVICE_COMMAND,
        DEVICE_REPLY,
        LEDGER_APPEND,
        POLICY_EDIT,
    )


@dataclass(frozen=True)
class EventRecord:
    seq: int
    at: datetime
    kind: str
    payload: dict

    def to_json(self) -> str:
        return json.dumps(
            {"seq": self.seq, "at": self.at.isoformat(), "kind": self.kind, "payload": self.payload},
            sort_keys=True,
        )


class EventLog:
    """In-memory record list with an optional JSONL sink and change signal."""

    def __init__(self, path: str | None = None):
        self.records: list[EventRecord] = []
        self._path = path
        self._fh = open(path, "a", encoding="utf-8") if path else None
        self._cond = threading.Condition()
        self._listeners: list[Callable[[EventRecord], None]] = []

    @property
    def last_seq(self) -> int:
        return self.records[-1].seq if self.records else 0

    def append(self, at: datetime, kind: str, payload: dict) -> EventRecord:
        if kind not in EventKind.ALL:
            raise ValueError(f"unknown event kind {kind!r}")
        with self._cond:
            record = EventRecord(seq=self.last_seq + 1, at=at, kind=kind, payload=payload)
            self.records.append(record)
            if self._fh:
                self._fh.write(record.to_json() + "\n")
                self._fh.flush()
            self._cond.notify_all()
        for listener in self._listeners:
            listener(record)
        return record

    def since(self, seq: int) -> list[EventRecord]:
        return [r for r in self.records if r.seq > seq]

    def wait_for(self, seq: int, timeout: float) -> list[EventRecord]:
        """Block until a record newer than seq exists, or the timeout passes."""
        with self._cond:
            self._cond.wait_for(lambda: self.last_seq > seq, timeout=timeout)
            return self.since(seq)

    def subscribe(self, listener: Callable[[EventRecord], None]) -> None:
        self._listeners.append(listener)

    def close(self) -> None:
        if self._fh:
            self._fh.close()
            self._fh = None


def read_log(path: str) -> tuple[list[EventRecord], str | None]:
    """Read records until the first corrupt line; returns (records, error).

    A parse failure or a sequence gap stops the scan at the last valid
    record rather than failing the whole recovery.
    """
    records: list[EventRecord] = []
    error: str | None = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
                record = EventRecord(
                    seq=int(doc["seq"]),
                    at=datetime.fromisoformat(doc["at"]),
                    kind=str(doc["kind"]),
                    payload=dict(doc["payload"]),
                )
                if record.kind not in EventKind.ALL:
                    raise ValueError(f"unknown kind {record.kind!r}")
            except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
                error = f"line {lineno}: {exc}"
                break
            if records and record.seq != records[-1].seq + 1:
                error = f"line {lineno}: sequence gap ({records[-1].seq} -> {record.seq})"
                break
            records.append(record)
    return records, error


def write_log(path: str, records: Iterable[EventRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(record.to_json() + "\n")
