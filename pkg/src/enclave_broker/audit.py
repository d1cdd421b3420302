"""Append-only, hash-chained audit ledger.

Every event's hash covers its sequence number, timestamp, actor, kind,
payload, and the previous event's hash, so any edit, reorder, or splice
of history breaks the chain at the first touched position. The ledger
answers who accessed what, when, and under which contract, and it can
prove nobody rewrote the answer.

Persistence is JSON-Lines: one canonically encoded event per line.
Verification works on the raw file, trusting nothing in memory.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass

from .canonical import canonical_bytes, canonical_json
from .errors import StorageFailure

GENESIS = "0" * 64

CONTRACT_SUBMITTED = "ContractSubmitted"
CONTRACT_ACTIVATED = "ContractActivated"
CONTRACT_REVOKED = "ContractRevoked"
CONTRACT_EXPIRED = "ContractExpired"
ENCLAVE_TRANSITION = "EnclaveTransition"
SESSION_OPENED = "SessionOpened"
SESSION_CLOSED = "SessionClosed"
QUERY_EXECUTED = "QueryExecuted"
QUERY_DENIED = "QueryDenied"
ALERT_RAISED = "AlertRaised"
BREAK_GLASS_REQUESTED = "BreakGlassRequested"
BREAK_GLASS_APPROVED = "BreakGlassApproved"
BREAK_GLASS_ACTIVATED = "BreakGlassActivated"
BREAK_GLASS_REVOKED = "BreakGlassRevoked"
BREAK_GLASS_DENIED = "BreakGlassDenied"

KINDS = (
    CONTRACT_SUBMITTED,
    CONTRACT_ACTIVATED,
    CONTRACT_REVOKED,
    CONTRACT_EXPIRED,
    ENCLAVE_TRANSITION,
    SESSION_OPENED,
    SESSION_CLOSED,
    QUERY_EXECUTED,
    QUERY_DENIED,
    ALERT_RAISED,
    BREAK_GLASS_REQUESTED,
    BREAK_GLASS_APPROVED,
    BREAK_GLASS_ACTIVATED,
    BREAK_GLASS_REVOKED,
    BREAK_GLASS_DENIED,
)


@dataclass(frozen=True)
class AuditEvent:
    seq: int  # consecutive from 0
    timestamp: int
    actor: str
    kind: str
    payload: dict
    prev_hash: str  # GENESIS for seq 0
    hash: str

    def to_json(self) -> dict:
        return {
            "seq": self.seq,
            "timestamp": self.timestamp,
            "actor": self.actor,
            "kind": self.kind,
            "payload": self.payload,
            "prev_hash": self.prev_hash,
            "hash": self.hash,
        }


def compute_hash(seq: int, timestamp: int, actor: str, kind: str, payload: dict, prev_hash: str) -> str:
    body = {
        "seq": seq,
        "timestamp": timestamp,
        "actor": actor,
        "kind": kind,
        "payload": payload,
        "prev_hash": prev_hash,
    }
    return hashlib.sha256(canonical_bytes(body)).hexdigest()


class AuditLedger:
    """The chain plus, optionally, its file. Appends are flushed before
    the triggering operation is allowed to report success."""

    def __init__(self, path=None):
        self._events: list[AuditEvent] = []
        self._path = path
        self._fh = None
        if path is not None:
            if os.path.exists(path):
                self._events = _load_events(path)
            self._fh = open(path, "a", encoding="utf-8")

    @property
    def path(self):
        return self._path

    def __len__(self) -> int:
        return len(self._events)

    def events(self) -> list[AuditEvent]:
        return list(self._events)

    def last_hash(self) -> str:
        return self._events[-1].hash if self._events else GENESIS

    def append(self, timestamp: int, actor: str, kind: str, payload: dict) -> AuditEvent:
        if kind not in KINDS:
            raise StorageFailure(f"unknown audit kind {kind!r}")
        seq = len(self._events)
        prev = self.last_hash()
        digest = compute_hash(seq, timestamp, actor, kind, payload, prev)
        event = AuditEvent(seq, timestamp, actor, kind, payload, prev, digest)
        if self._fh is not None:
            try:
                self._fh.write(canonical_json(event.to_json()) + "\n")
                self._fh.flush()
            except OSError as exc:
                raise StorageFailure(f"audit append failed: {exc}") from None
        self._events.append(event)
        return event

    def query_log(self, kind=None, actor=None, contract_id=None, since=None, until=None):
        """Filtered scan; time bounds are half-open [since, until)."""
        out = []
        for e in self._events:
            if kind is not None and e.kind != kind:
                continue
            if actor is not None and e.actor != actor:
                continue
            if contract_id is not None and e.payload.get("contract_id") != contract_id:
                continue
            if since is not None and e.timestamp < since:
                continue
            if until is not None and e.timestamp >= until:
                continue
            out.append(e)
        return out

    def close(self):
        if self._fh is not None:
            self._fh.close()
            self._fh = None


_FIELDS = ("seq", "timestamp", "actor", "kind", "payload", "prev_hash", "hash")


def _check_line(obj, position: int, prev_hash: str) -> str | None:
    """Returns the event's hash if the line is sound at `position`, else None."""
    if not isinstance(obj, dict) or any(f not in obj for f in _FIELDS):
        return None
    if obj["seq"] != position:
        return None
    if obj["prev_hash"] != prev_hash:
        return None
    if not isinstance(obj["payload"], dict):
        return None
    expected = compute_hash(
        obj["seq"], obj["timestamp"], obj["actor"], obj["kind"], obj["payload"], obj["prev_hash"]
    )
    if obj["hash"] != expected:
        return None
    return obj["hash"]


def verify_events(events) -> int | None:
    """Recheck a parsed chain; returns the first bad seq, or None if intact."""
    prev = GENESIS
    for i, e in enumerate(events):
        obj = e.to_json() if isinstance(e, AuditEvent) else e
        prev = _check_line(obj, i, prev)
        if prev is None:
            return i
    return None


def verify_file(path) -> int | None:
    """Verify the persisted log byte-for-byte from disk.

    Any line that fails to decode, parse, or chain marks the first bad
    sequence number. Returns None when the whole file checks out.
    """
    prev = GENESIS
    position = 0
    with open(path, "rb") as fh:
        for raw in fh:
            try:
                obj = json.loads(raw.decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError):
                return position
            prev = _check_line(obj, position, prev)
            if prev is None:
                return position
            position += 1
    return None


def _load_events(path) -> list[AuditEvent]:
    events = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                events.append(
                    AuditEvent(
                        seq=obj["seq"],
                        timestamp=obj["timestamp"],
                        actor=obj["actor"],
                        kind=obj["kind"],
                        payload=obj["payload"],
                        prev_hash=obj["prev_hash"],
                        hash=obj["hash"],
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise StorageFailure(f"corrupt audit log {path}: {exc}") from None
    return events
