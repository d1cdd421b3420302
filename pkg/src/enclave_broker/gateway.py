"""The gateway: the single mediated path to enclave data.

Sessions are bearer-token handles onto one Serving enclave. Every
statement, allowed or denied or even unparseable, produces exactly one
audit event and one monitor event; there is no unlogged path. Execution
reads only the enclave's sealed segments, never the upstream store.
"""

from __future__ import annotations

import secrets
from dataclasses import dataclass

from .audit import (
    ALERT_RAISED,
    QUERY_DENIED,
    QUERY_EXECUTED,
    SESSION_CLOSED,
    SESSION_OPENED,
    AuditLedger,
)
from .contracts import DataContract, Grant, is_live
from .enclave import SERVING, EnclaveInstance
from .errors import BadToken, ContractExpired, EnclaveNotServing, ParseError, SessionDead
from .model import DATE, days_to_date
from .monitor import KIND_INVALID, VERDICT_ALLOW, VERDICT_DENY, AccessMonitor, MonitorEvent
from .query import COPY_INTO, SELECT, SHOW_TABLES, QueryAst, parse_query
from .store import eval_predicate

DENY_UNKNOWN_TABLE = "UnknownTable"
DENY_COLUMN_OUT_OF_SCOPE = "ColumnOutOfScope"
DENY_STATEMENT_FORBIDDEN = "StatementForbidden"
DENY_SESSION_DEAD = "SessionDead"
DENY_CONTRACT_EXPIRED = "ContractExpired"
DENY_ROW_LIMIT_EXCEEDED = "RowLimitExceeded"  # reserved; truncation is preferred
DENY_CODES = (
    DENY_UNKNOWN_TABLE,
    DENY_COLUMN_OUT_OF_SCOPE,
    DENY_STATEMENT_FORBIDDEN,
    DENY_SESSION_DEAD,
    DENY_CONTRACT_EXPIRED,
    DENY_ROW_LIMIT_EXCEEDED,
)


@dataclass
class Session:
    session_id: str
    enclave_id: str
    contract_id: str
    token: str
    opened_at: int
    closed: bool = False
    invalidated: bool = False  # set when the enclave leaves Serving


@dataclass(frozen=True)
class Decision:
    verdict: str  # "Allow" | "Deny"
    deny_code: str | None = None

    @property
    def allowed(self) -> bool:
        return self.verdict == VERDICT_ALLOW


ALLOW = Decision(VERDICT_ALLOW)


def deny(code: str) -> Decision:
    return Decision(VERDICT_DENY, code)


@dataclass(frozen=True)
class QueryResult:
    columns: tuple[str, ...]
    column_types: tuple[str, ...]
    rows: tuple[tuple, ...]
    truncated: bool

    def to_json(self) -> dict:
        rows = [
            [days_to_date(cell) if t == DATE else cell for cell, t in zip(row, self.column_types)]
            for row in self.rows
        ]
        return {"columns": list(self.columns), "rows": rows, "truncated": self.truncated}


class DenialError(Exception):
    """A denied statement, carrying the gateway's Decision."""

    def __init__(self, decision: Decision, message: str = ""):
        super().__init__(message or decision.deny_code)
        self.decision = decision
        self.code = decision.deny_code


def _grant_for_table(c: DataContract, table: str) -> tuple[int, Grant] | None:
    for i, g in enumerate(c.grants):
        if g.table_name() == table:
            return i, g
    return None


def authorize(ast: QueryAst, c: DataContract, s: Session, now: int) -> Decision:
    """Score one parsed statement against contract and session state.

    Checks run against the contract even though the segments already
    exclude everything out of scope; two fences, one decision.
    """
    if ast.kind == COPY_INTO:
        return deny(DENY_STATEMENT_FORBIDDEN)
    if s.closed:
        return deny(DENY_SESSION_DEAD)
    if not is_live(c, now):
        return deny(DENY_CONTRACT_EXPIRED)
    if s.invalidated:
        return deny(DENY_SESSION_DEAD)
    if ast.kind == SHOW_TABLES:
        return ALLOW
    found = _grant_for_table(c, ast.table)
    if found is None:
        return deny(DENY_UNKNOWN_TABLE)
    _, grant = found
    if grant.columns is not None:
        granted = set(grant.columns)
        for col in ast.named_columns():
            if col not in granted:
                return deny(DENY_COLUMN_OUT_OF_SCOPE)
    return ALLOW


class QueryGateway:
    """Session registry plus the execute path; owns nothing upstream."""

    def __init__(self, ledger: AuditLedger, monitor: AccessMonitor):
        self._ledger = ledger
        self._monitor = monitor
        self.sessions: dict[str, Session] = {}
        self.execute_calls = 0

    def open_session(
        self,
        enclave: EnclaveInstance,
        contract: DataContract,
        expected_token: str | None,
        presented_token: str,
        now: int,
    ) -> Session:
        if enclave.state != SERVING:
            raise EnclaveNotServing(f"enclave {enclave.enclave_id} is {enclave.state}")
        if expected_token is None or presented_token != expected_token:
            raise BadToken("token does not match the contract principal's credential")
        if not is_live(contract, now):
            raise ContractExpired(f"contract {contract.contract_id} is not live")
        s = Session(
            session_id=f"ses-{secrets.token_hex(6)}",
            enclave_id=enclave.enclave_id,
            contract_id=contract.contract_id,
            token=presented_token,
            opened_at=now,
        )
        self.sessions[s.session_id] = s
        self._ledger.append(
            now,
            contract.principal,
            SESSION_OPENED,
            {
                "session_id": s.session_id,
                "enclave_id": s.enclave_id,
                "contract_id": s.contract_id,
            },
        )
        return s

    def close_session(self, s: Session, now: int, actor: str) -> None:
        if s.closed:
            raise SessionDead(f"session {s.session_id} already closed")
        s.closed = True
        self._ledger.append(
            now,
            actor,
            SESSION_CLOSED,
            {"session_id": s.session_id, "enclave_id": s.enclave_id, "contract_id": s.contract_id},
        )

    def invalidate_for_enclave(self, enclave_id: str) -> list[str]:
        """Called in the same atomic step as an enclave shutdown."""
        hit = []
        for s in self.sessions.values():
            if s.enclave_id == enclave_id and not s.invalidated:
                s.invalidated = True
                hit.append(s.session_id)
        return hit

    def execute(
        self,
        s: Session,
        enclave: EnclaveInstance,
        contract: DataContract,
        text: str,
        now: int,
    ) -> QueryResult:
        """parse, authorize, evaluate; always audited, always monitored."""
        self.execute_calls += 1
        try:
            ast = parse_query(text)
        except ParseError as exc:
            self._report(s, contract, KIND_INVALID, False, VERDICT_DENY, 0, now, text, error=str(exc))
            raise
        star = ast.kind == SELECT and ast.columns is None
        decision = authorize(ast, contract, s, now)
        if decision.allowed and enclave.state != SERVING:
            # Unreachable when shutdowns invalidate sessions atomically.
            decision = deny(DENY_SESSION_DEAD)
        result = None
        if decision.allowed:
            if ast.kind == SHOW_TABLES:
                result = self._show_tables(contract)
            else:
                result, decision = self._evaluate_select(ast, contract, enclave)
        rows_returned = len(result.rows) if result is not None else 0
        verdict = VERDICT_ALLOW if decision.allowed else VERDICT_DENY
        self._report(
            s,
            contract,
            ast.kind,
            star,
            verdict,
            rows_returned,
            now,
            text,
            deny_code=decision.deny_code,
        )
        if not decision.allowed:
            raise DenialError(decision, f"{decision.deny_code}: {text!r}")
        return result

    def _show_tables(self, contract: DataContract) -> QueryResult:
        names: list[str] = []
        for g in contract.grants:
            name = g.table_name()
            if name not in names:
                names.append(name)
        return QueryResult(("table",), ("TEXT",), tuple((n,) for n in names), False)

    def _evaluate_select(
        self, ast: QueryAst, contract: DataContract, enclave: EnclaveInstance
    ) -> tuple[QueryResult | None, Decision]:
        index, grant = _grant_for_table(contract, ast.table)
        segment = enclave.segments[index]
        seg_cols = {col: i for i, col in enumerate(segment.columns)}
        for col in ast.named_columns():
            if col not in seg_cols:
                return None, deny(DENY_COLUMN_OUT_OF_SCOPE)
        out_cols = segment.columns if ast.columns is None else ast.columns
        assert set(out_cols) <= set(segment.columns)
        schema = tuple(zip(segment.columns, segment.column_types))
        matched = [row for row in segment.rows if eval_predicate(row, schema, ast.predicate)]
        limit = len(matched)
        if ast.limit is not None:
            limit = min(limit, ast.limit)
        if grant.row_limit is not None:
            limit = min(limit, grant.row_limit)
        truncated = limit < len(matched)
        picks = [seg_cols[c] for c in out_cols]
        types = tuple(segment.column_types[i] for i in picks)
        rows = tuple(tuple(row[i] for i in picks) for row in matched[:limit])
        return QueryResult(tuple(out_cols), types, rows, truncated), ALLOW

    def _report(
        self,
        s: Session,
        contract: DataContract,
        kind: str,
        star: bool,
        verdict: str,
        rows_returned: int,
        now: int,
        text: str,
        deny_code: str | None = None,
        error: str | None = None,
    ):
        payload = {
            "session_id": s.session_id,
            "enclave_id": s.enclave_id,
            "contract_id": s.contract_id,
            "statement_kind": kind,
            "statement": text,
            "rows_returned": rows_returned,
        }
        if deny_code is not None:
            payload["deny_code"] = deny_code
        if error is not None:
            payload["error"] = error
        audit_kind = QUERY_EXECUTED if verdict == VERDICT_ALLOW else QUERY_DENIED
        self._ledger.append(now, contract.principal, audit_kind, payload)
        event = MonitorEvent(
            session_id=s.session_id,
            enclave_id=s.enclave_id,
            contract_id=s.contract_id,
            statement_kind=kind,
            verdict=verdict,
            rows_returned=rows_returned,
            timestamp=now,
            select_star=star,
        )
        for alert in self._monitor.record_event(event):
            self._ledger.append(
                now,
                "monitor",
                ALERT_RAISED,
                {
                    "alert_id": alert.alert_id,
                    "rule": alert.rule,
                    "severity": alert.severity,
                    "session_id": alert.session_id,
                    "contract_id": alert.contract_id,
                },
            )
