"""Break-glass: quorum-gated, time-boxed emergency access.

Nobody holds standing emergency rights. A responder files a request
carrying a contract template; approval by a quorum of other people
activates it for a short, pre-defined window, and the sweep tears it
all down again the moment the window closes. Activation itself is a
critical alert, never a quiet event.
"""

from __future__ import annotations

import secrets
from dataclasses import dataclass, field, replace

from .contracts import DRAFT, ORIGIN_BREAK_GLASS, DataContract, validate_contract
from .errors import (
    BadConfig,
    DuplicateApproval,
    SelfApproval,
    StateError,
    UnknownAccount,
    UnknownEntity,
    ValidationFailed,
)
from .model import SchemaCatalog

PENDING = "Pending"
ACTIVATED = "Activated"
DENIED = "Denied"
AUTO_REVOKED = "AutoRevoked"

DEFAULT_QUORUM = 2
DEFAULT_ACTIVATION_WINDOW = 900


@dataclass
class BreakGlassRequest:
    request_id: str
    account_id: str
    justification: str
    template: DataContract  # Draft, origin BreakGlass, principal = account
    quorum: int
    activation_window: int  # seconds the activated contract lives
    approvals: list[str] = field(default_factory=list)
    status: str = PENDING
    activated_contract_id: str | None = None


class BreakGlassService:
    """Request and approval state; the broker composes activation around it."""

    def __init__(self, quorum: int = DEFAULT_QUORUM, activation_window: int = DEFAULT_ACTIVATION_WINDOW):
        if quorum < 2:
            raise BadConfig("break-glass quorum must be at least 2")
        if activation_window <= 0:
            raise BadConfig("activation window must be positive")
        self.quorum = quorum
        self.activation_window = activation_window
        self.accounts: dict[str, str] = {}
        self.requests: dict[str, BreakGlassRequest] = {}

    def register_account(self, account_id: str):
        self.accounts[account_id] = account_id

    def request_access(
        self,
        account_id: str,
        template: DataContract,
        justification: str,
        catalog: SchemaCatalog,
        now: int,
    ) -> BreakGlassRequest:
        if account_id not in self.accounts:
            raise UnknownAccount(f"no break-glass account {account_id!r}")
        if template.status != DRAFT:
            raise ValidationFailed("template must be a Draft contract")
        if template.principal != account_id:
            raise ValidationFailed(
                f"template principal {template.principal!r} must be the requesting account"
            )
        report = validate_contract(template, catalog)
        if not report.ok:
            problems = "; ".join(f"{code}: {msg}" for code, msg in report.problems)
            raise ValidationFailed(f"template failed validation: {problems}")
        req = BreakGlassRequest(
            request_id=f"req-{secrets.token_hex(6)}",
            account_id=account_id,
            justification=justification,
            template=replace(template, origin=ORIGIN_BREAK_GLASS),
            quorum=self.quorum,
            activation_window=self.activation_window,
        )
        self.requests[req.request_id] = req
        return req

    def approve(self, request_id: str, approver: str, now: int) -> tuple[BreakGlassRequest, bool]:
        """Record one approval; returns (request, quorum_just_reached).

        The requester can never be an approver, and each approver counts
        once. Crossing the quorum flips nothing here by itself; the
        broker performs the activation in the same atomic step.
        """
        req = self._get(request_id)
        if req.status != PENDING:
            raise StateError(f"request {request_id} is {req.status}")
        if approver == req.account_id:
            raise SelfApproval("requester cannot approve their own request")
        if approver in req.approvals:
            raise DuplicateApproval(f"{approver} already approved {request_id}")
        req.approvals.append(approver)
        return req, len(req.approvals) >= req.quorum

    def mark_activated(self, request_id: str, contract_id: str):
        req = self._get(request_id)
        req.status = ACTIVATED
        req.activated_contract_id = contract_id

    def deny(self, request_id: str, now: int) -> BreakGlassRequest:
        req = self._get(request_id)
        if req.status != PENDING:
            raise StateError(f"request {request_id} is {req.status}")
        req.status = DENIED
        return req

    def sweep(self, now: int, contract_is_live) -> list[BreakGlassRequest]:
        """Auto-revoke every Activated request whose contract is no longer live."""
        revoked = []
        for req in self.requests.values():
            if req.status != ACTIVATED:
                continue
            if not contract_is_live(req.activated_contract_id, now):
                req.status = AUTO_REVOKED
                revoked.append(req)
        return revoked

    def _get(self, request_id: str) -> BreakGlassRequest:
        if request_id not in self.requests:
            raise UnknownEntity(f"no break-glass request {request_id!r}")
        return self.requests[request_id]
