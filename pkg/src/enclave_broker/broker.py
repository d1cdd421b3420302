"""The broker: wiring, serialization, persistence, clock, and sweep.

One process owns everything: the table store, the contract registry,
the enclaves, the gateway, the monitor, the break-glass service, and
the audit ledger. Every protocol op runs under one lock, so observable
behavior is that of a single logical writer. Expiry is lazy: nothing
happens until time moves and someone sweeps.
"""

from __future__ import annotations

import json
import secrets
import threading
import urllib.parse
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import audit as audit_mod
from . import breakglass as bg_mod
from . import contracts as contracts_mod
from . import enclave as enclave_mod
from .audit import AuditLedger
from .breakglass import BreakGlassService
from .canonical import canonical_json
from .clock import LOGICAL, WALL, LogicalClock, WallClock
from .contracts import ACTIVE, DataContract, canonical_encode, is_live, validate_contract
from .errors import (
    BadConfig,
    BadToken,
    BrokerError,
    DuplicateContract,
    StateError,
    UnknownEntity,
    ValidationFailed,
)
from .contract_dsl import parse_contract
from .gateway import DenialError, QueryGateway
from .monitor import (
    DEFAULT_PROBING_THRESHOLD,
    DEFAULT_PROBING_WINDOW,
    DEFAULT_VOLUME_THRESHOLD,
    AccessMonitor,
)
from .store import TableStore, load_table_csv

OPS = (
    "submit_contract",
    "activate_contract",
    "revoke_contract",
    "create_enclave",
    "broker_enclave",
    "open_session",
    "query",
    "close_session",
    "alerts",
    "audit_export",
    "audit_verify",
    "bg_request",
    "bg_approve",
    "bg_deny",
    "sweep",
    "tick",
)


@dataclass
class BrokerConfig:
    data_dir: str | None = None  # None keeps everything in memory
    tables: dict[str, str] = field(default_factory=dict)  # qualified name -> CSV path
    volume_threshold: int = DEFAULT_VOLUME_THRESHOLD
    probing_threshold: int = DEFAULT_PROBING_THRESHOLD
    probing_window: int = DEFAULT_PROBING_WINDOW
    bg_quorum: int = bg_mod.DEFAULT_QUORUM
    bg_window: int = bg_mod.DEFAULT_ACTIVATION_WINDOW
    bg_accounts: tuple[str, ...] = ()
    clock_mode: str = LOGICAL  # "Logical" | "Wall"


class BrokerCore:
    """All broker state and every protocol op, minus the socket."""

    def __init__(self, config: BrokerConfig, store: TableStore | None = None):
        if config.clock_mode not in (WALL, LOGICAL):
            raise BadConfig(f"unknown clock mode {config.clock_mode!r}")
        self.config = config
        self._lock = threading.RLock()
        self._data_dir = Path(config.data_dir) if config.data_dir else None
        self._contracts_dir = None
        if self._data_dir is not None:
            self._contracts_dir = self._data_dir / "contracts"
            self._contracts_dir.mkdir(parents=True, exist_ok=True)
        if config.clock_mode == WALL:
            self.clock = WallClock()
        else:
            self.clock = LogicalClock(self._load_clock())
        self.store = store if store is not None else TableStore()
        for name, path in config.tables.items():
            load_table_csv(self.store, name, path)
        ledger_path = str(self._data_dir / "audit.log") if self._data_dir else None
        self.ledger = AuditLedger(ledger_path)
        self.monitor = AccessMonitor(
            config.volume_threshold, config.probing_threshold, config.probing_window
        )
        self.gateway = QueryGateway(self.ledger, self.monitor)
        self.break_glass = BreakGlassService(config.bg_quorum, config.bg_window)
        for account in config.bg_accounts:
            self.break_glass.register_account(account)
        self.contracts: dict[str, DataContract] = {}
        self.enclaves: dict[str, enclave_mod.EnclaveInstance] = {}
        self.tokens: dict[str, str] = {}  # principal -> bearer token
        self._load_contracts()

    # ---------------- persistence ----------------

    def _load_clock(self) -> int:
        if self._data_dir is None:
            return 0
        path = self._data_dir / "clock.json"
        if not path.exists():
            return 0
        return int(json.loads(path.read_text())["now"])

    def _save_clock(self):
        if self._data_dir is not None and self.clock.mode == LOGICAL:
            path = self._data_dir / "clock.json"
            tmp = path.with_suffix(".tmp")
            tmp.write_text(canonical_json({"now": self.clock.now()}))
            tmp.replace(path)

    def _contract_path(self, contract_id: str) -> Path:
        safe = urllib.parse.quote(contract_id, safe="")
        return self._contracts_dir / f"{safe}.json"

    def _save_contract(self, c: DataContract):
        self.contracts[c.contract_id] = c
        if self._contracts_dir is not None:
            path = self._contract_path(c.contract_id)
            tmp = path.with_suffix(".tmp")
            tmp.write_bytes(canonical_encode(c))
            tmp.replace(path)

    def _load_contracts(self):
        if self._contracts_dir is None:
            return
        for path in sorted(self._contracts_dir.glob("*.json")):
            c = DataContract.from_json(json.loads(path.read_text()))
            self.contracts[c.contract_id] = c

    # ---------------- lookups ----------------

    def _contract(self, contract_id: str) -> DataContract:
        if contract_id not in self.contracts:
            raise UnknownEntity(f"no contract {contract_id!r}")
        return self.contracts[contract_id]

    def _enclave(self, enclave_id: str) -> enclave_mod.EnclaveInstance:
        if enclave_id not in self.enclaves:
            raise UnknownEntity(f"no enclave {enclave_id!r}")
        return self.enclaves[enclave_id]

    def _session(self, session_id: str):
        if session_id not in self.gateway.sessions:
            raise UnknownEntity(f"no session {session_id!r}")
        return self.gateway.sessions[session_id]

    def _token_for(self, principal: str) -> str:
        if principal not in self.tokens:
            self.tokens[principal] = secrets.token_hex(16)
        return self.tokens[principal]

    def live_grants(self, now: int | None = None):
        """Every grant of every live contract; empty after a full sweep."""
        now = self.clock.now() if now is None else now
        out = []
        for c in self.contracts.values():
            if is_live(c, now):
                for g in c.grants:
                    out.append((c.contract_id, g))
        return out

    # ---------------- audit helpers ----------------

    def _audit(self, actor: str, kind: str, payload: dict):
        self.ledger.append(self.clock.now(), actor, kind, payload)

    def _audit_transition(self, e: enclave_mod.EnclaveInstance):
        self._audit_new_transitions(e, len(e.transitions) - 1)

    def _audit_new_transitions(self, e: enclave_mod.EnclaveInstance, start: int) -> int:
        """Audit every transition record from index `start` on; one event each."""
        for t in e.transitions[start:]:
            self._audit(
                "broker",
                audit_mod.ENCLAVE_TRANSITION,
                {
                    "enclave_id": e.enclave_id,
                    "contract_id": e.contract_id,
                    "from": t.from_state,
                    "to": t.to_state,
                    "cause": t.cause,
                },
            )
        return len(e.transitions)

    # ---------------- contract ops ----------------

    def submit_contract(self, text: str) -> dict:
        c = parse_contract(text)
        if c.contract_id in self.contracts:
            raise DuplicateContract(f"contract {c.contract_id!r} already exists")
        report = validate_contract(c, self.store.catalog())
        if not report.ok:
            problems = "; ".join(f"{code}: {msg}" for code, msg in report.problems)
            raise ValidationFailed(problems)
        self._save_contract(c)
        self._audit(
            "operator",
            audit_mod.CONTRACT_SUBMITTED,
            {"contract_id": c.contract_id, "principal": c.principal, "contract": c.to_json()},
        )
        return {"contract_id": c.contract_id, "status": c.status}

    def activate_contract(self, contract_id: str) -> dict:
        c = contracts_mod.activate(self._contract(contract_id), self.clock.now())
        self._save_contract(c)
        token = self._token_for(c.principal)
        self._audit(
            "operator",
            audit_mod.CONTRACT_ACTIVATED,
            {"contract_id": c.contract_id, "activated_at": c.activated_at, "ttl": c.ttl},
        )
        return {
            "contract_id": c.contract_id,
            "status": c.status,
            "activated_at": c.activated_at,
            "expires_at": c.activated_at + c.ttl,
            "token": token,
        }

    def revoke_contract(self, contract_id: str, reason: str = "") -> dict:
        c = contracts_mod.revoke(self._contract(contract_id), reason)
        self._save_contract(c)
        self._audit(
            "operator",
            audit_mod.CONTRACT_REVOKED,
            {"contract_id": c.contract_id, "reason": reason},
        )
        closed = self._shut_enclaves_for(contract_id, enclave_mod.CAUSE_REVOCATION)
        return {"contract_id": contract_id, "status": c.status, "revoked_enclaves": closed}

    def _shut_enclaves_for(self, contract_id: str, cause: str) -> list[str]:
        hit = []
        for e in self.enclaves.values():
            if e.contract_id == contract_id and e.state not in enclave_mod.TERMINAL:
                enclave_mod.expire_or_revoke(e, cause, self.clock.now())
                self.gateway.invalidate_for_enclave(e.enclave_id)
                self._audit_transition(e)
                hit.append(e.enclave_id)
        return hit

    # ---------------- enclave ops ----------------

    def create_enclave(self, contract_id: str) -> dict:
        c = self._contract(contract_id)
        e = enclave_mod.create_enclave(c, self.clock.now())
        self.enclaves[e.enclave_id] = e
        self._audit_transition(e)
        return {"enclave_id": e.enclave_id, "state": e.state}

    def broker_enclave(self, contract_id: str) -> dict:
        """The composed happy path: define, provision, seal, open the gate."""
        c = self._contract(contract_id)
        now = self.clock.now()
        e = enclave_mod.create_enclave(c, now)
        self.enclaves[e.enclave_id] = e
        audited = self._audit_new_transitions(e, 0)
        try:
            # A failed provision records both the Provisioning and the
            # Revoked transitions; audit whatever actually happened.
            enclave_mod.provision(e, c, self.store, now)
        finally:
            audited = self._audit_new_transitions(e, audited)
        enclave_mod.seal(e, now)
        audited = self._audit_new_transitions(e, audited)
        enclave_mod.open_gate(e, now)
        self._audit_new_transitions(e, audited)
        return {"enclave_id": e.enclave_id, "state": e.state}

    # ---------------- session and query ops ----------------

    def open_session(self, enclave_id: str, token: str) -> dict:
        e = self._enclave(enclave_id)
        c = self._contract(e.contract_id)
        expected = self.tokens.get(c.principal)
        s = self.gateway.open_session(e, c, expected, token, self.clock.now())
        return {"session_id": s.session_id, "enclave_id": enclave_id}

    def query(self, session_id: str, text: str) -> dict:
        s = self._session(session_id)
        e = self._enclave(s.enclave_id)
        c = self._contract(s.contract_id)
        result = self.gateway.execute(s, e, c, text, self.clock.now())
        return result.to_json()

    def close_session(self, session_id: str) -> dict:
        s = self._session(session_id)
        c = self._contract(s.contract_id)
        self.gateway.close_session(s, self.clock.now(), c.principal)
        return {"session_id": session_id, "closed": True}

    # ---------------- monitor and audit ops ----------------

    def alerts(self, rule=None, contract_id=None, enclave_id=None, since=None, until=None) -> dict:
        found = self.monitor.alerts(rule, contract_id, enclave_id, since, until)
        return {"alerts": [a.to_json() for a in found]}

    def audit_export(self) -> dict:
        return {"events": [e.to_json() for e in self.ledger.events()]}

    def audit_verify(self) -> dict:
        if self.ledger.path is not None:
            bad = audit_mod.verify_file(self.ledger.path)
        else:
            bad = audit_mod.verify_events(self.ledger.events())
        if bad is None:
            return {"verified": True, "events": len(self.ledger)}
        return {"verified": False, "first_bad_seq": bad, "events": len(self.ledger)}

    # ---------------- break-glass ops ----------------

    def bg_request(self, account: str, template_text: str, justification: str = "") -> dict:
        template = parse_contract(template_text)
        if template.contract_id in self.contracts:
            raise DuplicateContract(f"contract {template.contract_id!r} already exists")
        req = self.break_glass.request_access(
            account, template, justification, self.store.catalog(), self.clock.now()
        )
        self._audit(
            account,
            audit_mod.BREAK_GLASS_REQUESTED,
            {
                "request_id": req.request_id,
                "account": account,
                "contract_id": template.contract_id,
                "justification": justification,
            },
        )
        return {"request_id": req.request_id, "status": req.status, "quorum": req.quorum}

    def bg_approve(self, request_id: str, approver: str) -> dict:
        req, quorum_reached = self.break_glass.approve(request_id, approver, self.clock.now())
        self._audit(
            approver,
            audit_mod.BREAK_GLASS_APPROVED,
            {
                "request_id": request_id,
                "approver": approver,
                "approvals": len(req.approvals),
                "quorum": req.quorum,
            },
        )
        if not quorum_reached:
            return {"request_id": request_id, "status": req.status, "approvals": list(req.approvals)}
        return self._bg_activate(req)

    def _bg_activate(self, req: bg_mod.BreakGlassRequest) -> dict:
        """Quorum crossed: activate, provision, serve, and alert, atomically."""
        now = self.clock.now()
        template = replace(req.template, ttl=req.activation_window)
        if template.contract_id in self.contracts:
            raise DuplicateContract(f"contract {template.contract_id!r} already exists")
        c = contracts_mod.activate(template, now)
        self._save_contract(c)
        token = self._token_for(c.principal)
        self.break_glass.mark_activated(req.request_id, c.contract_id)
        self._audit(
            "broker",
            audit_mod.BREAK_GLASS_ACTIVATED,
            {
                "request_id": req.request_id,
                "account": req.account_id,
                "contract_id": c.contract_id,
                "activated_at": c.activated_at,
                "activation_window": req.activation_window,
            },
        )
        enclave_info = self.broker_enclave(c.contract_id)
        alert = self.monitor.record_break_glass_activation(req.request_id, c.contract_id, now)
        self._audit(
            "monitor",
            audit_mod.ALERT_RAISED,
            {
                "alert_id": alert.alert_id,
                "rule": alert.rule,
                "severity": alert.severity,
                "session_id": alert.session_id,
                "contract_id": alert.contract_id,
            },
        )
        return {
            "request_id": req.request_id,
            "status": req.status,
            "approvals": list(req.approvals),
            "contract_id": c.contract_id,
            "enclave_id": enclave_info["enclave_id"],
            "expires_at": c.activated_at + c.ttl,
            "token": token,
        }

    def bg_deny(self, request_id: str, operator: str = "operator") -> dict:
        req = self.break_glass.deny(request_id, self.clock.now())
        self._audit(
            operator,
            audit_mod.BREAK_GLASS_DENIED,
            {"request_id": request_id, "account": req.account_id},
        )
        return {"request_id": request_id, "status": req.status}

    # ---------------- clock and sweep ----------------

    def tick(self, seconds: int) -> dict:
        if self.clock.mode != LOGICAL:
            raise StateError("tick requires the logical clock")
        now = self.clock.tick(seconds)
        self._save_clock()
        return {"now": now}

    def sweep(self) -> dict:
        """Lazy expiry: retire everything whose time has passed.

        Break-glass teardown runs first so its enclaves carry the
        BreakGlassAuto cause rather than plain Expiry.
        """
        now = self.clock.now()
        expired_contracts: list[str] = []
        expired_enclaves: list[str] = []
        auto_revoked: list[str] = []

        def contract_live(contract_id, at):
            c = self.contracts.get(contract_id)
            return c is not None and is_live(c, at)

        for req in self.break_glass.sweep(now, contract_live):
            auto_revoked.append(req.request_id)
            c = self.contracts.get(req.activated_contract_id)
            if c is not None and c.status == ACTIVE:
                self._save_contract(contracts_mod.expire(c))
                expired_contracts.append(c.contract_id)
                self._audit(
                    "broker",
                    audit_mod.CONTRACT_EXPIRED,
                    {"contract_id": c.contract_id, "expired_at": now},
                )
            expired_enclaves.extend(
                self._shut_enclaves_for(req.activated_contract_id, enclave_mod.CAUSE_BREAK_GLASS_AUTO)
            )
            self._audit(
                "broker",
                audit_mod.BREAK_GLASS_REVOKED,
                {"request_id": req.request_id, "contract_id": req.activated_contract_id},
            )
        for c in list(self.contracts.values()):
            if c.status == ACTIVE and not is_live(c, now):
                self._save_contract(contracts_mod.expire(c))
                expired_contracts.append(c.contract_id)
                self._audit(
                    "broker",
                    audit_mod.CONTRACT_EXPIRED,
                    {"contract_id": c.contract_id, "expired_at": now},
                )
        for e in self.enclaves.values():
            if e.state in enclave_mod.TERMINAL:
                continue
            c = self.contracts.get(e.contract_id)
            if c is None or not is_live(c, now):
                cause = (
                    enclave_mod.CAUSE_REVOCATION
                    if c is not None and c.status == contracts_mod.REVOKED
                    else enclave_mod.CAUSE_EXPIRY
                )
                enclave_mod.expire_or_revoke(e, cause, now)
                self.gateway.invalidate_for_enclave(e.enclave_id)
                self._audit_transition(e)
                expired_enclaves.append(e.enclave_id)
        return {
            "expired": expired_contracts,
            "expired_enclaves": expired_enclaves,
            "bg_auto_revoked": auto_revoked,
        }

    # ---------------- wire dispatch ----------------

    def handle(self, request: dict) -> dict:
        """One Request in, one Response out; never raises."""
        req_id = request.get("id") if isinstance(request, dict) else None
        if not isinstance(request, dict) or not isinstance(request.get("op"), str):
            return _error(req_id, "BadRequest", "request must carry a string op")
        op = request["op"]
        args = request.get("args", {})
        if args is None:
            args = {}
        if not isinstance(args, dict):
            return _error(req_id, "BadRequest", "args must be an object")
        if op not in OPS:
            return _error(req_id, "UnknownOp", f"unknown op {op!r}")
        try:
            with self._lock:
                result = self._dispatch(op, args, request.get("token"))
        except DenialError as exc:
            return _error(req_id, exc.code, str(exc))
        except BrokerError as exc:
            return _error(req_id, exc.code, str(exc))
        except (TypeError, KeyError, ValueError) as exc:
            return _error(req_id, "BadRequest", f"bad args for {op}: {exc}")
        return {"id": req_id, "ok": True, "result": result}

    def _dispatch(self, op: str, args: dict, envelope_token):
        if op == "submit_contract":
            return self.submit_contract(args["text"])
        if op == "activate_contract":
            return self.activate_contract(args["contract_id"])
        if op == "revoke_contract":
            return self.revoke_contract(args["contract_id"], args.get("reason", ""))
        if op == "create_enclave":
            return self.create_enclave(args["contract_id"])
        if op == "broker_enclave":
            return self.broker_enclave(args["contract_id"])
        if op == "open_session":
            token = args.get("token") or envelope_token
            if not isinstance(token, str):
                raise BadToken("no token presented")
            return self.open_session(args["enclave_id"], token)
        if op == "query":
            return self.query(args["session_id"], args["text"])
        if op == "close_session":
            return self.close_session(args["session_id"])
        if op == "alerts":
            return self.alerts(
                args.get("rule"),
                args.get("contract_id"),
                args.get("enclave_id"),
                args.get("since"),
                args.get("until"),
            )
        if op == "audit_export":
            return self.audit_export()
        if op == "audit_verify":
            return self.audit_verify()
        if op == "bg_request":
            return self.bg_request(args["account"], args["template"], args.get("justification", ""))
        if op == "bg_approve":
            return self.bg_approve(args["request_id"], args["approver"])
        if op == "bg_deny":
            return self.bg_deny(args["request_id"], args.get("operator", "operator"))
        if op == "sweep":
            return self.sweep()
        if op == "tick":
            return self.tick(int(args["seconds"]))
        raise BadConfig(f"unhandled op {op}")  # unreachable

    def close(self):
        self.ledger.close()


def _error(req_id, code: str, message: str) -> dict:
    return {"id": req_id, "ok": False, "error": {"code": code, "message": message}}
