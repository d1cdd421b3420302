"""Zero-trust data access broker.

Standing permissions are replaced by short-lived data contracts. Each
activated contract is served through a data enclave whose two doors
(upstream load, gateway serve) are never open at the same time, every
query is mediated and scored for exfiltration patterns, and every state
change lands in a tamper-evident hash-chained audit ledger.
"""

__version__ = "0.1.0"

from .contracts import DataContract, Grant, ValidationReport, validate_contract
from .contract_dsl import parse_contract, print_contract
from .query import parse_query, print_query
from .broker import BrokerConfig, BrokerCore

__all__ = [
    "BrokerConfig",
    "BrokerCore",
    "DataContract",
    "Grant",
    "ValidationReport",
    "parse_contract",
    "parse_query",
    "print_contract",
    "print_query",
    "validate_contract",
]
