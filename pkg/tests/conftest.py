"""Shared fixtures: the orders table, a standard contract, broker factories."""

from __future__ import annotations

import pytest
from hypothesis import settings

from enclave_broker.broker import BrokerConfig, BrokerCore
from enclave_broker.contract_dsl import parse_contract
from enclave_broker.contracts import activate
from enclave_broker.model import DATE, INT, TEXT, date_to_days
from enclave_broker.store import TableStore

settings.register_profile("suite", deadline=None)
settings.load_profile("suite")

ORDERS_SCHEMA = (
    ("order_id", INT),
    ("customer", TEXT),
    ("amount", INT),
    ("created_at", DATE),
)

ORDERS_ROWS = [
    (1, "acme", 100, date_to_days("2024-12-31")),
    (2, "globex", 250, date_to_days("2025-01-15")),
    (3, "acme", 75, date_to_days("2025-02-01")),
]

C1_TEXT = """
contract "c1" {
  principal "svc-reporting"
  purpose "quarterly revenue report"
  expires_in 3600s
  grant {
    source warehouse.orders
    columns [order_id, amount, created_at]
    where created_at >= 2025-01-01
  }
}
"""

# Hand-applied grant filter: rows 2 and 3 are on or after 2025-01-01,
# row 1 is not; projection drops customer.
C1_SEGMENT_ROWS = (
    (2, 250, date_to_days("2025-01-15")),
    (3, 75, date_to_days("2025-02-01")),
)

ORDERS_CSV = (
    "order_id,customer,amount,created_at\n"
    "INT,TEXT,INT,DATE\n"
    "1,acme,100,2024-12-31\n"
    "2,globex,250,2025-01-15\n"
    "3,acme,75,2025-02-01\n"
)


def orders_store() -> TableStore:
    store = TableStore()
    store.register_table("warehouse.orders", ORDERS_SCHEMA, list(ORDERS_ROWS))
    return store


def make_core(data_dir=None, **overrides) -> BrokerCore:
    config = BrokerConfig(data_dir=str(data_dir) if data_dir else None, **overrides)
    return BrokerCore(config, store=orders_store())


@pytest.fixture
def store() -> TableStore:
    return orders_store()


@pytest.fixture
def c1_draft():
    return parse_contract(C1_TEXT)


@pytest.fixture
def c1_active(c1_draft):
    return activate(c1_draft, 0)


@pytest.fixture
def core() -> BrokerCore:
    return make_core()


@pytest.fixture
def orders_csv(tmp_path):
    path = tmp_path / "orders.csv"
    path.write_text(ORDERS_CSV, encoding="utf-8")
    return path
