"""Canonical JSON encoding.

One encoding is used everywhere a byte-stable form matters: audit
hashing, persisted contracts, and wire responses. Keys sorted, no
insignificant whitespace, UTF-8, no NaN or infinity.
"""

from __future__ import annotations

import json


def canonical_json(obj) -> str:
    return json.dumps(
        obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False
    )


def canonical_bytes(obj) -> bytes:
    return canonical_json(obj).encode("utf-8")
