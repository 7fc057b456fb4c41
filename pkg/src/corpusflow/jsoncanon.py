"""Canonical JSON encoding.

Snapshots, node outputs, and manifests are compared byte-for-byte in the
reproducibility guarantees, so every serialization goes through one encoder:
sorted keys, no whitespace, and shortest round-trip float formatting (Python's
repr, which is platform-stable for IEEE doubles).
"""

from __future__ import annotations

import json
from typing import Any


def canonical_dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def canonical_bytes(obj: Any) -> bytes:
    return canonical_dumps(obj).encode("utf-8")
