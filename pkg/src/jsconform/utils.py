"""Small shared helpers: content addressing, derived seeds, canonical JSON."""

from __future__ import annotations

import hashlib
import json
from typing import Any


def content_id(source: str) -> str:
    """Content hash used as the identity (and filename stem) of an artifact."""
    return hashlib.sha256(source.encode("utf-8")).hexdigest()


def child_seed(seed: int, *parts) -> int:
    """Derive an independent, platform-stable rng seed from (seed, parts)."""
    key = ":".join([str(seed)] + [str(p) for p in parts])
    return int.from_bytes(hashlib.sha256(key.encode("utf-8")).digest()[:8], "big")


def canonical_json(payload: Any) -> str:
    """Stable JSON used for hashing configs and writing metadata files."""
    return json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def short_hash(text: str, length: int = 12) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:length]
