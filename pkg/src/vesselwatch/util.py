"""Small shared helpers: deterministic seeds, atomic writes, hashing."""
from __future__ import annotations

import hashlib
import json
import os
import tempfile
from typing import Any


def derive_seed(*parts: Any) -> int:
    """Derive a stable 63-bit seed from arbitrary parts.

    Uses sha256 over a canonical string, so the value is identical across
    processes and platforms (unlike Python's salted hash()).
    """
    key = "\x1f".join(str(p) for p in parts)
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def canonical_json(obj: Any) -> str:
    """Canonical JSON text used for hashing (sorted keys, no whitespace)."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def sha256_hex(data: str | bytes) -> str:
    if isinstance(data, str):
        data = data.encode("utf-8")
    return hashlib.sha256(data).hexdigest()


def atomic_write_text(path: str, text: str) -> None:
    """Write a file via temp-and-rename so readers never see partial output."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
