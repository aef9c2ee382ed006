"""Deterministic random-stream derivation.

All randomness in the package flows from a single 64-bit master seed through
a documented derivation so that every run is reproducible across platforms:

    key      = SHA-256( seed as 8 little-endian bytes || b":" || purpose utf-8 )
    philox   = numpy Philox-4x64 counter-based generator keyed with the first
               16 digest bytes (two little-endian u64 words)

Philox is a named counter-based generator whose stream is fixed by its key,
independent of platform or thread count. Distinct purposes (and distinct
seeds) therefore yield independent, reproducible streams.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_key(seed: int, purpose: str) -> tuple[int, int]:
    """Two u64 words keying the Philox stream for (seed, purpose)."""
    raw = (int(seed) & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "little")
    digest = hashlib.sha256(raw + b":" + purpose.encode("utf-8")).digest()
    lo = int.from_bytes(digest[0:8], "little")
    hi = int.from_bytes(digest[8:16], "little")
    return lo, hi


def stream(seed: int, purpose: str) -> np.random.Generator:
    """Seeded, purpose-tagged Philox generator."""
    lo, hi = derive_key(seed, purpose)
    return np.random.Generator(np.random.Philox(key=lo + (hi << 64)))


def derive_u63(seed: int, purpose: str) -> int:
    """63-bit integer for libraries that seed from a plain int (e.g. torch)."""
    lo, _ = derive_key(seed, purpose)
    return lo & 0x7FFFFFFFFFFFFFFF
