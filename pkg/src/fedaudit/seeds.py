"""Deterministic seed derivation so parallel schedules cannot perturb results.

Every entity (reference model, round, client, attack) draws from its own
stream keyed by (root seed, string/int path). Derivation goes through
numpy's SeedSequence, which is stable across platforms and numpy versions.
"""
from __future__ import annotations

import hashlib

import numpy as np


def _key_to_int(key) -> int:
    if isinstance(key, (int, np.integer)):
        return int(key) & 0xFFFFFFFF
    if isinstance(key, str):
        digest = hashlib.sha256(key.encode("utf-8")).digest()
        return int.from_bytes(digest[:4], "little")
    raise TypeError(f"seed key must be int or str, got {type(key).__name__}")


def derive_seed(root: int, *keys) -> int:
    """Map (root, *keys) to a stable 64-bit seed."""
    entropy = [int(root) & 0xFFFFFFFFFFFFFFFF] + [_key_to_int(k) for k in keys]
    state = np.random.SeedSequence(entropy).generate_state(2, dtype=np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator for the given seed."""
    return np.random.Generator(np.random.PCG64(int(seed)))
