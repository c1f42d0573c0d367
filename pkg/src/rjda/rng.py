"""Seeding: per-chain streams from one master seed, and config digests.

Chain ``i`` of a run with master seed ``s`` uses

    splitmix64(splitmix64(s) XOR i)

as its 64-bit seed. ``splitmix64`` is the standard finalizer of Steele,
Lea and Flood's SplitMix generator (add the golden-ratio increment, then two
xor-shift-multiply rounds), so any language can reproduce the streams.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json

import numpy as np

MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    z = (x + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def chain_seed(master: int, index: int) -> int:
    return splitmix64(splitmix64(int(master) & MASK64) ^ int(index))


def generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed) & MASK64))


def kernel_seed(seed: int) -> int:
    """Fold a 64-bit seed to the 32-bit range the compiled kernels accept."""
    s = int(seed) & MASK64
    return (s ^ (s >> 32)) & 0xFFFFFFFF


def _canonical(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        out = {"__type__": type(obj).__name__}
        for f in dataclasses.fields(obj):
            out[f.name] = _canonical(getattr(obj, f.name))
        return out
    if isinstance(obj, dict):
        return {str(k): _canonical(v) for k, v in sorted(obj.items(), key=lambda kv: str(kv[0]))}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return repr(float(obj))
    return obj


def config_digest(*parts) -> str:
    """Stable SHA-256 over the canonical JSON form of the given objects."""
    blob = json.dumps([_canonical(p) for p in parts], sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]
