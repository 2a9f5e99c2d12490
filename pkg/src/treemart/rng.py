"""Counter-based random streams keyed by (seed, node label).

Every node of the infinite binary tree owns one position in a SplitMix64
stream: the output at position ``i`` is ``mix(key + (i + 1) * GAMMA)`` where
``key`` is derived from the seed. A draw therefore depends only on the seed
and on the node's breadth-first index, never on the order in which nodes are
visited, so paths are prefix-consistent when extended.
"""
from __future__ import annotations

import math

import numpy as np

GAMMA = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_MASK = (1 << 64) - 1
_TWO_M53 = 2.0 ** -53

MAX_DEPTH = 63


def _mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * _M1) & _MASK
    z = ((z ^ (z >> 27)) * _M2) & _MASK
    return z ^ (z >> 31)


def stream_key(seed: int) -> int:
    """Scramble a user seed (any integer) into a 64-bit stream key."""
    return _mix((seed & _MASK) ^ 0x6A09E667F3BCC909)


def bfs_index(depth: int, bits: int) -> int:
    return (1 << depth) - 1 + bits


def uniform(seed: int, depth: int, bits: int) -> float:
    """Uniform draw in the open interval (0, 1) for one node."""
    i = bfs_index(depth, bits)
    h = _mix((stream_key(seed) + (i + 1) * GAMMA) & _MASK)
    return ((h >> 11) + 0.5) * _TWO_M53


def lifetime(seed: int, depth: int, bits: int) -> float:
    """Exponential(1) lifetime of one node."""
    return -math.log(uniform(seed, depth, bits))


def _mix_array(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


def uniforms(seed: int, depth: int, bits: np.ndarray) -> np.ndarray:
    """Vectorized :func:`uniform` for many nodes of one depth."""
    bits = np.asarray(bits, dtype=np.uint64)
    base = np.uint64(((1 << depth) - 1 + 1) & _MASK)
    key = np.uint64(stream_key(seed))
    # uint64 arithmetic wraps modulo 2**64, which is what SplitMix64 wants
    pos = (bits + base) * np.uint64(GAMMA) + key
    h = _mix_array(pos)
    return ((h >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_M53


def lifetimes(seed: int, depth: int, bits: np.ndarray) -> np.ndarray:
    return -np.log(uniforms(seed, depth, bits))


def derive_seed(master: int, *labels: int | str) -> int:
    """Child seed for a sub-experiment; pure function of its arguments."""
    h = stream_key(master)
    for lab in labels:
        if isinstance(lab, str):
            lab = int.from_bytes(lab.encode(), "little") & _MASK
        h = _mix((h + (lab + 1) * GAMMA) & _MASK)
    return h
