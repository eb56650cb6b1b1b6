"""Seed derivation and the random generator used everywhere.

All randomness goes through numpy's Philox bit generator, a counter-based
64-bit generator (Salmon et al., 2011; Philox-4x64-10).  Seeds for agents,
environments and samplers are derived with splitmix64 so that the same run
seed always expands to the same streams, independent of roster order.
"""
from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One splitmix64 output for state ``x`` (Steele, Lea & Flood, 2014)."""
    z = (x + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def fnv1a64(text: str) -> int:
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * 0x100000001B3) & MASK64
    return h


def agent_seed(seed: int, agent_name: str) -> int:
    """Per-agent seed: splitmix64(seed XOR fnv1a64(name))."""
    return splitmix64((seed & MASK64) ^ fnv1a64(agent_name))


def derive_seed(seed: int, stream: str) -> int:
    """Independent sub-stream seed (env, learner, replay...) of an agent seed."""
    return splitmix64((seed & MASK64) ^ fnv1a64("stream:" + stream))


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed & MASK64))
