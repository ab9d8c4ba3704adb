"""Deterministic seed derivation.

Every random stage of the pipeline derives its seed from a parent seed and a
small integer index with :func:`derive_seed`, a splitmix64 step.  The chain is

    master -> sample seeds -> per-center seeds -> per-walker seeds

so results are reproducible bit-for-bit regardless of scheduling, and any
subtree of the computation can be re-run in isolation.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def splitmix64(state: int) -> tuple[int, int]:
    """Advance a splitmix64 state; return (output, new_state)."""
    state = (state + _GOLDEN) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    z = z ^ (z >> 31)
    return z, state


def derive_seed(seed: int, index: int) -> int:
    """Derive the ``index``-th child seed of ``seed``.

    Defined as the splitmix64 output of state ``seed XOR (index+1)*golden``;
    the same formula is used inside the walker kernels.
    """
    state = (int(seed) ^ (((int(index) + 1) * _GOLDEN) & _MASK64)) & _MASK64
    out, _ = splitmix64(state)
    return out


def rng_from(seed: int, index: int = 0) -> np.random.Generator:
    """NumPy generator seeded from the derived child seed."""
    return np.random.default_rng(derive_seed(seed, index))
