"""Continuous-time random-walk kernels (numba).

At site i the walker holds for an exponential time with rate equal to the
magnitude of the generator's diagonal, then jumps to a uniformly chosen
neighbor.  Positions are recorded at the requested grid times.  Each walker
owns a splitmix64 stream derived from (seed, walker index), so results are
independent of threading and bit-reproducible; walkers write disjoint output
rows and parallelize trivially.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_INV53 = 1.0 / 9007199254740992.0  # 2^-53


def derive_walker_seeds(seed: int, count: int) -> np.ndarray:
    """Vectorized splitmix64 child seeds, matching seeds.derive_seed."""
    idx = np.arange(1, count + 1, dtype=np.uint64)
    state = (np.uint64(seed) ^ (idx * _GOLDEN)) + _GOLDEN
    z = state
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


@njit(cache=True, inline="always")
def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


@njit(cache=True, parallel=True, fastmath=True)
def walk_torus(n, inv_rate, start, times, seeds, out):
    """Record torus walker positions at grid times; one output row per walker.

    inv_rate: per-site mean holding time (1/rate); out: (walkers, ntimes) int64.
    A single 64-bit draw per jump supplies both the holding time (53 bits)
    and the direction (2 bits).
    """
    nw = seeds.shape[0]
    nt = times.shape[0]
    for w in prange(nw):
        state = seeds[w]
        r = start // n
        c = start % n
        t = 0.0
        k = 0
        while k < nt:
            pos = r * n + c
            state = state + _GOLDEN
            z = _mix(state)
            u = (np.float64(z >> np.uint64(11)) + 1.0) * _INV53
            t_next = t - np.log(u) * inv_rate[pos]
            while k < nt and times[k] <= t_next:
                out[w, k] = pos
                k += 1
            t = t_next
            d = z & np.uint64(3)
            if d == np.uint64(0):
                c += 1
                if c == n:
                    c = 0
            elif d == np.uint64(1):
                c -= 1
                if c < 0:
                    c = n - 1
            elif d == np.uint64(2):
                r += 1
                if r == n:
                    r = 0
            else:
                r -= 1
                if r < 0:
                    r = n - 1


@njit(cache=True, parallel=True, fastmath=True)
def walk_ring(n, inv_rate, start, times, seeds, out):
    """1d periodic analogue of walk_torus (two neighbors)."""
    nw = seeds.shape[0]
    nt = times.shape[0]
    for w in prange(nw):
        state = seeds[w]
        pos = start
        t = 0.0
        k = 0
        while k < nt:
            state = state + _GOLDEN
            z = _mix(state)
            u = (np.float64(z >> np.uint64(11)) + 1.0) * _INV53
            t_next = t - np.log(u) * inv_rate[pos]
            while k < nt and times[k] <= t_next:
                out[w, k] = pos
                k += 1
            t = t_next
            if z & np.uint64(1):
                pos += 1
                if pos == n:
                    pos = 0
            else:
                pos -= 1
                if pos < 0:
                    pos = n - 1
