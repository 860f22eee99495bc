"""Tiny deterministic RNG for the compiled training loop.

xorshift64* with splitmix64 seeding; state lives in a 1-element uint64 array
so it survives across kernel calls. Kept separate from numpy's generators so
trained results do not depend on numba's internal RNG implementation.
"""
import numpy as np
from numba import njit

_U64 = np.uint64
_MULT = _U64(0x2545F4914F6CDD1D)
_SM1 = _U64(0x9E3779B97F4A7C15)
_SM2 = _U64(0xBF58476D1CE4E5B9)
_SM3 = _U64(0x94D049BB133111EB)
_INV53 = 1.0 / float(1 << 53)


@njit(cache=True)
def seed_state(state, seed):
    z = _U64(seed) + _SM1
    z = (z ^ (z >> _U64(30))) * _SM2
    z = (z ^ (z >> _U64(27))) * _SM3
    z = z ^ (z >> _U64(31))
    if z == _U64(0):
        z = _SM1
    state[0] = z


@njit(cache=True)
def next_u64(state):
    x = state[0]
    x ^= x >> _U64(12)
    x ^= x << _U64(25)
    x ^= x >> _U64(27)
    state[0] = x
    return x * _MULT


@njit(cache=True)
def next_f64(state):
    """Uniform draw in [0, 1)."""
    return float(next_u64(state) >> _U64(11)) * _INV53


@njit(cache=True)
def next_int(state, n):
    """Uniform integer in [0, n)."""
    return int(next_f64(state) * n)
