"""Numba kernel backend: @njit scalar loops over the same PRF chain.

Bit-identical to the numpy backend on the integer layer; the float layer
(log/cos) may differ from numpy by an ulp or two depending on libm
dispatch, which is irrelevant at the tolerances the lab works with.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

NAME = "numba"

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
GOLDEN2 = np.uint64((2 * 0x9E3779B97F4A7C15) % (1 << 64))
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0
_TWO_PI = 2.0 * math.pi


@njit(cache=True, nogil=True, inline="always")
def _mix(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True, nogil=True)
def uniform_words(hi, lo, tuples):
    m, p = tuples.shape
    w1 = np.empty(m, np.uint64)
    w2 = np.empty(m, np.uint64)
    for i in range(m):
        h = hi
        for c in range(p):
            h = _mix(h + GOLDEN + tuples[i, c])
        h = h ^ lo
        w1[i] = _mix(h + GOLDEN)
        w2[i] = _mix(h + GOLDEN2)
    return w1, w2


@njit(cache=True, nogil=True)
def gaussian_batch(hi, lo, tuples):
    m, p = tuples.shape
    out = np.empty(m, np.float64)
    for i in range(m):
        h = hi
        for c in range(p):
            h = _mix(h + GOLDEN + tuples[i, c])
        h = h ^ lo
        u1 = (np.float64(_mix(h + GOLDEN) >> _S11) + 0.5) * _INV53
        u2 = (np.float64(_mix(h + GOLDEN2) >> _S11) + 0.5) * _INV53
        out[i] = math.sqrt(-2.0 * math.log(u1)) * math.cos(_TWO_PI * u2)
    return out


@njit(cache=True, nogil=True)
def sweep_sums(hi, lo, others, insert_at, candidates):
    m_f, q = others.shape
    m_b = candidates.shape[0]
    out = np.empty(m_b, np.float64)
    for i in range(m_b):
        ci = candidates[i]
        acc = 0.0
        for j in range(m_f):
            h = hi
            for c in range(q + 1):
                if c == insert_at:
                    x = ci
                elif c < insert_at:
                    x = others[j, c]
                else:
                    x = others[j, c - 1]
                h = _mix(h + GOLDEN + x)
            h = h ^ lo
            u1 = (np.float64(_mix(h + GOLDEN) >> _S11) + 0.5) * _INV53
            u2 = (np.float64(_mix(h + GOLDEN2) >> _S11) + 0.5) * _INV53
            acc += math.sqrt(-2.0 * math.log(u1)) * math.cos(_TWO_PI * u2)
        out[i] = acc
    return out
