"""Pure-numpy kernel backend.

Reference implementation of the counter-mode entry stream: always
available, no JIT warm-up, roughly an order of magnitude slower than the
numba backend on large batches.
"""

from __future__ import annotations

import math

import numpy as np

NAME = "numpy"

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
GOLDEN2 = np.uint64((2 * 0x9E3779B97F4A7C15) % (1 << 64))
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0  # 2**-53
_TWO_PI = 2.0 * math.pi


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def _state(hi: np.uint64, lo: np.uint64, tuples: np.ndarray) -> np.ndarray:
    h = np.full(tuples.shape[0], hi, dtype=np.uint64)
    for c in range(tuples.shape[1]):
        h = _mix(h + GOLDEN + tuples[:, c])
    return h ^ lo


def uniform_words(hi: np.uint64, lo: np.uint64, tuples: np.ndarray):
    """Two 64-bit uniform words per index tuple (the integer PRF layer)."""
    h = _state(hi, lo, tuples)
    return _mix(h + GOLDEN), _mix(h + GOLDEN2)


def gaussian_batch(hi: np.uint64, lo: np.uint64, tuples: np.ndarray) -> np.ndarray:
    """Standard normal deviate for each index tuple (Box-Muller, first output)."""
    w1, w2 = uniform_words(hi, lo, tuples)
    u1 = ((w1 >> _S11).astype(np.float64) + 0.5) * _INV53
    u2 = ((w2 >> _S11).astype(np.float64) + 0.5) * _INV53
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(_TWO_PI * u2)


def sweep_sums(
    hi: np.uint64,
    lo: np.uint64,
    others: np.ndarray,
    insert_at: int,
    candidates: np.ndarray,
) -> np.ndarray:
    """Per-candidate fiber sums.

    For each candidate index c, sums the entries of every tuple built by
    inserting c at coordinate position `insert_at` into each row of
    `others` (the cartesian product of the fixed coordinate sets).
    """
    m_f, q = others.shape
    m_b = candidates.shape[0]
    tuples = np.empty((m_b * m_f, q + 1), dtype=np.uint64)
    tuples[:, insert_at] = np.repeat(candidates, m_f)
    other_cols = [c for c in range(q + 1) if c != insert_at]
    if other_cols:
        tuples[:, other_cols] = np.tile(others, (m_b, 1))
    vals = gaussian_batch(hi, lo, tuples)
    return vals.reshape(m_b, m_f).sum(axis=1)
