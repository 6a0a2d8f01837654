"""Lazy Gaussian tensors, subtensor selections, prefix views, block partition.

Index convention: every interface is 1-based, so coordinates live in
[1, n] and block formulas can be written exactly as stated. Arrays handed
to kernels carry the raw 1-based values; only the materialized backend
shifts to 0-based storage.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np

from . import kernels
from .errors import ValidationError
from .seeds import StreamKey, as_key


def _generic_sweep(batch_fn, others: np.ndarray, insert_at: int, candidates: np.ndarray) -> np.ndarray:
    """Per-candidate fiber sums through an arbitrary batch function."""
    others = np.asarray(others, dtype=np.int64)
    candidates = np.asarray(candidates, dtype=np.int64)
    m_f, q = others.shape
    m_b = candidates.shape[0]
    if m_b == 0:
        return np.empty(0, dtype=np.float64)
    tuples = np.empty((m_b * m_f, q + 1), dtype=np.int64)
    tuples[:, insert_at] = np.repeat(candidates, m_f)
    other_cols = [c for c in range(q + 1) if c != insert_at]
    if other_cols:
        tuples[:, other_cols] = np.tile(others, (m_b, 1))
    return batch_fn(tuples).reshape(m_b, m_f).sum(axis=1)


def _check_tuples(tuples: np.ndarray, n: int, p: int) -> np.ndarray:
    t = np.asarray(tuples, dtype=np.int64)
    if t.ndim != 2 or t.shape[1] != p:
        raise ValidationError(f"index array must have shape (m, {p}), got {t.shape}")
    if t.size and (t.min() < 1 or t.max() > n):
        raise ValidationError(f"index out of range [1, {n}]")
    return t


@dataclass(frozen=True)
class GaussianTensorSource:
    """Deterministic lazy source of i.i.d. standard normal entries.

    ``entry(i1, ..., ip)`` is a pure function of ``(key, i1, ..., ip)``:
    the 1-based coordinates are absorbed into a counter-mode PRF chain,
    two uniform 64-bit words are drawn from the resulting state, and the
    first Box-Muller output is returned. No n**p storage ever exists.
    """

    n: int
    p: int
    key: StreamKey

    def __post_init__(self):
        if self.n < 1 or self.p < 1:
            raise ValidationError(f"invalid dimension: n={self.n}, p={self.p}")

    def entry(self, idx: Sequence[int]) -> float:
        t = _check_tuples(np.asarray([idx]), self.n, self.p)
        return float(kernels.gaussian_batch(self.key.hi, self.key.lo, t)[0])

    def batch(self, tuples) -> np.ndarray:
        t = _check_tuples(tuples, self.n, self.p)
        return kernels.gaussian_batch(self.key.hi, self.key.lo, t)

    def sweep_sums(self, others, insert_at: int, candidates) -> np.ndarray:
        o = np.asarray(others, dtype=np.int64)
        c = np.asarray(candidates, dtype=np.int64)
        if o.shape[1] != self.p - 1:
            raise ValidationError("fixed coordinate block must have p-1 columns")
        for arr in (o, c):
            if arr.size and (arr.min() < 1 or arr.max() > self.n):
                raise ValidationError(f"index out of range [1, {self.n}]")
        return kernels.sweep_sums(self.key.hi, self.key.lo, o, insert_at, c)


def make_source(n: int, p: int, stream_key: Union[StreamKey, int]) -> GaussianTensorSource:
    """Build a lazy Gaussian source from a 128-bit stream key or integer seed."""
    return GaussianTensorSource(n, p, as_key(stream_key))


class MaterializedSource:
    """In-memory tensor wrapped in the same source interface.

    Backs imported data (CSV / binary) and the brute-force oracle. Stores
    the full array, so only suitable at small n.
    """

    def __init__(self, values: np.ndarray):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim < 1:
            raise ValidationError("materialized tensor must have rank >= 1")
        sides = set(values.shape)
        if len(sides) != 1:
            raise ValidationError(f"tensor must be square, got shape {values.shape}")
        if not np.isfinite(values).all():
            raise ValidationError("tensor contains NaN or infinite entries")
        self.values = values
        self.n = values.shape[0]
        self.p = values.ndim

    def entry(self, idx: Sequence[int]) -> float:
        t = _check_tuples(np.asarray([idx]), self.n, self.p)
        return float(self.values[tuple(t[0] - 1)])

    def batch(self, tuples) -> np.ndarray:
        t = _check_tuples(tuples, self.n, self.p)
        return self.values[tuple((t - 1).T)]

    def sweep_sums(self, others, insert_at: int, candidates) -> np.ndarray:
        return _generic_sweep(self.batch, others, insert_at, candidates)


def materialize(src, max_entries: int = 10**8) -> MaterializedSource:
    """Realize a lazy source as a MaterializedSource (small n only)."""
    if isinstance(src, MaterializedSource):
        return src
    total = src.n**src.p
    if total > max_entries:
        from .errors import CapacityError

        raise CapacityError(f"materializing {src.n}^{src.p} = {total} entries exceeds cap {max_entries}")
    grids = np.meshgrid(*[np.arange(1, src.n + 1, dtype=np.int64)] * src.p, indexing="ij")
    tuples = np.stack([g.ravel() for g in grids], axis=1)
    values = src.batch(tuples).reshape((src.n,) * src.p)
    return MaterializedSource(values)


@dataclass(frozen=True)
class PrefixView:
    """Read window onto the corner of a source: coordinates above `bound` reject."""

    source: object
    bound: int

    def __post_init__(self):
        if not (0 <= self.bound <= self.source.n):
            raise ValidationError(f"bound {self.bound} outside [0, {self.source.n}]")

    @property
    def n(self) -> int:
        return self.source.n

    @property
    def p(self) -> int:
        return self.source.p

    def entry(self, idx: Sequence[int]) -> float:
        if max(idx) > self.bound:
            raise ValidationError(f"index {tuple(idx)} outside prefix bound {self.bound}")
        return self.source.entry(idx)

    def batch(self, tuples) -> np.ndarray:
        t = np.asarray(tuples, dtype=np.int64)
        if t.size and t.max() > self.bound:
            raise ValidationError(f"index outside prefix bound {self.bound}")
        return self.source.batch(t)

    def sweep_sums(self, others, insert_at: int, candidates) -> np.ndarray:
        o = np.asarray(others, dtype=np.int64)
        c = np.asarray(candidates, dtype=np.int64)
        hi = max(o.max(initial=0), c.max(initial=0))
        if hi > self.bound:
            raise ValidationError(f"index outside prefix bound {self.bound}")
        return self.source.sweep_sums(o, insert_at, c)


@dataclass(frozen=True)
class SplicedView:
    """Permissive prefix view: interior entries from one source, exterior
    entries (any coordinate above `bound`) from another.

    Used by the online-compliance checker; never rejects a query, so an
    algorithm that depends on hidden entries diverges instead of crashing.
    """

    interior: object
    exterior: object
    bound: int

    @property
    def n(self) -> int:
        return self.interior.n

    @property
    def p(self) -> int:
        return self.interior.p

    def entry(self, idx: Sequence[int]) -> float:
        src = self.interior if max(idx) <= self.bound else self.exterior
        return src.entry(idx)

    def batch(self, tuples) -> np.ndarray:
        t = np.asarray(tuples, dtype=np.int64)
        if t.size == 0:
            return np.empty(0, dtype=np.float64)
        inside = t.max(axis=1) <= self.bound
        if inside.all():
            return self.interior.batch(t)
        if not inside.any():
            return self.exterior.batch(t)
        out = np.empty(t.shape[0], dtype=np.float64)
        out[inside] = self.interior.batch(t[inside])
        out[~inside] = self.exterior.batch(t[~inside])
        return out

    def sweep_sums(self, others, insert_at: int, candidates) -> np.ndarray:
        o = np.asarray(others, dtype=np.int64)
        c = np.asarray(candidates, dtype=np.int64)
        hi = max(o.max(initial=0), c.max(initial=0))
        if hi <= self.bound:
            # every touched tuple is interior: identical floats to a plain run
            return self.interior.sweep_sums(o, insert_at, c)
        return _generic_sweep(self.batch, o, insert_at, c)


@dataclass(frozen=True)
class Selection:
    """Ordered p-tuple of k-element index sets defining a subtensor.

    The stored order of each coordinate sequence defines the output
    embedding (position r of sequence s is output coordinate r along
    axis s); online increments are read off this order.
    """

    sets: tuple

    def __post_init__(self):
        sets = tuple(tuple(int(i) for i in s) for s in self.sets)
        object.__setattr__(self, "sets", sets)
        if not sets:
            raise ValidationError("selection needs at least one coordinate set")
        k = len(sets[0])
        if k < 1:
            raise ValidationError("selection sets must be non-empty")
        for s, seq in enumerate(sets, start=1):
            if len(seq) != k:
                raise ValidationError(f"coordinate {s} has {len(seq)} indices, expected {k}")
            if len(set(seq)) != len(seq):
                raise ValidationError(f"coordinate {s} has repeated indices")
            if min(seq) < 1:
                raise ValidationError(f"coordinate {s} has indices below 1")

    @property
    def k(self) -> int:
        return len(self.sets[0])

    @property
    def p(self) -> int:
        return len(self.sets)

    def validate_for(self, src) -> None:
        if self.p != src.p:
            raise ValidationError(f"selection rank {self.p} != source rank {src.p}")
        for seq in self.sets:
            if max(seq) > src.n:
                raise ValidationError(f"selection index {max(seq)} exceeds n={src.n}")

    def arrays(self) -> tuple:
        return tuple(np.asarray(s, dtype=np.int64) for s in self.sets)

    def tuples(self) -> np.ndarray:
        """All k**p index tuples in lexicographic output order."""
        rows = list(itertools.product(*self.sets))
        return np.asarray(rows, dtype=np.int64)


def sum_subtensor(src, sel: Selection) -> float:
    """Sum of the k**p selected entries, in fixed lexicographic order."""
    sel.validate_for(src)
    return float(src.batch(sel.tuples()).sum())


def ave_subtensor(src, sel: Selection) -> float:
    """Average of the k**p selected entries."""
    return sum_subtensor(src, sel) / sel.k**sel.p


def prefix(src, s: int, k: int) -> PrefixView:
    """The revealed corner after online step s of k: bound = floor(s*n/k)."""
    if not 1 <= s <= k:
        raise ValidationError(f"step {s} outside [1, {k}]")
    return PrefixView(src, (s * src.n) // k)


def partition_block(i: int, n: int, k: int) -> range:
    """Block i of the k-block partition: {(i-1)*floor(n/k)+1, ..., i*floor(n/k)}."""
    if not 1 <= i <= k:
        raise ValidationError(f"block index {i} outside [1, {k}]")
    b = n // k
    return range((i - 1) * b + 1, i * b + 1)
