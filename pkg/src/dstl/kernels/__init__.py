"""Hot-kernel backend selection.

The entry stream is evaluated by one of two interchangeable backends:

* ``numba`` -- @njit scalar loops (default when numba imports cleanly),
* ``numpy`` -- vectorized fallback with no JIT dependency.

Selection: the ``DSTL_BACKEND`` environment variable (``numba`` or
``numpy``) wins; otherwise numba is used if available. Tests and the
benchmark switch at runtime via :func:`set_backend` / :func:`use_backend`.

Both backends compute the identical integer PRF chain (bit-equal words);
float outputs agree to within an ulp or two. Within one backend every
result is bit-reproducible.
"""

from __future__ import annotations

import os
from contextlib import contextmanager

import numpy as np

_BACKEND_NAMES = ("numba", "numpy")
_active = None


def _load(name: str):
    if name == "numpy":
        from . import _numpy as mod
    elif name == "numba":
        from . import _numba as mod
    else:
        raise ValueError(f"unknown backend {name!r}; expected one of {_BACKEND_NAMES}")
    return mod


def default_backend_name() -> str:
    env = os.environ.get("DSTL_BACKEND", "").strip().lower()
    if env:
        if env not in _BACKEND_NAMES:
            raise ValueError(f"DSTL_BACKEND={env!r}; expected one of {_BACKEND_NAMES}")
        return env
    try:
        import numba  # noqa: F401

        return "numba"
    except ImportError:
        return "numpy"


def get_backend():
    global _active
    if _active is None:
        _active = _load(default_backend_name())
    return _active


def backend_name() -> str:
    return get_backend().NAME


def set_backend(name: str) -> None:
    global _active
    _active = _load(name)


@contextmanager
def use_backend(name: str):
    global _active
    prev = _active
    set_backend(name)
    try:
        yield
    finally:
        _active = prev


def _as_u64(arr, ndim: int) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=np.uint64)
    if out.ndim != ndim:
        raise ValueError(f"expected {ndim}-d index array, got {out.ndim}-d")
    return out


def gaussian_batch(hi: int, lo: int, tuples) -> np.ndarray:
    """Standard normal deviates for 1-based index tuples, shape (m, p)."""
    t = _as_u64(tuples, 2)
    if t.shape[0] == 0:
        return np.empty(0, dtype=np.float64)
    return get_backend().gaussian_batch(np.uint64(hi), np.uint64(lo), t)


def uniform_words(hi: int, lo: int, tuples):
    """The two uniform 64-bit words behind each entry (integer PRF layer)."""
    t = _as_u64(tuples, 2)
    return get_backend().uniform_words(np.uint64(hi), np.uint64(lo), t)


def sweep_sums(hi: int, lo: int, others, insert_at: int, candidates) -> np.ndarray:
    """Fused per-candidate fiber sums over the product of fixed coordinate sets."""
    o = _as_u64(others, 2)
    c = _as_u64(candidates, 1)
    if c.shape[0] == 0:
        return np.empty(0, dtype=np.float64)
    return get_backend().sweep_sums(np.uint64(hi), np.uint64(lo), o, insert_at, c)
