"""128-bit stream keys and deterministic key derivation.

Every random quantity in the lab is a pure function of a :class:`StreamKey`.
Keys are derived by absorbing integer or string tokens into a 64-bit
mixing chain (the splitmix64 finalizer), which keeps experiments
reproducible across runs, platforms, and worker counts.
"""

from __future__ import annotations

from typing import NamedTuple, Union

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    """Bijective 64-bit finalizer (splitmix64 output function)."""
    z &= MASK64
    z ^= z >> 30
    z = (z * _M1) & MASK64
    z ^= z >> 27
    z = (z * _M2) & MASK64
    return z ^ (z >> 31)


def absorb(h: int, x: int) -> int:
    """Fold one 64-bit token into the chain state."""
    return mix64((h + GOLDEN + (x & MASK64)) & MASK64)


class StreamKey(NamedTuple):
    """Identifier of one i.i.d. entry stream (two 64-bit words)."""

    hi: int
    lo: int

    def hex(self) -> str:
        return f"{self.hi:016x}{self.lo:016x}"


TokenLike = Union[int, str]


def master_key(seed: int) -> StreamKey:
    """Expand a non-negative integer seed (any width) into a StreamKey."""
    if seed < 0:
        raise ValueError("seed must be non-negative")
    h = absorb(GOLDEN, seed & MASK64)
    rest = seed >> 64
    while rest:
        h = absorb(h, rest & MASK64)
        rest >>= 64
    return StreamKey(absorb(h, 1), absorb(h, 2))


def derive_key(key: StreamKey, *tokens: TokenLike) -> StreamKey:
    """Derive an independent child key from `key` and a token sequence.

    Strings are absorbed length-prefixed so distinct token sequences can
    never collide by concatenation.
    """
    h = absorb(key.hi, key.lo)
    for tok in tokens:
        if isinstance(tok, str):
            data = tok.encode("utf-8")
            h = absorb(h, len(data))
            for i in range(0, len(data), 8):
                h = absorb(h, int.from_bytes(data[i : i + 8], "little"))
        elif isinstance(tok, int):
            if tok < 0:
                raise ValueError("integer tokens must be non-negative")
            h = absorb(h, tok)
        else:
            raise TypeError(f"unsupported token type: {type(tok).__name__}")
    return StreamKey(absorb(h, 1), absorb(h, 2))


def as_key(key_or_seed: Union[StreamKey, int]) -> StreamKey:
    """Accept either a ready StreamKey or an integer seed."""
    if isinstance(key_or_seed, StreamKey):
        return key_or_seed
    if isinstance(key_or_seed, tuple) and len(key_or_seed) == 2:
        return StreamKey(int(key_or_seed[0]) & MASK64, int(key_or_seed[1]) & MASK64)
    if isinstance(key_or_seed, int):
        return master_key(key_or_seed)
    raise TypeError("expected StreamKey, (hi, lo) pair, or integer seed")
