"""Closed-form constants, thresholds, and the partition/branching construction.

Natural logarithms throughout. All functions are pure; everything here is
used both for reporting and as analytic oracles in tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .errors import CapacityError, ValidationError


@dataclass(frozen=True)
class AsymptoticParams:
    """Problem-regime parameters (n, k, p, epsilon)."""

    n: float
    k: int
    p: int
    epsilon: float

    def __post_init__(self):
        if self.k < 1 or self.p < 1:
            raise ValidationError(f"need k >= 1 and p >= 1, got k={self.k}, p={self.p}")
        if self.n < self.k:
            raise ValidationError(f"need n >= k, got n={self.n}, k={self.k}")
        if self.epsilon <= 0:
            raise ValidationError(f"epsilon must be positive, got {self.epsilon}")


def kappa(p: int) -> float:
    """The recurring limit constant 2p/(p+1)."""
    if p < 1:
        raise ValidationError(f"p must be >= 1, got {p}")
    return 2.0 * p / (p + 1.0)


def _require_log_scale(n: float) -> None:
    if n < 2:
        raise ValidationError(f"need n >= 2 for log-scale formulas, got {n}")


def eta_opt(params: AsymptoticParams) -> float:
    """Asymptotic optimum of the subtensor average: sqrt(2p log n / k^(p-1))."""
    _require_log_scale(params.n)
    return math.sqrt(2.0 * params.p * math.log(params.n) / params.k ** (params.p - 1))


def eta_alg(params: AsymptoticParams) -> float:
    """Best known polynomial-time average: kappa(p) * sqrt(2 log n / k^(p-1))."""
    _require_log_scale(params.n)
    return kappa(params.p) * math.sqrt(2.0 * math.log(params.n) / params.k ** (params.p - 1))


def approx_factor(p: int) -> float:
    """eta_alg / eta_opt = 2 sqrt(p) / (p + 1)."""
    if p < 1:
        raise ValidationError(f"p must be >= 1, got {p}")
    return 2.0 * math.sqrt(p) / (p + 1.0)


def eta_2ogp() -> float:
    """Pair-overlap gap threshold for matrices, 5/(3 sqrt 3); reporting only."""
    return 5.0 / (3.0 * math.sqrt(3.0))


def scale_Dn(params: AsymptoticParams) -> float:
    """Sum-scale normalization sqrt(2 k^(p+1) log n)."""
    _require_log_scale(params.n)
    return math.sqrt(2.0 * params.k ** (params.p + 1) * math.log(params.n))


def riemann_gap(alphas: Sequence[float], p: int) -> float:
    """Upper Riemann-type sum approximating the integral limit kappa(p).

    Evaluates p * sum_i (a_i - a_{i-1}) * sqrt(sum_j a_{i-1}^j a_i^(p-1-j) / p)
    over the grid; always >= kappa(p) by Cauchy-Schwarz on each cell.
    """
    if p < 1:
        raise ValidationError(f"p must be >= 1, got {p}")
    a = [float(x) for x in alphas]
    if len(a) < 2 or a[0] != 0.0 or a[-1] != 1.0:
        raise ValidationError("grid must run from 0 to 1")
    if any(a[i] >= a[i + 1] for i in range(len(a) - 1)):
        raise ValidationError("grid must be strictly increasing")
    total = 0.0
    for lo, hi in zip(a, a[1:]):
        inner = sum(lo**j * hi ** (p - 1 - j) for j in range(p))
        total += (hi - lo) * math.sqrt(inner / p)
    return p * total


@dataclass(frozen=True)
class PartitionScheme:
    """Grid/branching parameters (N, alphas, delta, D) for one (p, epsilon).

    ``build_partition`` returns schemes satisfying both the grid inequality
    (riemann_gap <= kappa + eps/10) and the branching inequality on D;
    ``uniform_scheme`` builds structurally-valid schemes with caller-chosen
    N and D for experiments that do not rely on the counting bound.
    """

    p: int
    epsilon: float
    N: int
    alphas: tuple
    delta: float
    D: int

    def __post_init__(self):
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        if self.N < 1 or len(self.alphas) != self.N + 1:
            raise ValidationError(f"need N >= 1 and N+1 grid points, got N={self.N}")
        if self.alphas[0] != 0.0 or self.alphas[-1] != 1.0:
            raise ValidationError("grid must run from 0 to 1")
        if any(a >= b for a, b in zip(self.alphas, self.alphas[1:])):
            raise ValidationError("grid must be strictly increasing")
        if self.D < 1:
            raise ValidationError(f"branching factor must be >= 1, got {self.D}")

    def d_bound(self) -> float:
        """The strict lower bound on D from the branching inequality."""
        return max(
            self.alphas[i - 1] / (2.0 * self.delta * (self.alphas[i] - self.alphas[i - 1]))
            for i in range(1, self.N + 1)
        )

    def validate_bogp(self) -> None:
        """Check the two construction inequalities; raise if either fails."""
        gap = riemann_gap(self.alphas, self.p)
        limit = kappa(self.p) + self.epsilon / 10.0
        if gap > limit + 1e-12:
            raise ValidationError(f"grid gap {gap:.6f} exceeds kappa + eps/10 = {limit:.6f}")
        expected_delta = (kappa(self.p) + self.epsilon) / (kappa(self.p) + self.epsilon / 10.0) - 1.0
        if abs(self.delta - expected_delta) > 1e-12:
            raise ValidationError(f"delta {self.delta} != exact formula value {expected_delta}")
        if self.delta <= 0:
            raise ValidationError("delta must be positive")
        if not self.D > self.d_bound():
            raise ValidationError(f"branching factor {self.D} not above bound {self.d_bound():.4f}")

    def leaf_count(self) -> int:
        return self.D ** (self.N - 1)

    def to_json_dict(self) -> dict:
        return {
            "p": self.p,
            "epsilon": self.epsilon,
            "N": self.N,
            "alphas": list(self.alphas),
            "delta": self.delta,
            "D": self.D,
        }


def _delta_for(p: int, epsilon: float) -> float:
    kp = kappa(p)
    return (kp + epsilon) / (kp + epsilon / 10.0) - 1.0


def uniform_scheme(p: int, epsilon: float, N: int, D: int) -> PartitionScheme:
    """Uniform-grid scheme with caller-fixed N and D (structural checks only)."""
    if epsilon <= 0:
        raise ValidationError(f"epsilon must be positive, got {epsilon}")
    alphas = tuple(i / N for i in range(N + 1))
    return PartitionScheme(p=p, epsilon=epsilon, N=N, alphas=alphas, delta=_delta_for(p, epsilon), D=D)


def build_partition(p: int, epsilon: float, n_cap: int = 2**16) -> PartitionScheme:
    """Smallest power-of-two uniform grid meeting the gap inequality, with
    the smallest branching factor strictly above its bound."""
    if p < 1:
        raise ValidationError(f"p must be >= 1, got {p}")
    if epsilon <= 0:
        raise ValidationError(f"epsilon must be positive, got {epsilon}")
    target = kappa(p) + epsilon / 10.0
    N = 1
    while True:
        alphas = tuple(i / N for i in range(N + 1))
        if riemann_gap(alphas, p) <= target:
            break
        N *= 2
        if N > n_cap:
            raise CapacityError(f"grid size needed for epsilon={epsilon} exceeds cap {n_cap}")
    delta = _delta_for(p, epsilon)
    bound = max(alphas[i - 1] / (2.0 * delta * (alphas[i] - alphas[i - 1])) for i in range(1, N + 1))
    D = math.floor(bound) + 1
    scheme = PartitionScheme(p=p, epsilon=epsilon, N=N, alphas=alphas, delta=delta, D=D)
    scheme.validate_bogp()
    return scheme


def gaussian_tail_bound(t: float, sigma2: float) -> float:
    """The bound exp(-t^2 / (2 sigma^2)) on P[N(0, sigma^2) >= t]."""
    if t <= 0 or sigma2 <= 0:
        raise ValidationError(f"need t > 0 and sigma2 > 0, got t={t}, sigma2={sigma2}")
    return math.exp(-(t * t) / (2.0 * sigma2))
