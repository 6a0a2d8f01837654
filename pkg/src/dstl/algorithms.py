"""Subtensor search algorithms and the online-algorithm contract.

Contains the incremental greedy procedure (general rank), the alternating
local search for matrices, an exact brute-force oracle, the prefix-
revelation contract with its compliance checker, and the success-event
predicate used by the replication experiments.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import CapacityError, ValidationError
from .seeds import StreamKey, as_key, derive_key, master_key
from .tensor import (
    GaussianTensorSource,
    Selection,
    SplicedView,
    materialize,
    partition_block,
    prefix,
    sum_subtensor,
)
from .theory import AsymptoticParams, kappa, scale_Dn


def _others_product(sets_except: Sequence[Sequence[int]]) -> np.ndarray:
    """Cartesian product of the fixed coordinate sets, lexicographic order."""
    if not sets_except:
        return np.empty((1, 0), dtype=np.int64)
    rows = list(itertools.product(*sets_except))
    return np.asarray(rows, dtype=np.int64)


@dataclass(frozen=True)
class TraceRow:
    r: int
    s: int
    index: int
    score: float
    cum: float


@dataclass
class RunTrace:
    """Per-round record of a greedy run: chosen indices, block maxima, cumulative sum."""

    n: int
    p: int
    k: int
    rows: List[TraceRow] = field(default_factory=list)

    def final_sum(self) -> float:
        return self.rows[-1].cum if self.rows else 0.0

    def score(self, r: int, s: int) -> float:
        for row in self.rows:
            if row.r == r and row.s == s:
                return row.score
        raise KeyError(f"no trace row for round {r}, coordinate {s}")

    def selection(self) -> Selection:
        sets = [[] for _ in range(self.p)]
        for row in self.rows:
            sets[row.s - 1].append(row.index)
        return Selection(tuple(tuple(s) for s in sets))

    def write_csv(self, fh) -> None:
        fh.write("round,coordinate,index,score,cumulative_sum\n")
        for row in self.rows:
            fh.write(f"{row.r},{row.s},{row.index},{row.score!r},{row.cum!r}\n")


@dataclass(frozen=True)
class IgpState:
    """Mid-round greedy state: coordinates below `next_coord` already hold
    `round` indices, the rest still hold `round` - 1. Carries k so the
    round's candidate block is determined."""

    sets: tuple
    round: int
    next_coord: int
    k: int

    def __post_init__(self):
        object.__setattr__(self, "sets", tuple(tuple(int(i) for i in s) for s in self.sets))
        r, s = self.round, self.next_coord
        if not 1 <= r <= self.k:
            raise ValidationError(f"round {r} outside [1, {self.k}]")
        if not 1 <= s <= len(self.sets):
            raise ValidationError(f"coordinate {s} outside [1, {len(self.sets)}]")
        for t, seq in enumerate(self.sets, start=1):
            want = r if t < s else r - 1
            if len(seq) != want:
                raise ValidationError(
                    f"coordinate {t} holds {len(seq)} indices, expected {want} before sweep ({r},{s})"
                )

    @classmethod
    def from_trace(cls, trace: RunTrace, r: int, s: int) -> "IgpState":
        sets = [[] for _ in range(trace.p)]
        for row in trace.rows:
            if row.r < r or (row.r == r and row.s < s):
                sets[row.s - 1].append(row.index)
        return cls(tuple(tuple(x) for x in sets), r, s, trace.k)


def _init_indices(block: range, p: int, init: str, init_seed) -> List[int]:
    if init == "first":
        return [block[0]] * (p - 1)
    if init == "random":
        key = as_key(0 if init_seed is None else init_seed)
        rng = np.random.default_rng((key.hi, key.lo))
        return [int(rng.integers(block[0], block[-1] + 1)) for _ in range(p - 1)]
    raise ValidationError(f"unknown init mode {init!r}")


def _igp_round(source, sels: List[List[int]], r: int, n: int, k: int, *, init: str, init_seed) -> List[Tuple[int, float]]:
    """Run greedy round r against `source`, appending in place.

    Returns the (index, block max score) pair per coordinate. Round 1
    assigns the initialization indices (score 0: no new entries summed
    until the last coordinate's sweep).
    """
    p = len(sels)
    block = partition_block(r, n, k)
    cand = np.arange(block[0], block[-1] + 1, dtype=np.int64)
    out = []
    if r == 1:
        for idx in _init_indices(block, p, init, init_seed):
            out.append((idx, 0.0))
        sweep_from = p
        for t, (idx, _) in enumerate(out):
            sels[t].append(idx)
    else:
        sweep_from = 1
    for s in range(sweep_from, p + 1):
        others = _others_product([sels[t] for t in range(p) if t != s - 1])
        scores = source.sweep_sums(others, s - 1, cand)
        pos = int(np.argmax(scores))
        idx = int(cand[pos])
        sels[s - 1].append(idx)
        out.append((idx, float(scores[pos])))
    return out


def igp_run(src, k: int, *, init: str = "first", init_seed=None) -> Tuple[Selection, RunTrace]:
    """Incremental greedy: one fresh block per round, one argmax per coordinate.

    Round 1 fixes the first p-1 coordinates (first block index by default,
    seeded-uniform with init="random") and optimizes the last; each later
    round appends, per coordinate in order, the block index maximizing the
    partial-selection fiber sum. Ties break to the smallest index.
    """
    n, p = src.n, src.p
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    if k > n:
        raise ValidationError(f"k={k} exceeds side length n={n}")
    sels: List[List[int]] = [[] for _ in range(p)]
    trace = RunTrace(n=n, p=p, k=k)
    cum = 0.0
    for r in range(1, k + 1):
        chosen = _igp_round(src, sels, r, n, k, init=init, init_seed=init_seed)
        for s, (idx, score) in enumerate(chosen, start=1):
            cum += score
            trace.rows.append(TraceRow(r=r, s=s, index=idx, score=score, cum=cum))
    selection = Selection(tuple(tuple(s) for s in sels))
    return selection, trace


def score_candidate(src, state: IgpState, s: int, j: int) -> float:
    """Fiber sum of candidate j at sweep (round, coordinate s) of the greedy."""
    if s != state.next_coord:
        raise ValidationError(f"state is positioned at coordinate {state.next_coord}, not {s}")
    block = partition_block(state.round, src.n, state.k)
    if j not in block:
        raise ValidationError(f"candidate {j} outside round-{state.round} block {block}")
    others = _others_product([state.sets[t] for t in range(len(state.sets)) if t != s - 1])
    return float(src.sweep_sums(others, s - 1, np.asarray([j], dtype=np.int64))[0])


def event_G_monitor(trace: RunTrace, params: AsymptoticParams) -> bool:
    """True iff every block max clears its score floor
    sqrt(r^(s-1) (r-1)^(p-s)) * sqrt((2 - eps) log n)."""
    if params.epsilon >= 2:
        raise ValidationError("score-floor monitor needs epsilon < 2")
    if (params.n, params.k, params.p) != (trace.n, trace.k, trace.p):
        raise ValidationError("params do not match the trace dimensions")
    base = math.sqrt((2.0 - params.epsilon) * math.log(trace.n))
    for row in trace.rows:
        var = row.r ** (row.s - 1) * (row.r - 1) ** (trace.p - row.s)
        if row.score < math.sqrt(var) * base:
            return False
    return True


@dataclass(frozen=True)
class LasResult:
    selection: Selection
    alternations: int
    converged: bool


def _top_k(sums: np.ndarray, k: int) -> Tuple[int, ...]:
    """Indices (1-based, ascending) of the k largest sums, smallest index on ties."""
    order = np.lexsort((np.arange(sums.shape[0]), -sums))
    return tuple(sorted(int(i) + 1 for i in order[:k]))


def las_run(src, k: int, init_seed, max_alternations: int = 1000) -> LasResult:
    """Alternating maximization for matrices (rank 2).

    From a seeded uniform random row/column pair, alternately replaces the
    column set with the k columns of largest column sum over the current
    rows, then symmetrically the rows, until one full alternation changes
    nothing. Ties break to the smallest index. If the alternation cap is
    hit the current selection is returned flagged non-converged.
    """
    if src.p != 2:
        raise ValidationError(f"alternating search requires rank 2, got p={src.p}")
    n = src.n
    if not 1 <= k <= n:
        raise ValidationError(f"k={k} outside [1, {n}]")
    key = as_key(init_seed)
    rng = np.random.default_rng((key.hi, key.lo))
    rows = tuple(sorted(int(i) + 1 for i in rng.choice(n, size=k, replace=False)))
    cols = tuple(sorted(int(i) + 1 for i in rng.choice(n, size=k, replace=False)))
    everything = np.arange(1, n + 1, dtype=np.int64)

    def best_cols(row_set):
        others = np.asarray(row_set, dtype=np.int64).reshape(-1, 1)
        return _top_k(src.sweep_sums(others, 1, everything), k)

    def best_rows(col_set):
        others = np.asarray(col_set, dtype=np.int64).reshape(-1, 1)
        return _top_k(src.sweep_sums(others, 0, everything), k)

    alternations = 0
    converged = False
    for _ in range(max_alternations):
        alternations += 1
        new_cols = best_cols(rows)
        new_rows = best_rows(new_cols)
        if new_cols == cols and new_rows == rows:
            converged = True
            break
        rows, cols = new_rows, new_cols
    return LasResult(Selection((rows, cols)), alternations, converged)


def brute_force(src, k: int, budget: int = 10**8) -> Selection:
    """Exact maximizer of the subtensor average, lexicographic tie-break.

    Requires C(n, k)^p (and the n^p materialization) within `budget`;
    refuses rather than sampling when the budget is exceeded.
    """
    n, p = src.n, src.p
    if not 1 <= k <= n:
        raise ValidationError(f"k={k} outside [1, {n}]")
    combos = math.comb(n, k)
    if combos**p > budget:
        raise CapacityError(f"C({n},{k})^{p} = {combos**p} exceeds budget {budget}")
    values = materialize(src, max_entries=budget).values

    if p == 1:
        top = _top_k(values, k)
        return Selection((top,))

    best_val = -math.inf
    best_sets: Optional[tuple] = None
    axes = tuple(range(p - 1))
    for prefix_sets in itertools.product(itertools.combinations(range(n), k), repeat=p - 1):
        picker = np.ix_(*[np.asarray(c) for c in prefix_sets])
        fiber = values[picker].sum(axis=axes)
        last = _top_k(fiber, k)
        val = float(fiber[[i - 1 for i in last]].sum())
        if val > best_val:
            best_val = val
            best_sets = tuple(tuple(i + 1 for i in c) for c in prefix_sets) + (last,)
    assert best_sets is not None
    return Selection(best_sets)


def success_event(sel: Selection, src, params: AsymptoticParams) -> bool:
    """True iff the selection's sum clears (kappa(p) + eps) * sum-scale."""
    if sel.k != params.k or sel.p != params.p:
        raise ValidationError("selection shape does not match params")
    threshold = (kappa(params.p) + params.epsilon) * scale_Dn(params)
    return sum_subtensor(src, sel) >= threshold


# --------------------------------------------------------------------------
# online-algorithm contract


@dataclass(frozen=True)
class OnlineAlgorithmContract:
    """A sequential subtensor builder: one index per coordinate per step.

    `step(s, k, view, history)` must return the p new 1-based indices for
    step s given the revealed prefix `view` and the earlier increments.
    Purity with respect to hidden entries is enforced by `check_online`,
    not by construction.
    """

    name: str
    step: Callable[[int, int, object, list], tuple]
    seed: Optional[StreamKey] = None


@dataclass
class OnlineRun:
    selection: Selection
    increments: List[tuple]


def run_online(alg: OnlineAlgorithmContract, src, k: int, *, view_factory=None) -> OnlineRun:
    """Drive an online algorithm for k steps over growing prefix views."""
    p = src.p
    history: List[tuple] = []
    for s in range(1, k + 1):
        view = view_factory(s) if view_factory is not None else prefix(src, s, k)
        inc = tuple(int(i) for i in alg.step(s, k, view, history))
        if len(inc) != p:
            raise ValidationError(f"step {s} returned {len(inc)} indices, expected {p}")
        history.append(inc)
    sets = tuple(tuple(inc[t] for inc in history) for t in range(p))
    return OnlineRun(Selection(sets), history)


def igp_online(*, init: str = "first", init_seed=None) -> OnlineAlgorithmContract:
    """The incremental greedy wrapped as an online contract.

    Each step reconstructs the partial selections from the increment
    history and runs one greedy round against the step's view, so the
    step output is a pure function of (view, history).
    """

    def step(s, k, view, history):
        p = view.p
        sels = [[inc[t] for inc in history] for t in range(p)]
        chosen = _igp_round(view, sels, s, view.n, k, init=init, init_seed=init_seed)
        return tuple(idx for idx, _ in chosen)

    return OnlineAlgorithmContract(name="igp", step=step)


@dataclass(frozen=True)
class ComplianceTrial:
    trial: int
    passed: bool
    first_divergence: Optional[int]
    reason: str = ""


@dataclass
class ComplianceReport:
    trials: List[ComplianceTrial]

    @property
    def passed(self) -> bool:
        return all(t.passed for t in self.trials)

    @property
    def pass_count(self) -> int:
        return sum(1 for t in self.trials if t.passed)


def check_online(alg: OnlineAlgorithmContract, src, k: int, trials: int, *, resample_seed: int = 0) -> ComplianceReport:
    """Resampled-exterior replay test of the online contract.

    Per trial the algorithm runs twice in lockstep: once on permissive
    views of the true tensor, once on views whose entries outside the
    current prefix come from an independent stream. Any divergence in the
    increments exposes a dependence on hidden entries.
    """
    n, p = src.n, src.p
    base = derive_key(master_key(resample_seed), "check-online")
    results = []
    for t in range(trials):
        exterior = GaussianTensorSource(n, p, derive_key(base, t))
        history_true: List[tuple] = []
        history_replay: List[tuple] = []
        divergence: Optional[int] = None
        reason = ""
        for s in range(1, k + 1):
            bound = (s * n) // k
            true_view = SplicedView(src, src, bound)
            replay_view = SplicedView(src, exterior, bound)
            try:
                inc_true = tuple(int(i) for i in alg.step(s, k, true_view, history_true))
                inc_replay = tuple(int(i) for i in alg.step(s, k, replay_view, history_replay))
            except Exception as exc:  # noqa: BLE001 - report, never mask, algorithm faults
                divergence = s
                reason = f"step {s} raised {type(exc).__name__}: {exc}"
                break
            if inc_true != inc_replay:
                divergence = s
                reason = f"step {s} increments differ: {inc_true} vs {inc_replay}"
                break
            history_true.append(inc_true)
            history_replay.append(inc_replay)
        results.append(
            ComplianceTrial(trial=t, passed=divergence is None, first_divergence=divergence, reason=reason)
        )
    return ComplianceReport(results)
