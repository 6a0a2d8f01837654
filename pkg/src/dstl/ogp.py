"""Replica trees, correlated tensor families, and forbidden-structure machinery.

A depth-N, D-regular tree (root at depth 1) carries an independent entry
stream per vertex. Leaves index coupled tensors that agree on nested
index corners according to tree ancestry. Candidate structures assign
per-vertex coordinate shells whose index sets tile each leaf's k**p
block; the counting bounds price the existence of any such structure
with all leaf sums above threshold.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .algorithms import OnlineAlgorithmContract, run_online, success_event
from .errors import ValidationError
from .seeds import StreamKey, as_key, derive_key
from .tensor import GaussianTensorSource, Selection, _check_tuples, _generic_sweep, sum_subtensor
from .theory import AsymptoticParams, PartitionScheme, kappa, scale_Dn

Path = Tuple[int, ...]


@dataclass(frozen=True)
class ReplicaTree:
    """D-regular rooted tree of depth N with per-vertex stream keys.

    Vertices are addressed by child-index paths (root = empty path, depth
    = path length + 1); keys derive from the master key and the path, so
    a family is reproducible and leaves can be evaluated independently.
    """

    scheme: PartitionScheme
    master: StreamKey

    @property
    def N(self) -> int:
        return self.scheme.N

    @property
    def D(self) -> int:
        return self.scheme.D

    def depth(self, v: Path) -> int:
        return len(v) + 1

    def vertices(self) -> List[Path]:
        out: List[Path] = []
        for depth in range(1, self.N + 1):
            out.extend(itertools.product(range(self.D), repeat=depth - 1))
        return out

    def leaves(self) -> List[Path]:
        return list(itertools.product(range(self.D), repeat=self.N - 1))

    def leaves_below(self, v: Path) -> List[Path]:
        return [leaf for leaf in self.leaves() if leaf[: len(v)] == v]

    def ray(self, leaf: Path) -> List[Path]:
        """Ancestors of a leaf from the root down, depths 1..N."""
        if len(leaf) != self.N - 1:
            raise ValidationError(f"{leaf} is not a leaf path (need length {self.N - 1})")
        return [leaf[:i] for i in range(self.N)]

    def vertex_key(self, v: Path) -> StreamKey:
        return derive_key(self.master, "tree-vertex", len(v), *v)


def _corner(alpha: float, n: int) -> int:
    # grids hold exact rationals as floats; the nudge keeps floor(j/N * n)
    # from dropping below an intended integer by one ulp
    return int(math.floor(alpha * n + 1e-9))


@dataclass(frozen=True)
class CorrelatedFamily:
    """Leaf-indexed coupled tensors over one replica tree.

    An entry with all coordinates inside corner j (the smallest such j)
    reads the stream of the leaf's depth-j ancestor, so two leaves agree
    exactly on the corner of their deepest common ancestor and are driven
    by independent streams elsewhere. Each leaf tensor is marginally an
    i.i.d. standard Gaussian tensor.
    """

    tree: ReplicaTree
    n: int
    p: int
    k: int

    def __post_init__(self):
        corners = tuple(_corner(a, self.n) for a in self.tree.scheme.alphas)
        for a, b in zip(corners, corners[1:]):
            if a >= b:
                raise ValidationError(f"degenerate corner grid {corners} at n={self.n}")
        object.__setattr__(self, "corners", corners)

    def vertex_source(self, v: Path) -> GaussianTensorSource:
        return GaussianTensorSource(self.n, self.p, self.tree.vertex_key(v))

    def leaf_tensor(self, leaf: Path) -> "_LeafSource":
        return _LeafSource(self, tuple(leaf))


class _LeafSource:
    """Virtual tensor of one leaf: routes each entry to the ancestor stream
    that owns the smallest corner containing it."""

    def __init__(self, family: CorrelatedFamily, leaf: Path):
        self.family = family
        self.leaf = leaf
        self.n = family.n
        self.p = family.p
        ray = family.tree.ray(leaf)
        self._sources = [family.vertex_source(v) for v in ray]
        self._inner = np.asarray(family.corners[1:], dtype=np.int64)

    def batch(self, tuples) -> np.ndarray:
        t = _check_tuples(tuples, self.n, self.p)
        if t.shape[0] == 0:
            return np.empty(0, dtype=np.float64)
        depth_idx = np.searchsorted(self._inner, t.max(axis=1), side="left")
        out = np.empty(t.shape[0], dtype=np.float64)
        for j in np.unique(depth_idx):
            mask = depth_idx == j
            out[mask] = self._sources[j].batch(t[mask])
        return out

    def entry(self, idx: Sequence[int]) -> float:
        return float(self.batch(np.asarray([idx]))[0])

    def sweep_sums(self, others, insert_at: int, candidates) -> np.ndarray:
        return _generic_sweep(self.batch, others, insert_at, candidates)


def correlated_instances(tree: ReplicaTree, n: int, p: int, k: int) -> CorrelatedFamily:
    """Couple one tensor per leaf through the tree's nested corner structure."""
    return CorrelatedFamily(tree=tree, n=n, p=p, k=k)


def shell_sizes(scheme: PartitionScheme, k: int) -> List[int]:
    """Per-depth coordinate-shell sizes (alpha_j - alpha_{j-1}) * k, validated integral."""
    sizes = []
    for lo, hi in zip(scheme.alphas, scheme.alphas[1:]):
        raw = (hi - lo) * k
        size = round(raw)
        if abs(raw - size) > 1e-9 or size < 1:
            raise ValidationError(f"shell size {(hi - lo)} * {k} is not a positive integer")
        sizes.append(size)
    return sizes


@dataclass(frozen=True)
class ForbiddenCandidate:
    """Per-vertex, per-coordinate index shells over one replica tree shape.

    Construction validates shell cardinalities and in-set distinctness;
    cross-vertex disjointness is checked by `check_disjoint` (and surfaced
    as a verdict by `is_forbidden`, not an exception).
    """

    scheme: PartitionScheme
    n: int
    k: int
    p: int
    sets: Mapping[Path, tuple]

    def __post_init__(self):
        sizes = shell_sizes(self.scheme, self.k)
        fixed: Dict[Path, tuple] = {}
        for v, per_coord in self.sets.items():
            v = tuple(int(c) for c in v)
            depth = len(v) + 1
            if depth > self.scheme.N:
                raise ValidationError(f"vertex {v} deeper than the tree")
            per_coord = tuple(tuple(int(i) for i in s) for s in per_coord)
            if len(per_coord) != self.p:
                raise ValidationError(f"vertex {v} needs {self.p} coordinate sets")
            for s, seq in enumerate(per_coord, start=1):
                if len(seq) != sizes[depth - 1]:
                    raise ValidationError(
                        f"vertex {v} coordinate {s} has {len(seq)} indices, expected {sizes[depth - 1]}"
                    )
                if len(set(seq)) != len(seq):
                    raise ValidationError(f"vertex {v} coordinate {s} repeats an index")
                if min(seq) < 1 or max(seq) > self.n:
                    raise ValidationError(f"vertex {v} coordinate {s} outside [1, {self.n}]")
            fixed[v] = per_coord
        object.__setattr__(self, "sets", fixed)

    def vertices(self) -> List[Path]:
        return sorted(self.sets.keys(), key=lambda v: (len(v), v))

    def check_disjoint(self) -> Optional[tuple]:
        """Witness (u, v, s, index) of a same-coordinate overlap, or None."""
        verts = self.vertices()
        for s in range(self.p):
            seen: Dict[int, Path] = {}
            for v in verts:
                for i in self.sets[v][s]:
                    if i in seen:
                        return (seen[i], v, s + 1, i)
                    seen[i] = v
        return None


def _ray_of(cand: ForbiddenCandidate, v: Path) -> List[Path]:
    ray = [v[:i] for i in range(len(v) + 1)]
    for anc in ray:
        if anc not in cand.sets:
            raise ValidationError(f"vertex {anc} of the ray to {v} has no assigned sets")
    return ray


def build_Ev(cand: ForbiddenCandidate, v: Path) -> np.ndarray:
    """Index shell of vertex v: tuples of the depth-j corner product that
    touch v's own coordinate sets, i.e. full-prefix product minus the
    product of the strict-prefix unions. Shape (m, p), 1-based."""
    v = tuple(v)
    ray = _ray_of(cand, v)
    unions = []
    own = cand.sets[v]
    for s in range(cand.p):
        seq: List[int] = []
        for anc in ray:
            seq.extend(cand.sets[anc][s])
        unions.append(seq)
    own_sets = [frozenset(o) for o in own]
    rows = []
    for tup in itertools.product(*unions):
        if any(tup[s] in own_sets[s] for s in range(cand.p)):
            rows.append(tup)
    return np.asarray(rows, dtype=np.int64).reshape(len(rows), cand.p)


def assemble_Mv(cand: ForbiddenCandidate, leaf: Path) -> Selection:
    """Full k**p block of a leaf: union of the shells along its ray,
    verified to tile the product of the per-coordinate unions exactly."""
    leaf = tuple(leaf)
    if len(leaf) != cand.scheme.N - 1:
        raise ValidationError(f"{leaf} is not a leaf path")
    ray = _ray_of(cand, leaf)
    unions = []
    for s in range(cand.p):
        seq: List[int] = []
        for anc in ray:
            seq.extend(cand.sets[anc][s])
        unions.append(tuple(seq))
    sel = Selection(tuple(unions))
    if sel.k != cand.k:
        raise ValidationError(f"ray unions have {sel.k} indices per coordinate, expected {cand.k}")
    shell_union = set()
    for anc in ray:
        shell_union.update(map(tuple, build_Ev(cand, anc)))
    product_set = set(itertools.product(*unions))
    if shell_union != product_set:
        raise ValidationError("ray shells do not tile the full index block")
    return sel


def gamma_star(src, e_v: np.ndarray, params: AsymptoticParams) -> float:
    """Normalized Gaussian sum over one shell: Sum(entries of E_v) / sum-scale."""
    e_v = np.asarray(e_v, dtype=np.int64)
    if e_v.size == 0:
        raise ValidationError("empty shell")
    return float(src.batch(e_v).sum()) / scale_Dn(params)


@dataclass(frozen=True)
class ForbiddenVerdict:
    status: str  # "forbidden" | "below-threshold" | "structurally-invalid"
    threshold: float
    leaf_sums: Mapping[Path, float]
    witness: Optional[tuple] = None
    failing_leaf: Optional[Path] = None


def is_forbidden(cand: ForbiddenCandidate, entry_source, params: AsymptoticParams) -> ForbiddenVerdict:
    """Classify a candidate: overlap witness, a leaf below threshold, or forbidden.

    `entry_source` is either one tensor source (all leaves read the same
    tensor) or a CorrelatedFamily (each leaf reads its own coupled tensor).
    """
    threshold = (kappa(params.p) + params.epsilon) * scale_Dn(params)
    witness = cand.check_disjoint()
    if witness is not None:
        return ForbiddenVerdict("structurally-invalid", threshold, {}, witness=witness)
    leaf_sums: Dict[Path, float] = {}
    failing = None
    leaves = itertools.product(range(cand.scheme.D), repeat=cand.scheme.N - 1)
    for leaf in leaves:
        sel = assemble_Mv(cand, leaf)
        src = entry_source.leaf_tensor(leaf) if isinstance(entry_source, CorrelatedFamily) else entry_source
        total = sum_subtensor(src, sel)
        leaf_sums[leaf] = total
        if total < threshold and failing is None:
            failing = leaf
    if failing is not None:
        return ForbiddenVerdict("below-threshold", threshold, leaf_sums, failing_leaf=failing)
    return ForbiddenVerdict("forbidden", threshold, leaf_sums)


@dataclass(frozen=True)
class CandidateViolation:
    kind: str  # "increment-mismatch" | "overlap"
    detail: str
    witness: tuple


def _step_slices(scheme: PartitionScheme, k: int) -> List[Tuple[int, int]]:
    """Half-open output-step ranges (alpha_{j-1} k, alpha_j k] per depth."""
    edges = []
    for a in scheme.alphas:
        e = a * k
        r = round(e)
        if abs(e - r) > 1e-9:
            raise ValidationError(f"alpha * k = {e} is not an integer; pick k divisible by the grid")
        edges.append(r)
    return list(zip(edges, edges[1:]))


def outputs_to_candidate(
    family: CorrelatedFamily, leaf_outputs: Mapping[Path, Selection]
) -> Union[ForbiddenCandidate, CandidateViolation]:
    """Lift per-leaf online outputs to a candidate structure.

    Vertex v at depth j receives the coordinates its leaves appended
    during output steps in (alpha_{j-1} k, alpha_j k]; the lift verifies
    those slices agree across all leaves below v and that no index is
    reused for the same coordinate anywhere in the tree, reporting the
    first failure instead of assuming either property.
    """
    tree = family.tree
    leaves = tree.leaves()
    missing = [leaf for leaf in leaves if tuple(leaf) not in leaf_outputs]
    if missing:
        raise ValidationError(f"missing outputs for leaves {missing}")
    for leaf in leaves:
        out = leaf_outputs[tuple(leaf)]
        if out.k != family.k or out.p != family.p:
            raise ValidationError(f"leaf {leaf} output has shape k={out.k}, p={out.p}")
    slices = _step_slices(tree.scheme, family.k)
    sets: Dict[Path, tuple] = {}
    for v in sorted({leaf[:j] for leaf in leaves for j in range(tree.N)}, key=lambda x: (len(x), x)):
        depth = len(v) + 1
        lo, hi = slices[depth - 1]
        below = tree.leaves_below(v)
        reference = None
        for leaf in below:
            out = leaf_outputs[tuple(leaf)]
            piece = tuple(tuple(out.sets[s][lo:hi]) for s in range(family.p))
            if reference is None:
                reference, ref_leaf = piece, leaf
            elif piece != reference:
                return CandidateViolation(
                    kind="increment-mismatch",
                    detail=f"leaves {ref_leaf} and {leaf} disagree on steps {lo + 1}..{hi} below vertex {v}",
                    witness=(ref_leaf, leaf, v),
                )
        sets[v] = reference
    cand = ForbiddenCandidate(scheme=tree.scheme, n=family.n, k=family.k, p=family.p, sets=sets)
    overlap = cand.check_disjoint()
    if overlap is not None:
        u, w, s, idx = overlap
        return CandidateViolation(
            kind="overlap",
            detail=f"index {idx} reused for coordinate {s} by vertices {u} and {w}",
            witness=overlap,
        )
    return cand


# --------------------------------------------------------------------------
# counting bounds


def enum_count_log(ell: int, scheme: PartitionScheme, k: int, p: int, n: int) -> float:
    """log of the number of shell assignments down to depth ell."""
    if not 1 <= ell <= scheme.N:
        raise ValidationError(f"depth {ell} outside [1, {scheme.N}]")
    a = scheme.alphas
    total = sum(scheme.D ** (i - 1) * (a[i] - a[i - 1]) for i in range(1, ell + 1))
    return p * k * total * math.log(n)


def prob_bound_log(ell: int, scheme: PartitionScheme, params: AsymptoticParams) -> float:
    """log of the tail bound on the depth-ell shell-sum event (always < 0)."""
    if not 1 <= ell <= scheme.N:
        raise ValidationError(f"depth {ell} outside [1, {scheme.N}]")
    a = scheme.alphas
    return (
        -params.p
        * params.k
        * scheme.D ** (ell - 1)
        * (1.0 + scheme.delta) ** 2
        * (a[ell] - a[ell - 1])
        * math.log(params.n)
    )


def depth_margin(scheme: PartitionScheme) -> float:
    """Minimal per-depth exponent margin c with bound <= exp(-c p k log n)."""
    a = scheme.alphas
    margins = []
    for ell in range(1, scheme.N + 1):
        carry = 0.0 if a[ell - 1] == 0.0 else a[ell - 1] * scheme.D ** (ell - 2)
        margins.append(2.0 * scheme.delta * scheme.D ** (ell - 1) * (a[ell] - a[ell - 1]) - carry)
    return min(margins)


def forbidden_prob_bound_log(scheme: PartitionScheme, params: AsymptoticParams) -> float:
    """log of the union bound over depths on the forbidden-structure event.

    Validates that the branching inequality yields a positive margin and
    that the resulting bound is at most exp(-c p k log n) for that margin.
    """
    c = depth_margin(scheme)
    if c <= 0:
        raise ValidationError(
            f"non-positive depth margin {c:.4g}: branching factor {scheme.D} undersized for the grid"
        )
    exponents = [
        enum_count_log(ell, scheme, params.k, params.p, params.n) + prob_bound_log(ell, scheme, params)
        for ell in range(1, scheme.N + 1)
    ]
    peak = max(exponents)
    bound = peak + math.log(sum(math.exp(e - peak) for e in exponents))
    if bound >= 0:
        raise ValidationError(f"union bound exponent {bound:.4g} is not negative at these parameters")
    ceiling = -c * params.p * params.k * math.log(params.n)
    if bound > ceiling:
        raise ValidationError(
            f"union bound {bound:.4g} exceeds the margin ceiling {ceiling:.4g}; scheme inconsistent"
        )
    return bound


# --------------------------------------------------------------------------
# joint-success estimation


def wilson_interval(successes: int, total: int, z: float = 1.959963984540054) -> Tuple[float, float]:
    """95% Wilson score interval for a binomial proportion."""
    if total == 0:
        return (0.0, 1.0)
    phat = successes / total
    denom = 1.0 + z * z / total
    center = (phat + z * z / (2 * total)) / denom
    half = z * math.sqrt(phat * (1 - phat) / total + z * z / (4 * total * total)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


@dataclass
class JointTrialRow:
    trial: int
    seed: str
    leaf_successes: int
    joint: bool
    verdict: str


@dataclass
class JointReport:
    scheme: PartitionScheme
    params: AsymptoticParams
    trials: int
    leaf_count: int
    p_suc_hat: float
    p_joint_hat: float
    suc_ci: Tuple[float, float]
    joint_ci: Tuple[float, float]
    replication_floor: float  # p_suc_hat ** leaf_count
    consistent: bool  # p_joint_hat >= floor - 2 * joint CI half-width
    verdict_tally: Dict[str, int]
    bound_log: Optional[float]
    rows: List[JointTrialRow] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "scheme": self.scheme.to_json_dict(),
            "params": {
                "n": self.params.n,
                "k": self.params.k,
                "p": self.params.p,
                "epsilon": self.params.epsilon,
            },
            "trials": self.trials,
            "leaf_count": self.leaf_count,
            "p_suc_hat": self.p_suc_hat,
            "p_joint_hat": self.p_joint_hat,
            "ci": {"p_suc": list(self.suc_ci), "p_joint": list(self.joint_ci)},
            "replication_floor": self.replication_floor,
            "consistent": self.consistent,
            "verdict_tally": dict(self.verdict_tally),
            "bound_log": self.bound_log,
        }


AlgOrFactory = Union[OnlineAlgorithmContract, Callable[[StreamKey], OnlineAlgorithmContract]]


def estimate_joint_success(
    alg: AlgOrFactory,
    scheme: PartitionScheme,
    params: AsymptoticParams,
    trials: int,
    *,
    master_seed: Union[int, StreamKey] = 0,
    coin_mode: str = "shared",
) -> JointReport:
    """Monte Carlo joint-success estimate over correlated families.

    Runs the online algorithm on every leaf tensor of `trials` fresh
    families, tallying per-leaf and all-leaves success frequencies, the
    replication floor p_suc**leaves with Wilson intervals, and (on every
    joint success) the lifted-candidate verdict.

    `alg` is a ready contract, or a factory from a coin StreamKey for
    randomized algorithms; `coin_mode` picks whether replicas of one
    family share the coin key ("shared") or draw their own ("independent").
    """
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    if coin_mode not in ("shared", "independent"):
        raise ValidationError(f"coin_mode {coin_mode!r} not in ('shared', 'independent')")
    master = as_key(master_seed)
    n, p, k = params.n, params.p, params.k
    if not (isinstance(n, int) and n >= 1):
        raise ValidationError("joint-success estimation needs integer n >= 1")
    _step_slices(scheme, k)  # validate grid/k integrality up front

    leaf_total = 0
    leaf_hits = 0
    joint_hits = 0
    tally: Dict[str, int] = {}
    rows: List[JointTrialRow] = []
    for t in range(trials):
        fam_key = derive_key(master, "ogp-family", t)
        tree = ReplicaTree(scheme=scheme, master=fam_key)
        family = correlated_instances(tree, n, p, k)
        outputs: Dict[Path, Selection] = {}
        successes = 0
        for li, leaf in enumerate(tree.leaves()):
            if isinstance(alg, OnlineAlgorithmContract):
                contract = alg
            else:
                coin_tokens = ("coins", t) if coin_mode == "shared" else ("coins", t, li)
                contract = alg(derive_key(master, *coin_tokens))
            src = family.leaf_tensor(leaf)
            run = run_online(contract, src, k)
            outputs[tuple(leaf)] = run.selection
            if success_event(run.selection, src, params):
                successes += 1
        leaf_total += len(outputs)
        leaf_hits += successes
        joint = successes == len(outputs)
        verdict = ""
        if joint:
            joint_hits += 1
            lifted = outputs_to_candidate(family, outputs)
            if isinstance(lifted, CandidateViolation):
                verdict = f"candidate-violation:{lifted.kind}"
            else:
                verdict = is_forbidden(lifted, family, params).status
            tally[verdict] = tally.get(verdict, 0) + 1
        rows.append(
            JointTrialRow(trial=t, seed=fam_key.hex(), leaf_successes=successes, joint=joint, verdict=verdict)
        )

    leaf_count = scheme.leaf_count()
    p_suc = leaf_hits / leaf_total
    p_joint = joint_hits / trials
    suc_ci = wilson_interval(leaf_hits, leaf_total)
    joint_ci = wilson_interval(joint_hits, trials)
    half = (joint_ci[1] - joint_ci[0]) / 2.0
    floor = p_suc**leaf_count
    try:
        bound = forbidden_prob_bound_log(scheme, params)
    except ValidationError:
        bound = None
    return JointReport(
        scheme=scheme,
        params=params,
        trials=trials,
        leaf_count=leaf_count,
        p_suc_hat=p_suc,
        p_joint_hat=p_joint,
        suc_ci=suc_ci,
        joint_ci=joint_ci,
        replication_floor=floor,
        consistent=p_joint + 2.0 * half >= floor,
        verdict_tally=tally,
        bound_log=bound,
        rows=rows,
    )


def random_candidate(scheme: PartitionScheme, n: int, k: int, p: int, seed: Union[int, StreamKey]) -> ForbiddenCandidate:
    """Uniformly drawn structurally-valid candidate (disjoint shells)."""
    sizes = shell_sizes(scheme, k)
    key = as_key(seed)
    rng = np.random.default_rng((key.hi, key.lo))
    verts: List[Path] = []
    for depth in range(1, scheme.N + 1):
        verts.extend(itertools.product(range(scheme.D), repeat=depth - 1))
    need = sum(sizes[len(v)] for v in verts)
    if need > n:
        raise ValidationError(f"need {need} distinct indices per coordinate but n={n}")
    sets: Dict[Path, list] = {v: [] for v in verts}
    per_coord: List[Dict[Path, tuple]] = []
    for _ in range(p):
        pool = rng.choice(n, size=need, replace=False) + 1
        pos = 0
        coord_sets = {}
        for v in verts:
            size = sizes[len(v)]
            coord_sets[v] = tuple(int(i) for i in pool[pos : pos + size])
            pos += size
        per_coord.append(coord_sets)
    return ForbiddenCandidate(
        scheme=scheme,
        n=n,
        k=k,
        p=p,
        sets={v: tuple(per_coord[s][v] for s in range(p)) for v in verts},
    )
