"""Graph families: wedge combs, spherically symmetric trees, Galton-Watson
trees (plain, and conditioned to survive via the size-biased backbone),
bond-percolation clusters, and uniform spanning trees.

Oracles are lazy and infinite where the family is infinite; samplers are
pure functions of (spec, seed) and return explicit FiniteGraphs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np
from scipy.special import zeta as hurwitz_zeta

from .graphs import (DEFAULT_VERTEX_CAP, FiniteGraph, NeighborOracle,
                     RegionExplosionError)
from .rng import RngStream, counter_u64

INF_HEIGHT = 1 << 62


# ---------------------------------------------------------------------------
# Comb profiles


def _nudged_floor(v: float) -> int:
    # relative nudge absorbs libm pow rounding on integer-valued powers
    return int(math.floor(v * (1.0 + 1e-12) + 1e-9))


@dataclass(frozen=True)
class PowerProfile:
    """Tooth height C * |x|**alpha (floored); alpha = 0 gives constant C."""

    C: float = 1.0
    alpha: float = 1.0

    def __post_init__(self):
        if self.C < 0:
            raise ValueError("profile coefficient must be >= 0")
        if self.alpha < 0:
            raise ValueError("profile exponent must be >= 0")

    def height_from_r2(self, r2: int) -> int:
        if self.C == 0:
            return 0
        if self.alpha == 0:
            return _nudged_floor(self.C)
        if r2 == 0:
            return 0
        return _nudged_floor(self.C * math.pow(r2, 0.5 * self.alpha))

    @property
    def alpha_prime(self) -> float:
        return min(self.alpha, 2.0)

    @property
    def beta_prime(self) -> float:
        return (1.0 + self.alpha_prime) / (2.0 + self.alpha_prime)


@dataclass(frozen=True)
class TableProfile:
    """Explicit height table; spine sites outside the table get height 0."""

    table: dict

    def height_from_r2(self, r2: int) -> int:  # pragma: no cover - not used
        raise TypeError("table profiles are evaluated per spine site")


@dataclass(frozen=True)
class IidProfile:
    """Random heights, one independent draw per spine site, memoized.

    ``pmf`` is a sequence of (height, probability) pairs over integers >= 1.
    The draw at site x is a pure function of (seed, x), so the profile is a
    fixed (quenched) environment.
    """

    pmf: tuple
    seed: int

    def __post_init__(self):
        tot = sum(p for _, p in self.pmf)
        if abs(tot - 1.0) > 1e-9:
            raise ValueError("iid profile pmf must sum to 1")
        if any(h < 1 or h != int(h) for h, _ in self.pmf):
            raise ValueError("iid profile heights must be integers >= 1")


@dataclass(frozen=True)
class InfiniteProfile:
    """Two-sided infinite teeth: the comb over the full integer lattice."""


@dataclass(frozen=True)
class CombSpec:
    profile: object = PowerProfile()
    base_dim: int = 1

    def __post_init__(self):
        if self.base_dim not in (1, 2):
            raise ValueError("base_dim must be 1 or 2")


class CombOracle(NeighborOracle):
    """Comb graph: integer-lattice spine with a vertical tooth per site.

    Vertices are (x, y) for base_dim 1 and (x1, x2, y) for base_dim 2;
    y = 0 is the spine.  Tooth vertices see only their vertical neighbors.
    """

    def __init__(self, spec: CombSpec):
        self.spec = spec
        self.family = f"comb{spec.base_dim}d"
        self._heights: dict = {}
        self._iid_cdf = None
        prof = spec.profile
        if isinstance(prof, IidProfile):
            cum = []
            acc = 0.0
            for h, p in prof.pmf:
                acc += p
                cum.append((acc, int(h)))
            self._iid_cdf = cum
        self.two_sided = isinstance(prof, InfiniteProfile)

    def height(self, spine) -> int:
        """Tooth height above the spine site (INF_HEIGHT when unbounded)."""
        prof = self.spec.profile
        if isinstance(prof, InfiniteProfile):
            return INF_HEIGHT
        h = self._heights.get(spine)
        if h is not None:
            return h
        if isinstance(prof, PowerProfile):
            r2 = sum(c * c for c in spine) if isinstance(spine, tuple) \
                else spine * spine
            h = prof.height_from_r2(r2)
        elif isinstance(prof, TableProfile):
            h = int(prof.table.get(spine, 0))
        elif isinstance(prof, IidProfile):
            u = (counter_u64(prof.seed, _zigzag_key(spine), 0) >> 11) * 2.0**-53
            h = self._iid_cdf[-1][1]
            for acc, hh in self._iid_cdf:
                if u < acc:
                    h = hh
                    break
        else:
            raise TypeError(f"unknown profile {prof!r}")
        self._heights[spine] = h
        return h

    def _spine_of(self, v):
        return v[0] if self.spec.base_dim == 1 else (v[0], v[1])

    def neighbors(self, v) -> list:
        y = v[-1]
        spine = self._spine_of(v)
        f = self.height(spine)
        if not (self.two_sided or 0 <= y <= f):
            raise ValueError(f"vertex {v} above tooth height {f}")
        out = []
        if y == 0:
            if self.spec.base_dim == 1:
                x = v[0]
                out = [(x - 1, 0), (x + 1, 0)]
                if f >= 1:
                    out.append((x, 1))
                if self.two_sided:
                    out.append((x, -1))
            else:
                x1, x2 = v[0], v[1]
                out = [(x1 - 1, x2, 0), (x1 + 1, x2, 0),
                       (x1, x2 - 1, 0), (x1, x2 + 1, 0)]
                if f >= 1:
                    out.append((x1, x2, 1))
                if self.two_sided:
                    out.append((x1, x2, -1))
        elif self.two_sided:
            out = [v[:-1] + (y - 1,), v[:-1] + (y + 1,)]
        else:
            out = [v[:-1] + (y - 1,)]
            if y + 1 <= f:
                out.append(v[:-1] + (y + 1,))
        return sorted(out)

    def heights_table(self, x_radius: int, clamp: int) -> np.ndarray:
        """Heights over spine sites [-x_radius, x_radius], clamped for kernels.

        Only meaningful for base_dim 1.  The clamp is safe as long as the
        walk horizon is below it: a walker at height y can only test the
        tooth top when y equals the stored height, and y never exceeds the
        elapsed time.
        """
        if self.spec.base_dim != 1:
            raise ValueError("heights_table is for 1-d combs")
        xs = range(-x_radius, x_radius + 1)
        return np.array([min(self.height(x), clamp) for x in xs],
                        dtype=np.int64)


def _zigzag_key(spine) -> int:
    def zz(n: int) -> int:
        return (n << 1) ^ (n >> 63) if n >= 0 else ((-n) << 1) - 1

    if isinstance(spine, tuple):
        a, b = (zz(spine[0]), zz(spine[1]))
        return (a * 0x100000001B3 + b) & 0xFFFFFFFFFFFFFFFF
    return zz(spine)


def comb_oracle(spec: CombSpec) -> CombOracle:
    return CombOracle(spec)


def line_oracle() -> CombOracle:
    """The integer line as the degenerate comb with no teeth."""
    return CombOracle(CombSpec(profile=PowerProfile(C=0.0, alpha=0.0)))


# ---------------------------------------------------------------------------
# Spherically symmetric trees


class DepthCapExceededError(RuntimeError):
    """Neighbor query past the materialized branch levels."""


@dataclass(frozen=True)
class SphericalTreeSpec:
    """Binary spherically symmetric tree from segment lengths b_0, b_1, ...

    Either ``beta`` (segment lengths 2**(2**(beta*j))) or an explicit
    ``lengths`` sequence.  An explicit sequence implicitly ends with an
    infinite segment: branching stops after the last entry and the final
    segments continue forever.  Beta-form trees materialize ``depth_cap``
    branch levels and raise past them.
    """

    beta: Optional[float] = None
    lengths: Optional[tuple] = None
    depth_cap: int = 8

    def __post_init__(self):
        if (self.beta is None) == (self.lengths is None):
            raise ValueError("give exactly one of beta / lengths")
        if self.lengths is not None:
            if any((l != math.inf and (l < 1 or l != int(l)))
                   for l in self.lengths):
                raise ValueError("segment lengths must be integers >= 1")

    def segment_length(self, j: int):
        """b_j; math.inf for the implicit tail of an explicit sequence."""
        if self.lengths is not None:
            if j < len(self.lengths):
                return self.lengths[j]
            return math.inf
        if j >= self.depth_cap:
            raise DepthCapExceededError(
                f"segment level {j} past depth cap {self.depth_cap}")
        e = 2.0 ** (self.beta * j)
        if e == int(e):
            return 2 ** int(e)
        return max(1, round(2.0 ** e))

    def branch_distances(self, max_level: Optional[int] = None) -> list:
        """a_n = b_0 + ... + b_(n-1) for n = 1..; stops at the first inf."""
        out = []
        acc = 0
        n_levels = self.depth_cap if max_level is None else max_level
        for j in range(n_levels):
            b = self.segment_length(j)
            if b == math.inf:
                break
            acc += int(b)
            out.append(acc)
        return out

    def branch_count(self, dist: int) -> int:
        """Number of branch points strictly below distance ``dist``."""
        return sum(1 for a in self.branch_distances() if a < dist)

    def branches_at_level(self, dist: int) -> int:
        """Number of vertices at distance ``dist`` from the root."""
        return 1 << self.branch_count(dist)

    def sphere_size(self, dist: int) -> int:
        return 1 if dist == 0 else self.branches_at_level(dist)

    def segment_class(self, dist: int) -> int:
        """Index n of the segment family containing distance ``dist``."""
        return self.branch_count(dist)


class SphericalTreeOracle(NeighborOracle):
    """Lazy adjacency for the spherically symmetric tree.

    Vertex encoding: (branch_bits, offset) where branch_bits is the tuple of
    child choices made at each branch point passed, and offset the distance
    beyond the last branch point (the root is ((), 0); a branch point at
    a_(k+1) is (bits_k, b_k)).
    """

    family = "spherical_tree"

    def __init__(self, spec: SphericalTreeSpec):
        self.spec = spec
        self._a = spec.branch_distances()

    def depth(self, v) -> int:
        bits, off = v
        base = self._a[len(bits) - 1] if bits else 0
        return base + off

    def vertex_at(self, dist: int, bits: tuple = ()) -> tuple:
        """Canonical vertex at ``dist`` on the branch selected by ``bits``."""
        k = self.spec.branch_count(dist)
        if len(bits) < k:
            raise ValueError(f"need {k} branch choices for distance {dist}")
        base = self._a[k - 1] if k else 0
        return (tuple(bits[:k]), dist - base)

    def neighbors(self, v) -> list:
        bits, off = v
        k = len(bits)
        b_k = self.spec.segment_length(k)
        if not (1 <= off <= b_k if k else 0 <= off <= b_k):
            raise ValueError(f"vertex {v} off its segment (b_{k}={b_k})")
        out = []
        if off > 1 or k == 0:
            if off > 0:
                out.append((bits, off - 1))
        else:
            out.append((bits[:-1], self.spec.segment_length(k - 1)))
        if off < b_k:
            out.append((bits, off + 1))
        else:
            # at the branch point ending this segment; the probe raises past
            # the materialized depth cap
            self.spec.segment_length(k + 1)
            out.append((bits + (0,), 1))
            out.append((bits + (1,), 1))
        return sorted(out)


def spherical_tree_oracle(spec: SphericalTreeSpec) -> SphericalTreeOracle:
    return SphericalTreeOracle(spec)


def half_line_oracle() -> SphericalTreeOracle:
    """The nonnegative half line, as the tree with a single infinite segment."""
    return SphericalTreeOracle(SphericalTreeSpec(lengths=(math.inf,)))


# ---------------------------------------------------------------------------
# Offspring laws


@dataclass
class OffspringSpec:
    """Offspring law (p_k) with the derived quantities samplers need.

    Heavy-tailed laws keep a dense head in ``pmf`` plus block-compressed
    tail mass; the tail's moment contributions enter through tail_mean and
    tail_second.
    """

    pmf: np.ndarray
    name: str = "pmf"
    tail_mass: float = 0.0
    tail_mean: float = 0.0
    tail_second: float = 0.0
    sampler: str = "table"

    def __post_init__(self):
        self.pmf = np.asarray(self.pmf, dtype=float)
        if self.pmf.ndim != 1 or len(self.pmf) < 1 or (self.pmf < 0).any():
            raise ValueError("pmf must be a nonnegative vector")
        if abs(self.pmf.sum() + self.tail_mass - 1.0) > 1e-12:
            raise ValueError("pmf must sum to 1 within 1e-12")
        k = np.arange(len(self.pmf))
        self.mean = float((k * self.pmf).sum()) + self.tail_mean
        self.second_moment = float((k * k * self.pmf).sum()) \
            + self.tail_second
        self.variance = self.second_moment - self.mean**2
        self._cdf = np.cumsum(self.pmf)

    @property
    def critical(self) -> bool:
        return abs(self.mean - 1.0) <= 1e-12

    def require_critical(self):
        if not self.critical:
            raise ValueError(f"offspring law {self.name} has mean "
                             f"{self.mean}, not critical")

    def size_biased_pmf(self) -> np.ndarray:
        """The law k * p_k / mean; well-defined for critical laws."""
        k = np.arange(len(self.pmf))
        return k * self.pmf / self.mean

    def sample(self, rng: RngStream) -> int:
        u = rng.uniform()
        return int(np.searchsorted(self._cdf, u, side="right"))

    def sample_sum(self, n: int, gen: np.random.Generator) -> int:
        """Sum of n independent offspring counts (one generation step)."""
        if n == 0:
            return 0
        if self.sampler == "geometric":
            # sum of geometric(1/2) counts on {0,1,...} is neg. binomial
            return int(gen.negative_binomial(n, 0.5))
        return int(gen.choice(len(self.pmf), size=n, p=self.pmf).sum())


def geometric_offspring() -> OffspringSpec:
    """p_k = 2**-(k+1): the critical geometric law, variance 2."""
    k = np.arange(64)
    pmf = 0.5 ** (k + 1)
    pmf[-1] += 1.0 - pmf.sum()  # close the 2**-64 tail so moments stay exact
    return OffspringSpec(pmf, name="geometric(1/2)", sampler="geometric")


def deterministic_offspring(k: int = 1) -> OffspringSpec:
    pmf = np.zeros(k + 1)
    pmf[k] = 1.0
    return OffspringSpec(pmf, name=f"deterministic({k})")


def binomial_offspring(n: int = 2, p: float = 0.5) -> OffspringSpec:
    pmf = np.array([math.comb(n, k) * p**k * (1 - p) ** (n - k)
                    for k in range(n + 1)])
    pmf /= pmf.sum()
    return OffspringSpec(pmf, name=f"binomial({n},{p})")


def _power_sum_blocks(exponent: float, blocks) -> float:
    """sum of k**exponent over the block ranges, by midpoint integrals.

    Only feeds the reported (truncated) second moment of heavy-tailed laws;
    accuracy far exceeds any use of that diagnostic."""
    total = 0.0
    s1 = exponent + 1.0
    for lo, hi, _ in blocks:
        total += ((hi + 0.5) ** s1 - (lo - 0.5) ** s1) / s1
    return total


def power_tail_offspring(gamma: float, kmax: int = 10**9,
                         dense_cut: int = 1 << 16) -> OffspringSpec:
    """Critical law with p_k ~ k**-gamma: infinite variance for gamma < 3.

    p_k = c k**-gamma for 1 <= k <= kmax, p_0 chosen to make the mean exactly
    one.  Masses beyond ``dense_cut`` live in power-of-two blocks sampled by
    rejection, so kmax can be large without materializing the pmf.
    """
    if not 2.0 < gamma <= 3.0:
        raise ValueError("need 2 < gamma <= 3 for a critical heavy tail")
    s1 = float(hurwitz_zeta(gamma - 1, 1) - hurwitz_zeta(gamma - 1, kmax + 1))
    c = 1.0 / s1
    s0 = float(hurwitz_zeta(gamma, 1) - hurwitz_zeta(gamma, kmax + 1))
    p0 = 1.0 - c * s0
    cut = min(dense_cut, kmax)
    k = np.arange(1, cut + 1, dtype=float)
    dense = np.concatenate(([p0], c * k**-gamma))
    blocks = []
    lo = cut + 1
    while lo <= kmax:
        hi = min(2 * lo - 1, kmax)
        mass = c * float(hurwitz_zeta(gamma, lo) - hurwitz_zeta(gamma, hi + 1))
        blocks.append((lo, hi, mass))
        lo = hi + 1
    tail = sum(m for _, _, m in blocks)
    err = 1.0 - (dense.sum() + tail)
    dense[0] += err  # float closure, well under 1e-12
    tail_mean = c * float(hurwitz_zeta(gamma - 1, cut + 1)
                          - hurwitz_zeta(gamma - 1, kmax + 1))
    tail_second = c * float(hurwitz_zeta(gamma - 2, cut + 1)
                            - hurwitz_zeta(gamma - 2, kmax + 1)) \
        if gamma > 3 else c * _power_sum_blocks(2.0 - gamma, blocks)
    spec = OffspringSpec(dense, name=f"power_tail({gamma})", tail_mass=tail,
                         tail_mean=tail_mean, tail_second=tail_second)
    spec._tail_blocks = blocks
    orig_sample = OffspringSpec.sample

    def sample(rng: RngStream, _spec=spec, _orig=orig_sample):
        u = rng.uniform()
        if u < _spec._cdf[-1]:
            return int(np.searchsorted(_spec._cdf, u, side="right"))
        u -= _spec._cdf[-1]
        for lo_, hi_, mass_ in _spec._tail_blocks:
            if u < mass_:
                while True:  # exact in-block rejection against k**-gamma
                    kk = lo_ + rng.randint(hi_ - lo_ + 1)
                    if rng.uniform() <= (kk / lo_) ** (-gamma):
                        return kk
            u -= mass_
        return _spec._tail_blocks[-1][1]

    spec.sample = sample
    return spec


def survival_probability_exact(offspring: OffspringSpec, n: int,
                               digits: int = 60) -> float:
    """P(generation n is nonempty), by iterating the generating function.

    Exact rational iteration is hopeless here (denominator bit-length grows
    like degree**n), so the recursion runs at ``digits`` decimal digits; the
    map is a contraction toward 1, so the result is exact to far below every
    tolerance used anywhere in the package.
    """
    import mpmath

    with mpmath.workdps(digits):
        probs = [mpmath.mpf(p) for p in offspring.pmf]
        s = mpmath.mpf(0)
        for _ in range(n):
            s = mpmath.fsum(p * s**k for k, p in enumerate(probs) if p)
        return float(1 - s)


def survival_probability_geometric(n: int) -> Fraction:
    """Closed form for the critical geometric law: 1/(n+1)."""
    return Fraction(1, n + 1)


# ---------------------------------------------------------------------------
# Galton-Watson samplers


def sample_critical_gw(offspring: OffspringSpec, generations: int,
                       seed: int, stream_id: int = 0) -> np.ndarray:
    """Generation sizes Z_0..Z_n of one unconditioned branching run.

    Plain sampler: criticality is not enforced here (degenerate laws are
    legitimate edge cases); survival checks validate their own inputs.
    """
    sizes = np.zeros(generations + 1, dtype=np.int64)
    z = 1
    sizes[0] = z
    if offspring.tail_mass > 0:
        rng = RngStream(seed, stream_id)
        for t in range(1, generations + 1):
            z = sum(offspring.sample(rng) for _ in range(z))
            sizes[t] = z
            if z == 0:
                break
        return sizes
    gen = RngStream(seed, stream_id).numpy_generator()
    for t in range(1, generations + 1):
        z = offspring.sample_sum(z, gen)
        sizes[t] = z
        if z == 0:
            break
    return sizes


@dataclass
class KestenTree:
    """A critical tree conditioned to survive, grown along its backbone.

    ``graph`` is the sampled tree (vertex encodings are integer ids, root 0);
    backbone[i] is the id of the i-th backbone vertex; y_counts[i] the number
    of off-backbone children there; subtree metadata records how deep each
    hanging tree went and whether any was truncated by the caps.
    """

    graph: FiniteGraph
    backbone: list
    y_counts: np.ndarray
    subtree_depths: list
    truncated: bool


def sample_kesten_tree(offspring: OffspringSpec, height: int, seed: int,
                       stream_id: int = 0,
                       subtree_depth_cap: Optional[int] = None,
                       vertex_cap: int = DEFAULT_VERTEX_CAP) -> KestenTree:
    """Backbone of ``height`` edges; size-biased counts on the backbone, one
    uniform child continuing it, critical trees hanging off the rest."""
    offspring.require_critical()
    rng = RngStream(seed, stream_id)
    sb_cdf = np.cumsum(offspring.size_biased_pmf())
    sb_cdf[-1] = max(sb_cdf[-1], 1.0)

    parents = [-1]
    backbone = [0]
    y_counts = np.zeros(height, dtype=np.int64)
    subtree_depths: list[list[int]] = []
    truncated = False

    def new_vertex(parent: int) -> int:
        parents.append(parent)
        return len(parents) - 1

    for i in range(height):
        u = rng.uniform()
        x = int(np.searchsorted(sb_cdf, u, side="right"))
        x = max(x, 1)
        spine_slot = rng.randint(x)
        y_counts[i] = x - 1
        depths_here = []
        spine_child = None
        for j in range(x):
            child = new_vertex(backbone[i])
            if j == spine_slot:
                spine_child = child
            else:
                frontier = [child]
                depth = 0
                while frontier:
                    if (subtree_depth_cap is not None
                            and depth >= subtree_depth_cap):
                        truncated = truncated or bool(frontier)
                        break
                    nxt = []
                    for v in frontier:
                        for _ in range(offspring.sample(rng)):
                            nxt.append(new_vertex(v))
                            if len(parents) > vertex_cap:
                                raise RegionExplosionError(
                                    "kesten sample exceeded vertex cap")
                    frontier = nxt
                    if frontier:
                        depth += 1
                depths_here.append(depth)
        backbone.append(spine_child)
        subtree_depths.append(depths_here)

    n = len(parents)
    adj: list[list[int]] = [[] for _ in range(n)]
    for v in range(1, n):
        adj[parents[v]].append(v)
        adj[v].append(parents[v])
    indptr = np.zeros(n + 1, dtype=np.int64)
    for i in range(n):
        adj[i].sort()
        indptr[i + 1] = indptr[i] + len(adj[i])
    indices = np.fromiter((j for nbrs in adj for j in nbrs),
                          dtype=np.int64, count=indptr[-1])
    graph = FiniteGraph(vertices=list(range(n)), indptr=indptr,
                        indices=indices, interior=np.ones(n, dtype=bool),
                        degrees=np.diff(indptr).astype(np.int64), root=0,
                        family="kesten_tree",
                        label=f"kesten(h={height}, seed={seed}/{stream_id})",
                        meta={"parents": parents, "height": height})
    return KestenTree(graph=graph, backbone=backbone, y_counts=y_counts,
                      subtree_depths=subtree_depths, truncated=truncated)


# ---------------------------------------------------------------------------
# Percolation


class EmptyClusterError(RuntimeError):
    """No open edge in the box."""


def _box_index(L: int):
    side = 2 * L + 1

    def idx(x: int, y: int) -> int:
        return (x + L) * side + (y + L)

    return side, idx


def box_edges(L: int) -> np.ndarray:
    """All nearest-neighbor edges of the (2L+1)^2 box, fixed order."""
    side, idx = _box_index(L)
    edges = []
    for x in range(-L, L + 1):
        for y in range(-L, L + 1):
            if x < L:
                edges.append((idx(x, y), idx(x + 1, y)))
            if y < L:
                edges.append((idx(x, y), idx(x, y + 1)))
    return np.array(edges, dtype=np.int64)


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, a: int) -> int:
        p = self.parent
        while p[a] != a:
            p[a] = p[p[a]]
            a = p[a]
        return a

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]


def sample_percolation_cluster(p: float, L: int, seed: int,
                               stream_id: int = 0) -> FiniteGraph:
    """Largest open cluster of bond percolation on the box, as a FiniteGraph.

    Edges open independently with probability p; the largest cluster is
    found by union-find, rooted at its vertex nearest the origin (ties by
    lexicographic coordinate order), and indexed in BFS order from there.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must be a probability")
    side, idx = _box_index(L)
    edges = box_edges(L)
    gen = RngStream(seed, stream_id).numpy_generator()
    open_mask = gen.random(len(edges)) < p
    open_edges = edges[open_mask]
    if len(open_edges) == 0:
        raise EmptyClusterError(f"no open edge at p={p}, L={L}")

    uf = _UnionFind(side * side)
    for a, b in open_edges:
        uf.union(int(a), int(b))
    roots = np.fromiter((uf.find(i) for i in range(side * side)),
                        dtype=np.int64, count=side * side)
    counts = np.bincount(roots, minlength=side * side)
    best = counts.max()
    candidates = np.nonzero(counts == best)[0]
    # deterministic tie break: cluster containing the smallest vertex index
    label = min(int(c) for c in candidates)
    members = np.nonzero(roots == roots[label])[0]

    def coords(i: int):
        return i // side - L, i % side - L

    root_site = min(members,
                    key=lambda i: (coords(i)[0] ** 2 + coords(i)[1] ** 2,
                                   coords(i)))

    adj: dict[int, list[int]] = {int(m): [] for m in members}
    for a, b in open_edges:
        a, b = int(a), int(b)
        if a in adj and b in adj:
            adj[a].append(b)
            adj[b].append(a)

    order = [int(root_site)]
    pos = {int(root_site): 0}
    head = 0
    while head < len(order):
        v = order[head]
        for w in sorted(adj[v], key=coords):
            if w not in pos:
                pos[w] = len(order)
                order.append(w)
        head += 1

    n = len(order)
    nbr_lists = [sorted(pos[w] for w in adj[v]) for v in order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    for i in range(n):
        indptr[i + 1] = indptr[i] + len(nbr_lists[i])
    indices = np.fromiter((j for nbrs in nbr_lists for j in nbrs),
                          dtype=np.int64, count=indptr[-1])
    verts = [coords(v) for v in order]
    on_box_edge = np.array([max(abs(x), abs(y)) == L for x, y in verts])
    return FiniteGraph(vertices=verts, indptr=indptr, indices=indices,
                       interior=np.ones(n, dtype=bool),
                       degrees=np.diff(indptr).astype(np.int64), root=0,
                       family="percolation_cluster",
                       label=f"perc(p={p}, L={L}, seed={seed}/{stream_id})",
                       meta={"p": p, "L": L,
                             "density": n / side**2,
                             "on_box_edge": on_box_edge})


def percolation_components_bfs(L: int, open_edges: np.ndarray) -> np.ndarray:
    """Independent labeling of open-edge components (test oracle for the
    union-find path)."""
    side = 2 * L + 1
    adj: list[list[int]] = [[] for _ in range(side * side)]
    for a, b in open_edges:
        adj[int(a)].append(int(b))
        adj[int(b)].append(int(a))
    label = -np.ones(side * side, dtype=np.int64)
    cur = 0
    for s in range(side * side):
        if label[s] >= 0 or not adj[s]:
            continue
        stack = [s]
        label[s] = cur
        while stack:
            v = stack.pop()
            for w in adj[v]:
                if label[w] < 0:
                    label[w] = cur
                    stack.append(w)
        cur += 1
    return label


# ---------------------------------------------------------------------------
# Uniform spanning trees (loop-erased random walk)


def wilson_spanning_tree(neighbor_lists: Sequence[Sequence[int]], root: int,
                         rng: RngStream) -> np.ndarray:
    """Uniform spanning tree of a finite connected graph.

    Runs loop-erased random walks from each unvisited vertex to the current
    tree; returns the parent array (parent[root] = -1).
    """
    n = len(neighbor_lists)
    parent = np.full(n, -2, dtype=np.int64)
    parent[root] = -1
    for start in range(n):
        if parent[start] != -2:
            continue
        # random successor assignment; cycles erased by overwriting
        nxt: dict[int, int] = {}
        v = start
        while parent[v] == -2:
            nbrs = neighbor_lists[v]
            w = nbrs[rng.randint(len(nbrs))]
            nxt[v] = w
            v = w
        v = start
        while parent[v] == -2:
            parent[v] = nxt[v]
            v = nxt[v]
    return parent


def grid_neighbor_lists(L: int) -> list:
    side, idx = _box_index(L)
    out = []
    for x in range(-L, L + 1):
        for y in range(-L, L + 1):
            nbrs = []
            for dx, dy in ((-1, 0), (0, -1), (0, 1), (1, 0)):
                if abs(x + dx) <= L and abs(y + dy) <= L:
                    nbrs.append(idx(x + dx, y + dy))
            out.append(nbrs)
    return out


def sample_ust(L: int, seed: int, stream_id: int = 0) -> FiniteGraph:
    """Uniform spanning tree of the (2L+1)^2 box, rooted at the origin."""
    if L < 1:
        raise ValueError("L must be >= 1")
    side, idx = _box_index(L)
    rng = RngStream(seed, stream_id)
    parent = wilson_spanning_tree(grid_neighbor_lists(L), idx(0, 0), rng)

    n = side * side
    adj: list[list[int]] = [[] for _ in range(n)]
    for v in range(n):
        if parent[v] >= 0:
            adj[v].append(int(parent[v]))
            adj[int(parent[v])].append(v)

    def coords(i: int):
        return i // side - L, i % side - L

    order = [idx(0, 0)]
    pos = {idx(0, 0): 0}
    head = 0
    while head < len(order):
        v = order[head]
        for w in sorted(adj[v], key=coords):
            if w not in pos:
                pos[w] = len(order)
                order.append(w)
        head += 1
    nbr_lists = [sorted(pos[w] for w in adj[v]) for v in order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    for i in range(n):
        indptr[i + 1] = indptr[i] + len(nbr_lists[i])
    indices = np.fromiter((j for nbrs in nbr_lists for j in nbrs),
                          dtype=np.int64, count=indptr[-1])
    return FiniteGraph(vertices=[coords(v) for v in order], indptr=indptr,
                       indices=indices, interior=np.ones(n, dtype=bool),
                       degrees=np.diff(indptr).astype(np.int64), root=0,
                       family="ust",
                       label=f"ust(L={L}, seed={seed}/{stream_id})",
                       meta={"L": L})


def spanning_tree_count(neighbor_lists: Sequence[Sequence[int]]) -> int:
    """Number of spanning trees, by exact rational elimination on the
    reduced Laplacian (the matrix-tree determinant)."""
    n = len(neighbor_lists)
    m = [[Fraction(0)] * (n - 1) for _ in range(n - 1)]
    for v in range(1, n):
        m[v - 1][v - 1] = Fraction(len(neighbor_lists[v]))
        for w in neighbor_lists[v]:
            if w >= 1:
                m[v - 1][w - 1] -= 1
    det = Fraction(1)
    for col in range(n - 1):
        piv = next((r for r in range(col, n - 1) if m[r][col] != 0), None)
        if piv is None:
            return 0
        if piv != col:
            m[col], m[piv] = m[piv], m[col]
            det = -det
        det *= m[col][col]
        inv = 1 / m[col][col]
        for r in range(col + 1, n - 1):
            factor = m[r][col] * inv
            if factor:
                for c in range(col, n - 1):
                    m[r][c] -= factor * m[col][c]
    assert det.denominator == 1
    return int(abs(det))
