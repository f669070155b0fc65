"""Random-walk engines and collision counters.

Conventions shared by the pure-Python walkers here and the compiled kernels
in _kernels:

* one uniform draw per walker per time step, even when the move is forced;
* the step goes to sorted_neighbors[floor(u * degree)];
* collisions are counted from t = 0 inclusive;
* an edge collision at t means X_t = Y_t and X_(t+1) = Y_(t+1) (same ordered
  traversal; the undirected-crossing variant is behind a flag);
* killed walkers freeze on the boundary vertex they first hit, and frozen
  coincidences are never counted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .families import CombOracle, SphericalTreeSpec
from .graphs import FiniteGraph, NeighborOracle
from .potential import (PairExpectation, exact_pair_expectation,
                        green_root_value)
from .rng import RngStream, stream_key

__all__ = [
    "CollisionRecord", "walk", "pair_collisions", "killed_pair_collisions",
    "triple_collisions", "exact_pair_expectation", "PairExpectation",
    "bd_chain_densities", "bd_up_probabilities", "tree_reduction_check",
    "bd_monotone_coupling_check",
    "first_hit_zero_pmf", "return_probability_exact", "pair_keys",
    "comb_pair_batch", "comb_triple_batch", "comb_positions_batch",
    "csr_pair_batch", "tree_pair_batch", "green_root_value",
]


@dataclass
class CollisionRecord:
    """Outcome of one paired (or tripled) walk run."""

    z: int
    z_edge: int = 0
    horizon: int = 0
    last_collision_time: int = -1
    collision_times: Optional[list] = None
    exit_times: Optional[tuple] = None
    z_edge_undirected: Optional[int] = None
    triple: Optional[int] = None

    def __post_init__(self):
        assert self.z >= self.z_edge >= 0
        if self.collision_times is not None:
            assert len(self.collision_times) == self.z
            assert all(s < t for s, t in
                       zip(self.collision_times, self.collision_times[1:]))


def _step(oracle: NeighborOracle, v, rng: RngStream):
    nbrs = oracle.neighbors(v)
    j = min(int(rng.uniform() * len(nbrs)), len(nbrs) - 1)
    return nbrs[j]


def walk(oracle: NeighborOracle, start, T: int, rng: RngStream) -> list:
    """Simple random walk trajectory (X_0, ..., X_T)."""
    if T < 0:
        raise ValueError("horizon must be >= 0")
    traj = [start]
    v = start
    for _ in range(T):
        v = _step(oracle, v, rng)
        traj.append(v)
    return traj


def pair_collisions(oracle: NeighborOracle, a, b, T: int,
                    rng_pair: Sequence[RngStream],
                    record_times: bool = False,
                    count_undirected: bool = False) -> CollisionRecord:
    """Collision counts of two independent walks up to horizon T."""
    rng_a, rng_b = rng_pair
    xa, xb = a, b
    z = z_edge = 0
    z_undir = 0
    last = -1
    times = [] if record_times else None
    for t in range(T + 1):
        hit = xa == xb
        if hit:
            z += 1
            last = t
            if times is not None:
                times.append(t)
        if t == T:
            break  # edge counts cover the T steps taken
        na = _step(oracle, xa, rng_a)
        nb = _step(oracle, xb, rng_b)
        if hit and na == nb:
            z_edge += 1
        if count_undirected and {xa, na} == {xb, nb} and na != xa:
            z_undir += 1
        xa, xb = na, nb
    return CollisionRecord(z=z, z_edge=z_edge, horizon=T,
                           last_collision_time=last, collision_times=times,
                           z_edge_undirected=z_undir if count_undirected
                           else None)


def killed_pair_collisions(g: FiniteGraph, o, T: int,
                           rng_pair: Sequence[RngStream],
                           record_times: bool = False) -> CollisionRecord:
    """Two walks on a truncation, absorbed on the boundary.

    Interior coincidences only; the edge count allows the joint step onto a
    common boundary vertex (the killing happens on arrival).
    """
    from .potential import resolve_vertices
    start = g.root if o is None else resolve_vertices(g, [o])[0]
    if not g.interior[start]:
        raise ValueError("origin must be interior")
    rng_a, rng_b = rng_pair
    va = vb = start
    z = z_edge = 0
    last = -1
    exit_a = exit_b = -1
    times = [] if record_times else None
    for t in range(T + 1):
        dead_a = not g.interior[va]
        dead_b = not g.interior[vb]
        if dead_a and exit_a < 0:
            exit_a = t
        if dead_b and exit_b < 0:
            exit_b = t
        hit = (va == vb) and not dead_a
        if hit:
            z += 1
            last = t
            if times is not None:
                times.append(t)
        if (dead_a and dead_b) or t == T:
            break
        na, nb = va, vb
        if not dead_a:
            nbrs = g.neighbors_of(va)
            j = min(int(rng_a.uniform() * len(nbrs)), len(nbrs) - 1)
            na = int(nbrs[j])
        else:
            rng_a.uniform()
        if not dead_b:
            nbrs = g.neighbors_of(vb)
            j = min(int(rng_b.uniform() * len(nbrs)), len(nbrs) - 1)
            nb = int(nbrs[j])
        else:
            rng_b.uniform()
        if hit and na == nb:
            z_edge += 1
        va, vb = na, nb
    return CollisionRecord(z=z, z_edge=z_edge, horizon=T,
                           last_collision_time=last, collision_times=times,
                           exit_times=(exit_a, exit_b))


def triple_collisions(oracle: NeighborOracle, o, T: int,
                      rng_triple: Sequence[RngStream]) -> CollisionRecord:
    """Count times when three independent walks coincide."""
    walks = [o, o, o]
    rngs = list(rng_triple)
    z3 = 0
    last = -1
    for t in range(T + 1):
        if walks[0] == walks[1] == walks[2]:
            z3 += 1
            last = t
        if t == T:
            break
        walks = [_step(oracle, v, r) for v, r in zip(walks, rngs)]
    return CollisionRecord(z=z3, z_edge=0, horizon=T,
                           last_collision_time=last, triple=z3)


# ---------------------------------------------------------------------------
# Birth and death reduction for spherically symmetric trees


def bd_up_probabilities(spec: SphericalTreeSpec, x_max: int) -> np.ndarray:
    """Up-step probabilities of the distance chain on 0..x_max.

    Reflecting at 0; up with probability 2/3 at each branch-point distance
    (degree 3 there), 1/2 elsewhere.
    """
    a = spec.branch_distances()
    if spec.beta is not None and a and x_max > a[-1]:
        from .families import DepthCapExceededError
        raise DepthCapExceededError(
            f"distance chain to {x_max} exceeds materialized range {a[-1]}")
    up = np.full(x_max + 1, 0.5)
    up[0] = 1.0
    for d in a:
        if d <= x_max:
            up[d] = 2.0 / 3.0
    return up


def bd_chain_densities(spec: SphericalTreeSpec, t_max: int) -> np.ndarray:
    """P[t, x] = probability the distance chain started at 0 sits at x after
    t steps, for t <= t_max (state space truncated at the reachable range)."""
    x_max = t_max + 1
    up = bd_up_probabilities(spec, x_max)
    P = np.zeros((t_max + 1, x_max + 1))
    P[0, 0] = 1.0
    for t in range(t_max):
        cur = P[t]
        nxt = P[t + 1]
        nxt[1:] += cur[:-1] * up[:-1]
        nxt[:-1] += cur[1:] * (1.0 - up[1:])
    return P


def bd_monotone_coupling_check(spec: SphericalTreeSpec, t_max: int,
                               x_max: Optional[int] = None,
                               tol: float = 1e-14) -> tuple[int, int]:
    """Violation counts of the distance-chain domination inequalities.

    For same-parity 1 <= y < x the chain mass satisfies
    p_t(0,x) <= (pi(x)/pi(y)) p_t(0,y), with pi the invariant weight
    (level count times level degree); crossing one branch point doubles the
    weight.  Returns violations of (exact-weight form, factor-2 form); the
    factor-2 form applies to non-branch-point endpoints with at most one
    branch distance in [y, x).
    """
    x_max = x_max or min(t_max + 1, 64)
    P = bd_chain_densities(spec, t_max)
    a = set(spec.branch_distances())

    def deg(k: int) -> int:
        return 1 if k == 0 else (3 if k in a else 2)

    def weight(k: int) -> float:
        return spec.sphere_size(k) * deg(k)

    viol_exact = viol_two = 0
    for t in range(t_max + 1):
        for y in range(1, x_max - 1):
            for x in range(y + 2, x_max + 1, 2):
                if P[t, x] > weight(x) / weight(y) * P[t, y] + tol:
                    viol_exact += 1
                crossings = sum(1 for d in a if y <= d < x)
                if (y not in a and x not in a and crossings <= 1
                        and P[t, x] > 2.0 * P[t, y] + tol):
                    viol_two += 1
    return viol_exact, viol_two


def tree_reduction_check(spec: SphericalTreeSpec, t_max: int):
    """Tree transition probabilities versus the projected distance chain.

    Returns (max absolute error, number of vertices compared): for every
    vertex x within reach, P_o(X_t = x) should equal the distance-chain mass
    at |x| split evenly over the 2^(branch count) vertices of that level.
    """
    from .families import spherical_tree_oracle
    from .graphs import extract_ball
    from .potential import killed_densities

    oracle = spherical_tree_oracle(spec)
    g = extract_ball(oracle, ((), 0), t_max + 2)
    trace = killed_densities(g, ((), 0), t_max=t_max, store_vectors=True)
    bd = bd_chain_densities(spec, t_max)
    interior = g.interior_indices()
    worst = 0.0
    for col, vi in enumerate(interior):
        v = g.vertices[int(vi)]
        d = oracle.depth(v)
        share = 2.0 ** -spec.branch_count(d)
        for t in range(t_max + 1):
            expected = share * bd[t, d] if d < bd.shape[1] else 0.0
            err = abs(trace.vectors[t, col] - expected)
            if err > worst:
                worst = err
    return worst, len(interior)


# ---------------------------------------------------------------------------
# Ballot identities for the simple walk on the integers (exact arithmetic)


def first_hit_zero_pmf(h: int, s_max: int) -> dict[int, Fraction]:
    """P_h(T_0 = s) for the simple random walk from h > 0, exactly.

    Dynamic program over the walk killed at 0; only odd/even-compatible s
    carry mass.
    """
    if h < 1:
        raise ValueError("start must be positive")
    half = Fraction(1, 2)
    mass = {h: Fraction(1)}
    out: dict[int, Fraction] = {}
    for s in range(1, s_max + 1):
        out[s] = mass.get(1, Fraction(0)) * half
        nxt: dict[int, Fraction] = {}
        for x, p in mass.items():
            if x > 1:
                nxt[x - 1] = nxt.get(x - 1, Fraction(0)) + p * half
            nxt[x + 1] = nxt.get(x + 1, Fraction(0)) + p * half
        mass = nxt
    return out


def return_probability_exact(h: int, s: int) -> Fraction:
    """P_h(S_s = 0) for the free simple random walk, exactly."""
    if s < h or (s - h) % 2:
        return Fraction(0)
    return Fraction(math.comb(s, (s + h) // 2), 2**s)


# ---------------------------------------------------------------------------
# Batch wrappers around the compiled kernels


def pair_keys(master_seed: int, n: int, walkers: int = 2,
              stream_offset: int = 0) -> np.ndarray:
    """Per-replicate, per-walker kernel keys: replicate i, walker w uses
    RngStream(master_seed, i + stream_offset).substream(w)."""
    keys = np.empty((n, walkers), dtype=np.uint64)
    for i in range(n):
        base = stream_key(master_seed, i + stream_offset)
        for w in range(walkers):
            keys[i, w] = stream_key(base, w)
    return keys


def _heights_for(oracle: CombOracle, horizon: int) -> tuple[np.ndarray, int]:
    radius = horizon + 2
    table = oracle.heights_table(radius, clamp=horizon + 2)
    return table, radius


def comb_pair_batch(oracle: CombOracle, n_reps: int, horizons: Sequence[int],
                    master_seed: int, start_a=(0, 0), start_b=(0, 0),
                    band: Optional[tuple] = None,
                    stream_offset: int = 0) -> dict:
    """n_reps independent walk pairs on a 1-d comb; counts at each horizon.

    band = (x, y_lo, y_hi) additionally reports the first collision inside
    that tooth segment.
    """
    horizons = np.asarray(sorted(horizons), dtype=np.int64)
    heights, off = _heights_for(oracle, int(horizons[-1]))
    keys = pair_keys(master_seed, n_reps, 2, stream_offset)
    bx, blo, bhi = band if band is not None else (off + 10, 0, -1)
    z, zt, last, band_t = _kernels.comb_pair_kernel(
        heights, off, keys, horizons,
        np.int64(start_a[0]), np.int64(start_a[1]),
        np.int64(start_b[0]), np.int64(start_b[1]),
        oracle.two_sided, np.int64(bx), np.int64(blo), np.int64(bhi))
    return {"horizons": horizons, "z": z, "z_edge": zt,
            "last_collision": last, "band_time": band_t}


def comb_triple_batch(oracle: CombOracle, n_reps: int,
                      horizons: Sequence[int], master_seed: int,
                      stream_offset: int = 0) -> dict:
    horizons = np.asarray(sorted(horizons), dtype=np.int64)
    heights, off = _heights_for(oracle, int(horizons[-1]))
    keys = pair_keys(master_seed, n_reps, 3, stream_offset)
    z3 = _kernels.comb_triple_kernel(heights, off, keys, horizons,
                                     oracle.two_sided)
    return {"horizons": horizons, "z3": z3}


def comb_positions_batch(oracle: CombOracle, n_reps: int,
                         times: Sequence[int], master_seed: int) -> dict:
    times = np.asarray(sorted(times), dtype=np.int64)
    heights, off = _heights_for(oracle, int(times[-1]))
    keys = np.empty(n_reps, dtype=np.uint64)
    for i in range(n_reps):
        keys[i] = stream_key(stream_key(master_seed, i), 0)
    xs, ys = _kernels.comb_positions_kernel(heights, off, keys, times,
                                            oracle.two_sided)
    return {"times": times, "x": xs, "y": ys}


def csr_pair_batch(g: FiniteGraph, n_reps: int, horizons: Sequence[int],
                   master_seed: int, start=None, killed: bool = True,
                   flagged: Optional[np.ndarray] = None,
                   stream_offset: int = 0) -> dict:
    """Walk pairs on an explicit truncation, absorbed on the boundary when
    killed=True; both walkers start at ``start`` (default: the root)."""
    from .potential import resolve_vertices
    s = g.root if start is None else resolve_vertices(g, [start])[0]
    horizons = np.asarray(sorted(horizons), dtype=np.int64)
    keys = pair_keys(master_seed, n_reps, 2, stream_offset)
    absorbing = (~g.interior if killed
                 else np.zeros(g.n_vertices, dtype=bool)).astype(np.uint8)
    flags = (flagged if flagged is not None
             else np.zeros(g.n_vertices, dtype=bool)).astype(np.uint8)
    indptr = g.indptr.astype(np.int64)
    indices = g.indices.astype(np.int64)
    z, zt, exit_t, last, touches = _kernels.csr_pair_kernel(
        indptr, indices, absorbing, keys, horizons,
        np.int64(s), np.int64(s), flags)
    return {"horizons": horizons, "z": z, "z_edge": zt, "exit_times": exit_t,
            "last_collision": last, "flag_touches": touches}


def tree_pair_batch(spec: SphericalTreeSpec, n_reps: int, t_window: tuple,
                    seg_window: tuple, master_seed: int,
                    stream_offset: int = 0) -> dict:
    """Walk pairs on a spherically symmetric tree; collisions with distance
    in seg_window during t_window."""
    t_lo, t_hi = (int(t) for t in t_window)
    a = spec.branch_distances()
    if len(a) > 60:
        raise ValueError("too many branch levels for the bit-path encoding")
    max_dist = t_hi + 1
    if spec.beta is not None and a and max_dist > a[-1]:
        from .families import DepthCapExceededError
        raise DepthCapExceededError("walk horizon exceeds materialized tree")
    branch_at = np.zeros(max_dist + 2, dtype=np.uint8)
    for d in a:
        if d <= max_dist + 1:
            branch_at[d] = 1
    keys = pair_keys(master_seed, n_reps, 2, stream_offset)
    z, first, overflow = _kernels.tree_pair_kernel(
        branch_at, keys, np.int64(t_lo), np.int64(t_hi),
        np.int64(seg_window[0]), np.int64(seg_window[1]), np.int64(max_dist))
    return {"z": z, "first_time": first, "overflow": overflow}
