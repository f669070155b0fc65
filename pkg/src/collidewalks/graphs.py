"""Graph core: lazy adjacency oracles, finite truncations, region predicates.

Infinite graphs are represented by a NeighborOracle (a deterministic local
adjacency function over canonical vertex encodings).  All exact linear
algebra runs on FiniteGraph truncations, which materialize an interior
region together with its absorbing boundary (every non-member vertex
adjacent to a member).  Interior vertices keep their full oracle degree;
boundary vertices are absorbing and their truncated degree is never used by
any kernel computation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

DEFAULT_VERTEX_CAP = 5_000_000


class RegionExplosionError(RuntimeError):
    """Raised when region discovery exceeds the vertex cap."""


class DisconnectedRootError(ValueError):
    """Raised when the region predicate rejects its own root."""


class NeighborOracle:
    """Deterministic local adjacency for a (possibly infinite) simple graph.

    Subclasses implement ``neighbors`` returning a list sorted by encoding.
    Repeated calls with the same vertex must return the identical list;
    adjacency must be symmetric with no loops or duplicates.
    """

    family = "generic"

    def neighbors(self, v) -> list:
        raise NotImplementedError

    def degree(self, v) -> int:
        return len(self.neighbors(v))


class ExplicitOracle(NeighborOracle):
    """Adjacency oracle over an explicit finite vertex/edge table.

    Used to treat sampled graphs (percolation clusters, random trees) as
    hosts for further region extraction.
    """

    def __init__(self, adjacency: dict, family: str = "explicit"):
        self._adj = adjacency
        self.family = family

    def neighbors(self, v) -> list:
        return self._adj[v]


@dataclass(frozen=True)
class FiniteRegion:
    """A finite vertex set given by a membership predicate and a root."""

    member: Callable[[object], bool]
    root: object
    label: str = ""


def ball_region(oracle: NeighborOracle, o, r: int,
                cap: int = DEFAULT_VERTEX_CAP) -> FiniteRegion:
    """Region of all vertices within graph distance r of o (BFS)."""
    if r < 0:
        raise ValueError("ball radius must be >= 0")
    dist = {o: 0}
    frontier = [o]
    d = 0
    while frontier and d < r:
        d += 1
        nxt = []
        for v in frontier:
            for w in oracle.neighbors(v):
                if w not in dist:
                    dist[w] = d
                    nxt.append(w)
                    if len(dist) > cap:
                        raise RegionExplosionError(
                            f"ball({o}, {r}) exceeded cap {cap}")
        frontier = nxt
    members = frozenset(dist)
    return FiniteRegion(member=members.__contains__, root=o,
                        label=f"ball(o={o}, r={r})")


@dataclass
class FiniteGraph:
    """Explicit truncation: interior region plus marked absorbing boundary.

    ``vertices`` lists encodings in BFS discovery order from the root, which
    fixes a canonical indexing.  ``indptr``/``indices`` hold CSR adjacency
    over those indices (interior rows are complete; boundary rows only list
    the interior neighbors that discovered them).  ``interior`` marks region
    members; ``degrees`` holds full oracle degrees for interior vertices and
    the truncated adjacency count for boundary ones.
    """

    vertices: list
    indptr: np.ndarray
    indices: np.ndarray
    interior: np.ndarray
    degrees: np.ndarray
    root: int
    family: str = "generic"
    label: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.index = {v: i for i, v in enumerate(self.vertices)}

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_interior(self) -> int:
        return int(self.interior.sum())

    def neighbors_of(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def edge_list(self) -> list[tuple[int, int]]:
        """Undirected edges as sorted (i, j) pairs with i < j, lexicographic."""
        edges = set()
        for i in range(self.n_vertices):
            for j in self.neighbors_of(i):
                edges.add((i, int(j)) if i < j else (int(j), i))
        return sorted(edges)

    def n_edges(self) -> int:
        return len(self.edge_list())

    def is_tree(self) -> bool:
        return self.n_edges() == self.n_vertices - 1

    def interior_indices(self) -> np.ndarray:
        return np.nonzero(self.interior)[0]

    def boundary_indices(self) -> np.ndarray:
        return np.nonzero(~self.interior)[0]

    def as_oracle(self, family: Optional[str] = None) -> ExplicitOracle:
        """Expose this finite graph as an adjacency oracle over encodings."""
        adj = {}
        for i, v in enumerate(self.vertices):
            adj[v] = sorted(self.vertices[j] for j in self.neighbors_of(i))
        return ExplicitOracle(adj, family or self.family)

    def to_json(self) -> str:
        payload = {
            "family": self.family,
            "label": self.label,
            "vertices": [_encode(v) for v in self.vertices],
            "edges": [list(e) for e in self.edge_list()],
            "interior": [bool(b) for b in self.interior],
            "root": int(self.root),
        }
        return json.dumps(payload)

    @staticmethod
    def from_json(text: str) -> "FiniteGraph":
        payload = json.loads(text)
        vertices = [_decode(v) for v in payload["vertices"]]
        n = len(vertices)
        adj: list[list[int]] = [[] for _ in range(n)]
        for i, j in payload["edges"]:
            adj[i].append(j)
            adj[j].append(i)
        indptr = np.zeros(n + 1, dtype=np.int64)
        for i in range(n):
            adj[i].sort()
            indptr[i + 1] = indptr[i] + len(adj[i])
        indices = np.fromiter(
            (j for nbrs in adj for j in nbrs), dtype=np.int64, count=indptr[-1])
        interior = np.array(payload["interior"], dtype=bool)
        degrees = np.diff(indptr).astype(np.int64)
        return FiniteGraph(vertices=vertices, indptr=indptr, indices=indices,
                           interior=interior, degrees=degrees,
                           root=int(payload["root"]),
                           family=payload.get("family", "generic"),
                           label=payload.get("label", ""))


def _encode(v):
    if isinstance(v, tuple):
        return [_encode(x) for x in v]
    return v


def _decode(v):
    if isinstance(v, list):
        return tuple(_decode(x) for x in v)
    return v


def extract_region(oracle: NeighborOracle, region: FiniteRegion,
                   cap: int = DEFAULT_VERTEX_CAP) -> FiniteGraph:
    """Materialize a region and its absorbing boundary as a FiniteGraph.

    Interior = member vertices reachable from the root through members;
    boundary = every non-member adjacent to an interior vertex.  Breadth
    first discovery order (boundary vertices discovered inline) fixes the
    indexing, so repeated extraction is byte-identical.
    """
    if not region.member(region.root):
        raise DisconnectedRootError(f"root {region.root} not in region")

    order = [region.root]
    idx = {region.root: 0}
    is_int = [True]
    neigh: list[Optional[list]] = [None]
    head = 0
    while head < len(order):
        v = order[head]
        if is_int[head]:
            nbrs = oracle.neighbors(v)
            neigh[head] = nbrs
            for w in nbrs:
                if w not in idx:
                    idx[w] = len(order)
                    order.append(w)
                    is_int.append(bool(region.member(w)))
                    neigh.append(None)
                    if len(order) > cap:
                        raise RegionExplosionError(
                            f"region {region.label!r} exceeded cap {cap}")
        head += 1

    n = len(order)
    interior = np.array(is_int, dtype=bool)
    # Boundary rows keep only the edges back into the interior.
    adj: list[list[int]] = [[] for _ in range(n)]
    for i in range(n):
        if interior[i]:
            adj[i] = [idx[w] for w in neigh[i]]
    for i in range(n):
        if interior[i]:
            for j in adj[i]:
                if not interior[j]:
                    adj[j].append(i)
    degrees = np.zeros(n, dtype=np.int64)
    indptr = np.zeros(n + 1, dtype=np.int64)
    for i in range(n):
        if not interior[i]:
            adj[i].sort()
        degrees[i] = len(adj[i])
        indptr[i + 1] = indptr[i] + len(adj[i])
    indices = np.fromiter((j for nbrs in adj for j in nbrs),
                          dtype=np.int64, count=indptr[-1])
    return FiniteGraph(vertices=order, indptr=indptr, indices=indices,
                       interior=interior, degrees=degrees, root=0,
                       family=oracle.family, label=region.label)


def extract_ball(oracle: NeighborOracle, o, r: int,
                 cap: int = DEFAULT_VERTEX_CAP) -> FiniteGraph:
    """Convenience: extract_region(ball_region(o, r))."""
    return extract_region(oracle, ball_region(oracle, o, r, cap=cap), cap=cap)


def check_oracle_invariants(oracle: NeighborOracle, probes: Iterable,
                            rng=None) -> None:
    """Assert symmetry, determinism, simplicity on the probe vertices."""
    for v in probes:
        nbrs = oracle.neighbors(v)
        assert nbrs == oracle.neighbors(v), f"non-deterministic at {v}"
        assert len(set(nbrs)) == len(nbrs), f"duplicate neighbors at {v}"
        assert v not in nbrs, f"self-loop at {v}"
        assert oracle.degree(v) == len(nbrs)
        for w in nbrs:
            assert v in oracle.neighbors(w), f"asymmetric edge {v} ~ {w}"
