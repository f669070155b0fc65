"""Electrical-network and killed-kernel computations on finite truncations.

Conventions (unit conductance per edge throughout):

* transition density q_t(x, y) = P_x(X_t = y) / deg(y), symmetric;
* killed Green kernel g_B(x, y) = sum_t q_t^B(x, y) = (D - A)^-1 restricted
  to interior vertices, with D the full graph degrees;
* g_B(x, x) equals the effective resistance from x to the complement of the
  region, which this module computes by an independent Dirichlet solve.

All diagonal Green values are resistances to the absorbing boundary, so the
full diagonal is computed by peeling pendant dead-ends (they add their
distance to their anchor) and inverting only the 2-core, or by a linear-time
two-pass recursion when the truncation is a tree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .families import SphericalTreeSpec
from .graphs import FiniteGraph

DIRECT_SOLVE_LIMIT = 200_000
CG_TOL = 1e-10
CG_MAXITER = 100_000
DENSE_DIAG_LIMIT = 1500


class SolverError(RuntimeError):
    """Linear solve failed to reach the required residual."""

    def __init__(self, msg: str, residual: float = math.nan):
        super().__init__(msg)
        self.residual = residual


class SingularSystemError(SolverError):
    pass


class ResidualMassError(RuntimeError):
    """Killed-walk horizon too short: too much surviving mass left."""

    def __init__(self, msg: str, mass: float):
        super().__init__(msg)
        self.mass = mass


def resolve_vertices(g: FiniteGraph, items) -> list[int]:
    out = []
    for v in items:
        out.append(v if isinstance(v, (int, np.integer)) else g.index[v])
    return [int(i) for i in out]


def _solve_spd(L: sp.csr_matrix, b: np.ndarray) -> tuple[np.ndarray, float]:
    """Solve the (weakly diagonally dominant) system, direct or CG."""
    n = L.shape[0]
    if n == 0:
        return np.zeros(0), 0.0
    if n <= DIRECT_SOLVE_LIMIT:
        try:
            x = spla.splu(L.tocsc()).solve(b)
        except RuntimeError as exc:
            raise SingularSystemError(f"direct solve failed: {exc}") from exc
    else:
        diag = L.diagonal()
        M = sp.diags(1.0 / diag)
        x, info = spla.cg(L, b, rtol=CG_TOL, atol=0.0, M=M,
                          maxiter=CG_MAXITER)
        if info != 0:
            raise SolverError(f"cg failed to converge (info={info})",
                              residual=float(np.abs(L @ x - b).max()))
    residual = float(np.abs(L @ x - b).max()) if n else 0.0
    return x, residual


def killed_laplacian(g: FiniteGraph) -> tuple[sp.csr_matrix, np.ndarray]:
    """(D - A) over interior vertices, D = full degrees; plus the interior
    index list in graph order."""
    interior = g.interior_indices()
    if len(interior) == g.n_vertices:
        raise SingularSystemError(
            "region has no boundary: killed kernel undefined")
    pos = -np.ones(g.n_vertices, dtype=np.int64)
    pos[interior] = np.arange(len(interior))
    rows, cols = [], []
    for i in interior:
        for j in g.neighbors_of(int(i)):
            if pos[j] >= 0:
                rows.append(pos[i])
                cols.append(pos[j])
    n = len(interior)
    A = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    D = sp.diags(g.degrees[interior].astype(float))
    return (D - A).tocsr(), interior


# ---------------------------------------------------------------------------
# Effective resistance


@dataclass(frozen=True)
class ResistanceSolve:
    value: float
    energy: float
    residual: float

    def __float__(self) -> float:
        return self.value


def effective_resistance(g: FiniteGraph, A, B) -> ResistanceSolve:
    """Resistance between vertex sets A and B of the truncated network.

    Solves the Dirichlet problem (potential 1 on A, 0 on B, harmonic
    elsewhere) and returns the inverse of the dissipated energy.
    """
    A = set(resolve_vertices(g, A))
    B = set(resolve_vertices(g, B))
    if not A or not B:
        raise ValueError("A and B must be nonempty")
    if A & B:
        raise ValueError("A and B must be disjoint")
    n = g.n_vertices
    h = np.zeros(n)
    for i in A:
        h[i] = 1.0
    free = np.array(sorted(set(range(n)) - A - B), dtype=np.int64)
    if len(free):
        pos = -np.ones(n, dtype=np.int64)
        pos[free] = np.arange(len(free))
        rows, cols, rhs = [], [], np.zeros(len(free))
        deg = np.zeros(len(free))
        for i in free:
            fi = pos[i]
            for j in g.neighbors_of(int(i)):
                deg[fi] += 1.0
                if pos[j] >= 0:
                    rows.append(fi)
                    cols.append(pos[j])
                elif j in A:
                    rhs[fi] += 1.0
        Aff = sp.csr_matrix((np.ones(len(rows)), (rows, cols)),
                            shape=(len(free), len(free)))
        L = (sp.diags(deg) - Aff).tocsr()
        x, residual = _solve_spd(L, rhs)
        h[free] = x
    else:
        residual = 0.0
    energy = 0.0
    for i, j in zip(*_edge_arrays(g)):
        d = h[i] - h[j]
        energy += d * d
    if energy <= 0.0:
        raise SingularSystemError("no current flows between A and B",
                                  residual=residual)
    return ResistanceSolve(value=1.0 / energy, energy=energy,
                           residual=residual)


def _edge_arrays(g: FiniteGraph) -> tuple[np.ndarray, np.ndarray]:
    src = np.repeat(np.arange(g.n_vertices), np.diff(g.indptr))
    dst = g.indices
    keep = src < dst
    return src[keep], dst[keep]


# ---------------------------------------------------------------------------
# Green kernel


@dataclass
class PotentialReport:
    """Green kernel summary for one region: the root row, the full diagonal,
    and the independently solved root resistance."""

    graph: FiniteGraph
    origin: int
    green_root: float
    green_root_row: np.ndarray          # over interior vertices, graph order
    green_diagonal: np.ndarray          # same indexing
    interior: np.ndarray                # interior vertex indices
    resistance_root: float
    solver_residual: float
    label: str = ""

    def diagonal_map(self) -> dict:
        verts = self.graph.vertices
        return {verts[i]: float(v)
                for i, v in zip(self.interior, self.green_diagonal)}

    def root_row_map(self) -> dict:
        verts = self.graph.vertices
        return {verts[i]: float(v)
                for i, v in zip(self.interior, self.green_root_row)}

    @property
    def g_max(self) -> float:
        return float(self.green_diagonal.max())

    @property
    def argmax_vertex(self):
        i = int(np.argmax(self.green_diagonal))
        return self.graph.vertices[int(self.interior[i])]

    def to_csv(self) -> str:
        lines = ["vertex,g_diag,g_root_row"]
        verts = self.graph.vertices
        for i, gd, gr in zip(self.interior, self.green_diagonal,
                             self.green_root_row):
            enc = str(verts[int(i)]).replace(" ", "")
            lines.append(f"\"{enc}\",{gd!r},{gr!r}")
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        return {
            "label": self.label or self.graph.label,
            "n_interior": int(len(self.interior)),
            "green_root": self.green_root,
            "resistance_root": self.resistance_root,
            "g_max": self.g_max,
            "solver_residual": self.solver_residual,
        }


def green_root_value(g: FiniteGraph, o=None) -> float:
    """g_B(o, o) by one killed-Laplacian solve."""
    o = g.root if o is None else resolve_vertices(g, [o])[0]
    L, interior = killed_laplacian(g)
    pos = {int(v): i for i, v in enumerate(interior)}
    if o not in pos:
        raise ValueError("origin must be interior")
    b = np.zeros(len(interior))
    b[pos[o]] = 1.0
    x, _ = _solve_spd(L, b)
    return float(x[pos[o]])


def green_diagonal_at(g: FiniteGraph, v) -> float:
    return green_root_value(g, v)


def tree_resistance_to_boundary(g: FiniteGraph) -> np.ndarray:
    """R_eff(v, boundary) for every vertex of a tree truncation, in O(n).

    Two passes over a BFS orientation: downward conductances toward the
    absorbing boundary, then upward ones; boundary vertices are ground.
    """
    n = g.n_vertices
    if not g.is_tree():
        raise ValueError("tree recursion called on a non-tree")
    if g.n_interior == n:
        raise SingularSystemError(
            "region has no boundary: killed kernel undefined")
    parent = np.full(n, -2, dtype=np.int64)
    order = [g.root]
    parent[g.root] = -1
    head = 0
    while head < len(order):
        v = order[head]
        for w in g.neighbors_of(v):
            if parent[w] == -2:
                parent[w] = v
                order.append(int(w))
        head += 1

    e_down = np.zeros(n)   # conductance to ground through (parent(v), v)
    sub = np.zeros(n)      # sum of children's e_down
    for v in reversed(order):
        if not g.interior[v]:
            e_down[v] = 1.0  # grounded immediately below the parent edge
        else:
            e_down[v] = sub[v] / (1.0 + sub[v]) if sub[v] > 0 else 0.0
        if parent[v] >= 0:
            sub[parent[v]] += e_down[v]

    e_up = np.zeros(n)
    for v in order:
        if parent[v] < 0:
            e_up[v] = 0.0
            continue
        p = parent[v]
        if not g.interior[p]:
            e_up[v] = 1.0
        else:
            around = e_up[p] + sub[p] - e_down[v]
            e_up[v] = around / (1.0 + around)

    R = np.zeros(n)
    for v in range(n):
        if g.interior[v]:
            total = e_up[v] + sub[v]
            R[v] = math.inf if total == 0 else 1.0 / total
    return R


def _strip_pendants(g: FiniteGraph):
    """Iteratively remove interior dead-ends.

    Returns (alive mask, strip list of (vertex, anchor) in removal order).
    Each stripped vertex had exactly one live edge at removal time, so its
    resistance to the boundary is 1 + that of its anchor.
    """
    n = g.n_vertices
    live = np.ones(n, dtype=bool)
    deg = np.diff(g.indptr).astype(np.int64)
    stack = [v for v in range(n) if g.interior[v] and deg[v] == 1]
    strips = []
    while stack:
        v = stack.pop()
        if not live[v] or deg[v] != 1:
            continue
        anchor = -1
        for w in g.neighbors_of(v):
            if live[w]:
                anchor = int(w)
                break
        if anchor < 0:
            continue
        live[v] = False
        strips.append((v, anchor))
        deg[anchor] -= 1
        deg[v] = 0
        if g.interior[anchor] and deg[anchor] == 1:
            stack.append(anchor)
    return live, strips


def _core_diagonal(g: FiniteGraph, live: np.ndarray) -> dict[int, float]:
    """Green diagonal on the pendant-stripped core.

    The stripped graph's killed Laplacian uses live degrees (removing a
    pendant dead-end subtracts one from its anchor's degree, exactly the
    Schur complement of the removed block).
    """
    core = [v for v in range(g.n_vertices) if live[v] and g.interior[v]]
    if not core:
        return {}
    pos = {v: i for i, v in enumerate(core)}
    m = len(core)
    rows, cols = [], []
    deg = np.zeros(m)
    for v in core:
        for w in g.neighbors_of(v):
            if live[w]:
                deg[pos[v]] += 1.0
                if g.interior[w]:
                    rows.append(pos[v])
                    cols.append(pos[w])
    A = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(m, m))
    L = (sp.diags(deg) - A).tocsc()
    out = {}
    if m <= DENSE_DIAG_LIMIT:
        diag = np.diag(np.linalg.inv(L.toarray()))
        for v, i in pos.items():
            out[v] = float(diag[i])
    else:
        lu = spla.splu(L)
        block = 64
        for lo in range(0, m, block):
            hi = min(lo + block, m)
            rhs = np.zeros((m, hi - lo))
            rhs[np.arange(lo, hi), np.arange(hi - lo)] = 1.0
            sol = lu.solve(rhs)
            for k in range(lo, hi):
                out[core[k]] = float(sol[k, k - lo])
    return out


def green_diagonal_all(g: FiniteGraph) -> np.ndarray:
    """g_B(v, v) for every interior vertex (indexed over all vertices;
    boundary entries are 0)."""
    if g.is_tree():
        R = tree_resistance_to_boundary(g)
        return np.where(g.interior, R, 0.0)
    if g.n_interior == g.n_vertices:
        raise SingularSystemError(
            "region has no boundary: killed kernel undefined")
    live, strips = _strip_pendants(g)
    vals = _core_diagonal(g, live)
    out = np.zeros(g.n_vertices)
    for v, x in vals.items():
        out[v] = x
    for v, anchor in reversed(strips):
        out[v] = 1.0 + (out[anchor] if g.interior[anchor] else 0.0)
    return out


def green_kernel(g: FiniteGraph, o=None, residual_tol: float = 1e-9,
                 label: str = "") -> PotentialReport:
    """Killed Green kernel report: root row, full interior diagonal, and the
    cross-checking Dirichlet resistance at the root."""
    o = g.root if o is None else resolve_vertices(g, [o])[0]
    if not g.interior[o]:
        raise ValueError("origin must be an interior vertex")
    L, interior = killed_laplacian(g)
    pos = -np.ones(g.n_vertices, dtype=np.int64)
    pos[interior] = np.arange(len(interior))
    b = np.zeros(len(interior))
    b[pos[o]] = 1.0
    row, res1 = _solve_spd(L, b)
    diag_full = green_diagonal_all(g)
    rsolve = effective_resistance(g, [o], g.boundary_indices())
    residual = max(res1, rsolve.residual)
    if residual > residual_tol:
        raise SolverError(
            f"green kernel residual {residual:.3e} above {residual_tol:.1e}",
            residual=residual)
    return PotentialReport(
        graph=g, origin=o, green_root=float(row[pos[o]]),
        green_root_row=row, green_diagonal=diag_full[interior],
        interior=interior, resistance_root=rsolve.value,
        solver_residual=residual, label=label or g.label)


# ---------------------------------------------------------------------------
# Killed transition densities


@dataclass
class KilledKernelTrace:
    """Time course of the killed walk started at the origin.

    diag[t] is q_t^B(o, o); mass[t] the surviving probability; even_diag[t]
    and odd_diag[t] are q_(2t) and q_(2t+1) at the origin, assembled by
    folding the distribution at time t with itself (valid out to twice the
    horizon).  green_partial is the running sum of diag.
    """

    origin: int
    diag: np.ndarray
    mass: np.ndarray
    even_diag: np.ndarray
    odd_diag: np.ndarray
    green_partial: np.ndarray
    vectors: Optional[np.ndarray] = None
    densities: Optional[np.ndarray] = None

    @property
    def t_max(self) -> int:
        return len(self.diag) - 1


def killed_densities(g: FiniteGraph, o=None, t_max: int = 256,
                     store_vectors: bool = False) -> KilledKernelTrace:
    """Iterate the substochastic one-step operator from the point mass at o."""
    o = g.root if o is None else resolve_vertices(g, [o])[0]
    if t_max < 0:
        raise ValueError("t_max must be >= 0")
    L, interior = killed_laplacian(g)
    pos = -np.ones(g.n_vertices, dtype=np.int64)
    pos[interior] = np.arange(len(interior))
    if pos[o] < 0:
        raise ValueError("origin must be interior")
    deg = g.degrees[interior].astype(float)
    step = _step_operator(g, interior, pos)

    n = len(interior)
    p = np.zeros(n)
    p[pos[o]] = 1.0
    diag = np.zeros(t_max + 1)
    mass = np.zeros(t_max + 1)
    even = np.zeros(t_max + 1)
    odd = np.zeros(t_max + 1)
    vectors = np.zeros((t_max + 1, n)) if store_vectors else None
    d_o = float(deg[pos[o]])
    for t in range(t_max + 1):
        diag[t] = p[pos[o]] / d_o
        mass[t] = p.sum()
        even[t] = float(((p * p) / deg).sum())
        if vectors is not None:
            vectors[t] = p
        p_next = step @ p
        odd[t] = float(((p * p_next) / deg).sum())
        p = p_next
    densities = vectors / deg if store_vectors else None
    return KilledKernelTrace(origin=o, diag=diag, mass=mass, even_diag=even,
                             odd_diag=odd, green_partial=np.cumsum(diag),
                             vectors=vectors, densities=densities)


def _step_operator(g: FiniteGraph, interior: np.ndarray,
                   pos: np.ndarray) -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    deg = g.degrees
    for i in interior:
        pi = pos[i]
        for j in g.neighbors_of(int(i)):
            if pos[j] >= 0:
                rows.append(pos[j])
                cols.append(pi)
                vals.append(1.0 / deg[i])
    n = len(interior)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


# ---------------------------------------------------------------------------
# Exact collision expectations for the killed pair


@dataclass
class PairExpectation:
    """Deterministic expected collisions of two independent killed walks.

    ez is E[vertex collisions], ez_edge E[same-step edge collisions]; the
    latter is accumulated both per neighbor slot (ez_edge) and by folding
    even-time return densities (even_diag_sum) as a bookkeeping cross-check.
    collision_mass[t] is the probability the walkers coincide at time t.
    """

    ez: float
    ez_edge: float
    even_diag_sum: float
    collision_mass: np.ndarray
    residual_mass: float
    t_used: int
    green_root: float
    max_degree: int
    second_moment_bound: Optional[float] = None


def exact_pair_expectation(g: FiniteGraph, o=None, t_max: Optional[int] = None,
                           mass_tol: float = 1e-10,
                           with_second_moment: bool = False,
                           hard_cap: int = 1 << 22) -> PairExpectation:
    """Propagate the killed distribution and accumulate collision moments.

    With t_max=None the horizon doubles adaptively until the surviving mass
    falls below mass_tol (the geometric decay of the killed walk makes the
    neglected tails comparable to mass_tol times the accumulated sums).
    """
    o = g.root if o is None else resolve_vertices(g, [o])[0]
    L, interior = killed_laplacian(g)
    pos = -np.ones(g.n_vertices, dtype=np.int64)
    pos[interior] = np.arange(len(interior))
    if pos[o] < 0:
        raise ValueError("origin must be interior")
    deg = g.degrees[interior].astype(float)
    nbr_counts = np.diff(g.indptr)[interior].astype(float)
    step = _step_operator(g, interior, pos)

    p = np.zeros(len(interior))
    p[pos[o]] = 1.0
    ez = 0.0
    ez_edge = 0.0
    even_sum = 0.0
    collision_mass = []
    t = 0
    limit = t_max if t_max is not None else 64
    while True:
        while t <= limit:
            sq = p * p
            collision_mass.append(float(sq.sum()))
            ez += collision_mass[-1]
            q = p / deg
            ez_edge += float((nbr_counts * q * q).sum())
            even_sum += float((sq / deg).sum())
            p = step @ p
            t += 1
        mass = float(p.sum())
        if mass < mass_tol:
            break
        if t_max is not None:
            raise ResidualMassError(
                f"killed mass {mass:.2e} above {mass_tol:.1e} at t={t_max}",
                mass=mass)
        if limit >= hard_cap:
            raise ResidualMassError(
                f"killed mass {mass:.2e} still above {mass_tol:.1e} at the "
                f"hard cap {hard_cap}", mass=mass)
        limit *= 2

    green_root = green_root_value(g, o)
    bound = None
    if with_second_moment:
        diag = green_diagonal_all(g)
        bound = green_root + 2.0 * green_root * float(diag.max())
    return PairExpectation(
        ez=ez, ez_edge=ez_edge, even_diag_sum=even_sum,
        collision_mass=np.array(collision_mass),
        residual_mass=float(p.sum()), t_used=t - 1, green_root=green_root,
        max_degree=int(g.degrees[interior].max()),
        second_moment_bound=bound)


# ---------------------------------------------------------------------------
# Nash-Williams cut sums for the product chain on T x T


@dataclass
class CutSumRow:
    n: int
    cut_edges: int
    inverse: float
    partial_sum: float
    comparison_partial: float


def product_cut_edges(sphere_sizes: Sequence[int], n: int) -> int:
    """Edges of the product graph T x T incident to the radius-n cut.

    The cut is the set of product vertices whose coordinate distances have
    maximum exactly n.  Counted exactly from tree sphere sizes: m_k tree
    edges join levels k and k+1 (m_k = sphere size at k+1); a product edge
    pairs two tree edges with one of two alignments.
    """
    m = [int(s) for s in sphere_sizes[1:]]  # m_k = s(k+1), k = 0..
    if n < 1 or n >= len(m):
        raise ValueError("cut index out of materialized range")
    M = np.concatenate(([0], np.cumsum(m)))  # M[t+1] = sum_{k<=t} m_k

    def T(j: int) -> int:  # weight of pairs with max(k, j') = j
        return 2 * m[j] * int(M[j]) + m[j] * m[j]

    S_A = m[n] * int(M[n]) + int(M[n + 1]) * m[n - 1] - m[n] * m[n - 1]
    return T(n) + T(n - 1) + 2 * S_A - m[n - 1] * m[n - 1]


def nash_williams_cutsum(spec: SphericalTreeSpec, n_max: int,
                         comparison_beta: Optional[float] = None) -> list[CutSumRow]:
    """Partial sums of 1/|E_2n| for the disjoint product-graph cutsets.

    Divergence of the sum certifies recurrence of the pair walk.  The
    comparison series sum 1/(n (log n)^(2/beta)) is tabulated alongside.
    """
    beta = comparison_beta if comparison_beta is not None else spec.beta
    sizes = [spec.sphere_size(k) for k in range(2 * n_max + 2)]
    rows = []
    total = 0.0
    comp_total = 0.0
    for n in range(1, n_max + 1):
        e = product_cut_edges(sizes, 2 * n)
        total += 1.0 / e
        if n >= 2 and beta:
            comp_total += 1.0 / (n * math.log(n) ** (2.0 / beta))
        rows.append(CutSumRow(n=n, cut_edges=e, inverse=1.0 / e,
                              partial_sum=total,
                              comparison_partial=comp_total))
    return rows
