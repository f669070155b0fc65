"""Numerical evaluation of the infinite-collision criteria.

Two sufficient conditions are evaluated on growing truncations:

* the Green-ratio test: max_x g_B(x,x) / g_B(o,o) stays bounded along an
  increasing region sequence;
* the resistance growth test J(lambda): the root resistance of the radius-r
  ball stays above r / lambda.

The slope thresholds that turn a scan into a verdict hint are artifact
policy (configurable, never used by the acceptance suite).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .families import KestenTree
from .graphs import FiniteGraph, FiniteRegion, NeighborOracle, extract_region
from .potential import SolverError, effective_resistance, green_kernel

SLOPE_BOUNDED = 0.1
SLOPE_GROWING = 0.25


@dataclass
class ScanRow:
    r: int
    g_root: float = math.nan
    g_max: float = math.nan
    ratio: float = math.nan
    argmax_vertex: object = None
    n_interior: int = 0
    residual: float = math.nan
    failed: bool = False
    error: str = ""


@dataclass
class CriterionScan:
    rows: list[ScanRow]
    slope: float
    verdict: str
    slope_bounded: float = SLOPE_BOUNDED
    slope_growing: float = SLOPE_GROWING

    def to_csv(self) -> str:
        lines = ["r,g_root,g_max,ratio,argmax_vertex,n_interior,residual,failed"]
        for row in self.rows:
            enc = str(row.argmax_vertex).replace(" ", "")
            lines.append(
                f"{row.r},{row.g_root!r},{row.g_max!r},{row.ratio!r},"
                f"\"{enc}\",{row.n_interior},{row.residual!r},"
                f"{int(row.failed)}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps({
            "slope": self.slope,
            "verdict": self.verdict,
            "thresholds": {"bounded": self.slope_bounded,
                           "growing": self.slope_growing},
            "rows": [{"r": w.r, "g_root": w.g_root, "g_max": w.g_max,
                      "ratio": w.ratio, "failed": w.failed}
                     for w in self.rows],
        })


def green_ratio_scan(oracle: NeighborOracle, o,
                     regions: Sequence[tuple[int, FiniteRegion]],
                     slope_bounded: float = SLOPE_BOUNDED,
                     slope_growing: float = SLOPE_GROWING,
                     cap: int = 5_000_000) -> CriterionScan:
    """Green diagonal ratio along an increasing region sequence.

    regions is a list of (r, region) pairs with o interior to each.  The
    verdict hint comes from the least-squares slope of log(ratio) against
    log(r).
    """
    rows = []
    for r, region in regions:
        row = ScanRow(r=r)
        try:
            g = extract_region(oracle, region, cap=cap)
            report = green_kernel(g, o)
            row.g_root = report.green_root
            row.g_max = report.g_max
            row.ratio = report.g_max / report.green_root
            row.argmax_vertex = report.argmax_vertex
            row.n_interior = len(report.interior)
            row.residual = report.solver_residual
        except (SolverError, ValueError) as exc:
            row.failed = True
            row.error = str(exc)
        rows.append(row)
    good = [w for w in rows if not w.failed]
    if len(good) >= 2:
        xs = np.log([w.r for w in good])
        ys = np.log([w.ratio for w in good])
        slope = float(np.polyfit(xs, ys, 1)[0])
    else:
        slope = math.nan
    if math.isnan(slope):
        verdict = "inconclusive"
    elif slope < slope_bounded:
        verdict = "bounded-ratio"
    elif slope > slope_growing:
        verdict = "growing-ratio"
    else:
        verdict = "inconclusive"
    return CriterionScan(rows=rows, slope=slope, verdict=verdict,
                         slope_bounded=slope_bounded,
                         slope_growing=slope_growing)


def comb_slab_region(r: int, base_dim: int = 1) -> FiniteRegion:
    """Two-sided slab |x| <= r of a comb (teeth included full height).

    The two-sided slab keeps the root in the middle: the root Green value
    grows linearly in r (two spine arms in parallel), and only the ratio to
    the diagonal maximum enters the criterion.
    """
    if base_dim == 1:
        member = lambda v: abs(v[0]) <= r
        root = (0, 0)
    else:
        member = lambda v: abs(v[0]) <= r and abs(v[1]) <= r
        root = (0, 0, 0)
    return FiniteRegion(member=member, root=root, label=f"slab(r={r})")


def comb_slab_scan(oracle: NeighborOracle, radii: Sequence[int],
                   **kwargs) -> CriterionScan:
    base_dim = getattr(oracle, "spec", None)
    dim = base_dim.base_dim if base_dim is not None else 1
    regions = [(r, comb_slab_region(r, dim)) for r in radii]
    o = (0, 0) if dim == 1 else (0, 0, 0)
    return green_ratio_scan(oracle, o, regions, **kwargs)


def j_lambda(g: FiniteGraph, r: int, lam: float) -> bool:
    """True when the root-to-boundary resistance of the radius-r ball
    truncation is at least r / lambda."""
    if lam < 1:
        raise ValueError("lambda must be >= 1")
    res = effective_resistance(g, [g.root], g.boundary_indices())
    return res.value >= r / lam


def estimate_j_prob(sampler: Callable[[int], FiniteGraph], r: int,
                    lam: float, n_samples: int, master_seed: int,
                    label: str = "") :
    """Monte Carlo estimate of P(root resistance of the r-ball >= r/lambda)
    over a random-graph sampler.

    sampler(stream_id) must return a rooted FiniteGraph containing the
    r-ball around its root.  Sample failures above 20% abort.
    """
    from .experiments import EstimatorResult, wilson_interval
    from .graphs import ball_region

    hits = 0
    used = 0
    failures = []
    for i in range(n_samples):
        try:
            host = sampler(i)
            oracle = host.as_oracle()
            root_enc = host.vertices[host.root]
            ball = ball_region(oracle, root_enc, r)
            g = extract_region(oracle, ball)
            if g.n_interior == g.n_vertices:
                raise ValueError("host graph smaller than the r-ball")
            hits += bool(j_lambda(g, r, lam))
            used += 1
        except Exception as exc:  # per-sample failure, aborts if frequent
            failures.append(f"sample {i}: {exc}")
            if len(failures) > 0.2 * n_samples:
                raise RuntimeError(
                    "sample failure rate above 20%: " + "; ".join(failures[:5]))
    p = hits / used if used else math.nan
    lo, hi = wilson_interval(hits, used)
    se = math.sqrt(p * (1 - p) / used) if used else math.nan
    return EstimatorResult(
        estimate=p, se=se, ci=(lo, hi), replicates=used,
        master_seed=master_seed, kind="proportion",
        label=label or f"P(r in J({lam})) at r={r}",
        extra={"failures": len(failures)})


@dataclass
class KestenRegionInfo:
    region: FiniteRegion
    n_deep: int               # hanging subtrees deeper than r/eps
    depth_limit: int
    member_count: int


def kesten_region(tree: KestenTree, r: int, eps: float) -> KestenRegionInfo:
    """Region of a sampled conditioned tree: the first r backbone vertices
    together with their off-backbone descendants.

    Hanging subtrees deeper than floor(r/eps) are counted (n_deep) and the
    region truncates them at that depth, mirroring the conditioning device
    that keeps the region diagonal comparable to the root value.
    """
    if len(tree.backbone) <= r + 1:
        raise ValueError(f"tree height {len(tree.backbone) - 1} too small "
                         f"for r={r}")
    if not 0 < eps <= 1:
        raise ValueError("eps must be in (0, 1]")
    depth_limit = int(math.floor(r / eps))
    g = tree.graph
    parents = g.meta["parents"]
    backbone_set = set(tree.backbone)
    keep = set(tree.backbone[:r + 1])
    n_deep = 0
    for i in range(r + 1):
        b = tree.backbone[i]
        for c in g.neighbors_of(b):
            c = int(c)
            if c in backbone_set or parents[c] != b:
                continue
            frontier = [c]
            depth = 0
            while True:
                keep.update(frontier)
                nxt = [int(w) for v in frontier for w in g.neighbors_of(v)
                       if parents[int(w)] == v]
                if not nxt:
                    break
                if depth >= depth_limit:
                    n_deep += 1  # cut here: this subtree runs deeper
                    break
                frontier = nxt
                depth += 1
    member = frozenset(keep)
    region = FiniteRegion(member=member.__contains__, root=tree.backbone[0],
                          label=f"kesten_region(r={r}, eps={eps})")
    return KestenRegionInfo(region=region, n_deep=n_deep,
                            depth_limit=depth_limit,
                            member_count=len(member))
