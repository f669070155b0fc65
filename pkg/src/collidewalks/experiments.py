"""Monte Carlo estimator framework and the collision phase experiments.

Every estimator is a pure function of (config, master seed): replicate k
always draws from stream k, partial results are merged in stream order, and
the worker hint never touches any numeric output.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import walks
from .families import (CombOracle, CombSpec, OffspringSpec, PowerProfile,
                       SphericalTreeSpec, comb_oracle,
                       sample_critical_gw, sample_percolation_cluster,
                       survival_probability_exact)
from .graphs import FiniteGraph, FiniteRegion, extract_region
from .potential import killed_densities
from .rng import RngStream, stream_key

Z95 = 1.959963984540054


# ---------------------------------------------------------------------------
# Estimates and intervals


def wilson_interval(k: int, n: int, z: float = Z95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n == 0:
        return (math.nan, math.nan)
    p = k / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    lo = 0.0 if k == 0 else max(0.0, center - half)
    hi = 1.0 if k == n else min(1.0, center + half)
    return (lo, hi)


@dataclass
class EstimatorResult:
    """Point estimate with its uncertainty and seed provenance."""

    estimate: float
    se: float
    ci: tuple
    replicates: int
    master_seed: int
    label: str = ""
    kind: str = "mean"
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.replicates >= 2 and not math.isnan(self.estimate):
            assert self.ci[0] <= self.estimate <= self.ci[1]
            assert self.se >= 0

    def to_dict(self) -> dict:
        return {"label": self.label, "kind": self.kind,
                "estimate": self.estimate, "se": self.se,
                "ci_lo": self.ci[0], "ci_hi": self.ci[1],
                "replicates": self.replicates,
                "master_seed": self.master_seed, **self.extra}


def mean_result(values: np.ndarray, master_seed: int, label: str = "",
                extra: Optional[dict] = None) -> EstimatorResult:
    values = np.asarray(values, dtype=float)
    n = len(values)
    m = float(values.mean())
    se = float(values.std(ddof=1) / math.sqrt(n)) if n >= 2 else 0.0
    return EstimatorResult(estimate=m, se=se,
                           ci=(m - Z95 * se, m + Z95 * se), replicates=n,
                           master_seed=master_seed, label=label, kind="mean",
                           extra=extra or {})


def proportion_result(hits: int, n: int, master_seed: int, label: str = "",
                      extra: Optional[dict] = None) -> EstimatorResult:
    p = hits / n if n else math.nan
    se = math.sqrt(p * (1 - p) / n) if n else math.nan
    return EstimatorResult(estimate=p, se=se, ci=wilson_interval(hits, n),
                           replicates=n, master_seed=master_seed,
                           label=label, kind="proportion", extra=extra or {})


def ratio_of_means(x: np.ndarray, y: np.ndarray, master_seed: int,
                   label: str = "") -> EstimatorResult:
    """mean(y)/mean(x) for paired replicates, delta-method interval."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(x)
    mx, my = x.mean(), y.mean()
    r = my / mx
    cov = np.cov(np.vstack([x, y]), ddof=1) if n >= 2 else np.zeros((2, 2))
    var = (cov[1, 1] - 2 * r * cov[0, 1] + r * r * cov[0, 0]) / (n * mx * mx)
    se = math.sqrt(max(var, 0.0))
    return EstimatorResult(estimate=float(r), se=se,
                           ci=(r - Z95 * se, r + Z95 * se), replicates=n,
                           master_seed=master_seed, label=label,
                           kind="ratio", extra={"mean_lo": float(mx),
                                                "mean_hi": float(my)})


class ReplicateFailures(RuntimeError):
    def __init__(self, msg: str, failures: list):
        super().__init__(msg)
        self.failures = failures


def estimate(replicate_fn: Callable[[int, RngStream], float], replicates: int,
             master_seed: int, workers: int = 1, label: str = "",
             kind: str = "mean", failure_cap: float = 0.05,
             stream_offset: int = 0) -> EstimatorResult:
    """Run a pure replicate function over per-replicate streams.

    replicate_fn(stream_id, rng) must depend only on its arguments.  Results
    are reduced in stream order, so the worker count cannot change the
    estimate.  Failures above ``failure_cap`` abort with diagnostics.
    """
    values = np.full(replicates, np.nan)
    failures: list[str] = []

    def run(i: int):
        return replicate_fn(i + stream_offset,
                            RngStream(master_seed, i + stream_offset))

    if workers <= 1:
        results = map(run, range(replicates))
        for i, v in enumerate(results):
            values[i] = v
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for i, v in enumerate(pool.map(run, range(replicates))):
                values[i] = v
    bad = np.isnan(values)
    if bad.any():
        failures = [f"replicate {i} returned nan" for i in np.nonzero(bad)[0]]
        if bad.sum() > failure_cap * replicates:
            raise ReplicateFailures(
                f"{bad.sum()}/{replicates} replicate failures", failures)
        values = values[~bad]
    if kind == "proportion":
        hits = int(values.sum())
        return proportion_result(hits, len(values), master_seed, label,
                                 extra={"failures": len(failures)})
    return mean_result(values, master_seed, label,
                       extra={"failures": len(failures)})


# ---------------------------------------------------------------------------
# Collision target sets


@dataclass(frozen=True)
class CombBandSpec:
    """Middle-third band of tooth k: {(k, y): h/3 < y <= 2h/3}.

    The band is the difference of the two tooth prefixes of heights 2h/3 and
    h/3, so its hit count is the prefix-count difference."""

    k: int
    h: int
    horizon: Optional[int] = None     # fixed horizon; None = power window
    window_factor: float = 4.0        # horizon = factor * k**(2 + alpha')

    def band(self) -> tuple[int, int, int]:
        return (self.k, self.h // 3 + 1, (2 * self.h) // 3)

    def resolve_horizon(self, alpha_prime: float) -> int:
        if self.horizon is not None:
            return int(self.horizon)
        return int(math.ceil(self.window_factor
                             * self.k ** (2.0 + alpha_prime)))


@dataclass(frozen=True)
class TreeIntervalSpec:
    """The l-th dyadic subinterval of the level-n segments.

    Segment level n starts after the n-th branch point (distance a = a_n);
    subinterval l covers distances (2**(l-1) a, 2**l a], length 2**(l-1) a.
    The observation window depends on the growth regime: [(2^l a)^2,
    2 (2^l a)^2] for beta >= 1, and [2 (2^(l+1) a)^2, (2^(l+1) a)^4]
    (budget-capped) for 1/2 <= beta < 1.
    """

    n: int
    l: int
    step_budget: int = 10**8

    def distance_window(self, spec: SphericalTreeSpec) -> tuple[int, int]:
        a = spec.branch_distances()[self.n - 1]
        lo = 2 ** (self.l - 1) * a + 1
        hi = 2 ** self.l * a
        seg_end = a + spec.segment_length(self.n)
        if hi > seg_end:
            raise ValueError(f"interval l={self.l} leaves segment level "
                             f"{self.n}")
        return lo, hi

    def interval_count(self, spec: SphericalTreeSpec) -> int:
        a = spec.branch_distances()[self.n - 1]
        b = spec.segment_length(self.n)
        if b == math.inf:
            raise ValueError("unbounded segment")
        return int(math.floor(math.log2(1 + b / a)))

    def time_window(self, spec: SphericalTreeSpec,
                    beta: Optional[float] = None) -> tuple[int, int, bool]:
        beta = spec.beta if beta is None else beta
        if beta is None:
            raise ValueError("time window needs the growth parameter beta")
        a = spec.branch_distances()[self.n - 1]
        if beta >= 1:
            lo = (2 ** self.l * a) ** 2
            hi = 2 * lo
        else:
            lo = 2 * (2 ** (self.l + 1) * a) ** 2
            hi = (2 ** (self.l + 1) * a) ** 4
        truncated = hi > self.step_budget
        return int(lo), int(min(hi, self.step_budget)), truncated


def set_collision_probability(family, target, replicates: int,
                              master_seed: int) -> EstimatorResult:
    """P(at least one collision in the target set within its window).

    family: a CombOracle with a CombBandSpec target, or a SphericalTreeSpec
    with a TreeIntervalSpec target.
    """
    if isinstance(target, CombBandSpec):
        if not isinstance(family, CombOracle):
            raise TypeError("comb band target needs a comb oracle")
        prof = family.spec.profile
        if target.h > family.height(target.k):
            raise ValueError(f"band height {target.h} above tooth "
                             f"f({target.k}) = {family.height(target.k)}")
        ap = prof.alpha_prime if isinstance(prof, PowerProfile) else 2.0
        T = target.resolve_horizon(ap)
        out = walks.comb_pair_batch(family, replicates, [T], master_seed,
                                    band=target.band())
        hits = int((out["band_time"] >= 0).sum())
        return proportion_result(
            hits, replicates, master_seed,
            label=f"P(band k={target.k}, h={target.h} hit by T={T})",
            extra={"horizon": T})
    if isinstance(target, TreeIntervalSpec):
        if not isinstance(family, SphericalTreeSpec):
            raise TypeError("tree interval target needs a tree spec")
        seg = target.distance_window(family)
        t_lo, t_hi, truncated = target.time_window(family)
        out = walks.tree_pair_batch(family, replicates, (t_lo, t_hi), seg,
                                    master_seed)
        hits = int((out["z"] > 0).sum())
        return proportion_result(
            hits, replicates, master_seed,
            label=f"P(collision in level {target.n} interval {target.l})",
            extra={"t_window": [t_lo, t_hi], "window_truncated": truncated,
                   "overflow": int(out["overflow"].sum())})
    raise TypeError(f"unknown target {target!r}")


# ---------------------------------------------------------------------------
# Growth curves


@dataclass
class GrowthCurve:
    horizons: np.ndarray
    z: np.ndarray                      # replicates x horizons
    mean: list[EstimatorResult]
    median: list[EstimatorResult]
    master_seed: int
    label: str = ""

    def ratio(self, t_lo: int, t_hi: int) -> EstimatorResult:
        i = int(np.nonzero(self.horizons == t_lo)[0][0])
        j = int(np.nonzero(self.horizons == t_hi)[0][0])
        return ratio_of_means(self.z[:, i], self.z[:, j], self.master_seed,
                              label=f"{self.label} mean Z({t_hi})/Z({t_lo})")

    def to_csv(self) -> str:
        lines = ["horizon,mean_z,mean_se,mean_ci_lo,mean_ci_hi,median_z"]
        for h, m, md in zip(self.horizons, self.mean, self.median):
            lines.append(f"{h},{m.estimate!r},{m.se!r},{m.ci[0]!r},"
                         f"{m.ci[1]!r},{md.estimate!r}")
        return "\n".join(lines) + "\n"


def _median_result(col: np.ndarray, master_seed: int,
                   label: str) -> EstimatorResult:
    med = float(np.median(col))
    n = len(col)
    # order-statistic interval on the binomial quantile counts
    k_lo = max(0, int(n / 2 - Z95 * math.sqrt(n) / 2) - 1)
    k_hi = min(n - 1, int(n / 2 + Z95 * math.sqrt(n) / 2))
    s = np.sort(col)
    return EstimatorResult(estimate=med, se=0.0,
                           ci=(float(s[k_lo]), float(s[k_hi])),
                           replicates=n, master_seed=master_seed,
                           label=label, kind="median")


def collision_growth_curve(family, horizons: Sequence[int], replicates: int,
                           master_seed: int, label: str = "",
                           start=None) -> GrowthCurve:
    """Cumulative pair-collision counts at increasing horizons.

    family: a CombOracle (lazy infinite comb / line) or a FiniteGraph host
    (walks live on the host unkilled).
    """
    horizons = sorted(int(h) for h in horizons)
    if isinstance(family, CombOracle):
        out = walks.comb_pair_batch(family, replicates, horizons, master_seed,
                                    start_a=start or ((0,) * family.spec.base_dim + (0,)),
                                    start_b=start or ((0,) * family.spec.base_dim + (0,)))
    elif isinstance(family, FiniteGraph):
        out = walks.csr_pair_batch(family, replicates, horizons, master_seed,
                                   start=start, killed=False)
    else:
        raise TypeError("growth curves run on comb oracles or finite hosts")
    z = out["z"]
    hs = out["horizons"]
    means = [mean_result(z[:, j], master_seed, f"mean Z({h})")
             for j, h in enumerate(hs)]
    medians = [_median_result(z[:, j], master_seed, f"median Z({h})")
               for j, h in enumerate(hs)]
    return GrowthCurve(horizons=hs, z=z, mean=means, median=medians,
                       master_seed=master_seed, label=label)


# ---------------------------------------------------------------------------
# Transition probability profiles on combs


@dataclass
class TransitionProfile:
    spine_site: int
    times: np.ndarray
    p: np.ndarray                   # P_0(X_t = (k, 0))
    t_scaled: np.ndarray            # t**beta' * p
    k_scaled: np.ndarray            # k**(1 + alpha') * p
    exit_mass: float
    mode: str

    def to_csv(self) -> str:
        lines = ["t,p,t_scaled,k_scaled"]
        for t, a, b, c in zip(self.times, self.p, self.t_scaled,
                              self.k_scaled):
            lines.append(f"{t},{a!r},{b!r},{c!r}")
        return "\n".join(lines) + "\n"


class RegionTooSmallError(RuntimeError):
    def __init__(self, msg, exit_mass):
        super().__init__(msg)
        self.exit_mass = exit_mass


def transition_profile(spec: CombSpec, k: int, times: Sequence[int],
                       master_seed: int = 0, exact: bool = True,
                       replicates: int = 10000,
                       exit_tol: float = 1e-6,
                       slab_radius: Optional[int] = None,
                       height_cap: Optional[int] = None) -> TransitionProfile:
    """P_0(X_t = (k, 0)) over a time grid, with the scaled columns used to
    inspect the decay exponents.

    Exact mode propagates the killed distribution on a slab wide and tall
    enough that the absorbed mass stays below exit_tol (teeth are cut at a
    height the walk cannot meaningfully reach by the last time).
    """
    if spec.base_dim != 1:
        raise ValueError("profiles are computed on 1-d combs")
    oracle = comb_oracle(spec)
    prof = spec.profile
    ap = prof.alpha_prime if isinstance(prof, PowerProfile) else 2.0
    bp = prof.beta_prime if isinstance(prof, PowerProfile) else 0.75
    times = np.asarray(sorted(times), dtype=np.int64)
    t_end = int(times[-1])
    if exact:
        R = slab_radius or max(2 * k,
                               int(8.0 * t_end ** (1.0 / (2.0 + ap))) + 10)
        H = height_cap or int(14.0 * math.sqrt(t_end)) + 8
        grow = slab_radius is None  # fixed radius: fail rather than enlarge
        for _ in range(4):
            region = FiniteRegion(
                member=lambda v: abs(v[0]) <= R and v[1] <= H,
                root=(0, 0), label=f"profile_slab(R={R}, H={H})")
            g = extract_region(oracle, region)
            trace = killed_densities(g, (0, 0), t_max=t_end,
                                     store_vectors=True)
            exit_mass = float(1.0 - trace.mass[-1])
            if exit_mass <= exit_tol or not grow:
                break
            R = int(1.6 * R) + 4
            H = int(1.3 * H) + 4
        if exit_mass > exit_tol:
            raise RegionTooSmallError(
                f"absorbed mass {exit_mass:.2e} above {exit_tol:.1e}; "
                f"enlarge the slab", exit_mass)
        target = g.index.get((k, 0))
        if target is None:
            raise ValueError(f"site ({k},0) outside the slab")
        col = int(np.nonzero(g.interior_indices() == target)[0][0])
        p = trace.vectors[times, col]
        mode = "exact"
    else:
        out = walks.comb_positions_batch(oracle, replicates, list(times),
                                         master_seed)
        p = ((out["x"] == k) & (out["y"] == 0)).mean(axis=0)
        exit_mass = 0.0
        mode = "monte-carlo"
    safe_t = np.maximum(times, 1).astype(float)
    return TransitionProfile(spine_site=k, times=times, p=np.asarray(p),
                             t_scaled=safe_t**bp * p,
                             k_scaled=float(max(k, 1)) ** (1.0 + ap) * p,
                             exit_mass=exit_mass, mode=mode)


# ---------------------------------------------------------------------------
# Survival of critical branching processes


def kolmogorov_check(offspring: OffspringSpec, n: int, replicates: int,
                     master_seed: int, workers: int = 1) -> EstimatorResult:
    """Monte Carlo survival frequency P(Z_n > 0) against the asymptotic
    reference 2/(n sigma^2) and, when the pmf is rational, the exact
    generating-function value."""
    offspring.require_critical()
    if offspring.variance <= 0:
        raise ValueError("degenerate offspring law: reference undefined")

    def replicate(stream_id: int, rng: RngStream) -> float:
        sizes = sample_critical_gw(offspring, n, master_seed, stream_id)
        return float(sizes[-1] > 0)

    result = estimate(replicate, replicates, master_seed, workers=workers,
                      kind="proportion",
                      label=f"P(Z_{n} > 0), {offspring.name}")
    result.extra["reference"] = 2.0 / (n * offspring.variance)
    if len(offspring.pmf) <= 80:
        result.extra["exact"] = float(survival_probability_exact(offspring, n))
    return result


# ---------------------------------------------------------------------------
# Percolation collision runs


@dataclass
class PercolationRun:
    curve: GrowthCurve
    increment: EstimatorResult
    per_cluster: list[dict]
    box_touch_rate: float


def percolation_collision_run(p: float, L: int, T: int, n_clusters: int,
                              pairs_per_cluster: int, master_seed: int,
                              horizons: Optional[Sequence[int]] = None,
                              burn_in: int = 1000) -> PercolationRun:
    """Pair walks from the root of sampled open clusters.

    Reports the pooled collision growth curve and the mean increment of the
    collision count over the top horizon decade (the slow-growth signature).
    Box-edge contacts are logged: walks confined to a finite box see the
    cluster boundary, and heavy contact means the box proxy is distorting.
    """
    if not p > 0.5:
        raise ValueError("supercritical runs need p > 1/2")
    horizons = sorted(horizons or [burn_in, T // 10, T])
    per_cluster = []
    zs = []
    touch_total = 0
    steps_total = 0
    for c in range(n_clusters):
        cluster = sample_percolation_cluster(p, L, master_seed, stream_id=c)
        flags = np.zeros(cluster.n_vertices, dtype=bool)
        flags[np.nonzero(cluster.meta["on_box_edge"])[0]] = True
        out = walks.csr_pair_batch(
            cluster, pairs_per_cluster, horizons,
            stream_key(master_seed, (1 << 32) + c), killed=False,
            flagged=flags)
        zs.append(out["z"])
        touch_total += int(out["flag_touches"].sum())
        steps_total += 2 * (T + 1) * pairs_per_cluster
        per_cluster.append({
            "cluster": c, "n_vertices": cluster.n_vertices,
            "density": cluster.meta["density"],
            "mean_z_final": float(out["z"][:, -1].mean()),
            "box_touches": int(out["flag_touches"].sum()),
        })
    z = np.vstack(zs)
    hs = np.asarray(horizons, dtype=np.int64)
    means = [mean_result(z[:, j], master_seed, f"mean Z({h})")
             for j, h in enumerate(hs)]
    medians = [_median_result(z[:, j], master_seed, f"median Z({h})")
               for j, h in enumerate(hs)]
    curve = GrowthCurve(horizons=hs, z=z, mean=means, median=medians,
                        master_seed=master_seed,
                        label=f"percolation p={p} L={L}")
    inc = mean_result(z[:, -1] - z[:, -2], master_seed,
                      label=f"Z({horizons[-1]}) - Z({horizons[-2]})")
    return PercolationRun(curve=curve, increment=inc, per_cluster=per_cluster,
                          box_touch_rate=touch_total / max(steps_total, 1))
