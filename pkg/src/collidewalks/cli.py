"""Command-line entry point.

Subcommands bind the library to JSON configs and tabular outputs:

    build       materialize a truncation as graph JSON
    resist      Green kernel / resistance report for a region
    criterion   Green-ratio scan over a radius sequence
    collide     pair/triple walk records (JSONL) + growth CSV
    experiment  the named experiments, with a run manifest

Exit codes: 0 success, 2 config error, 3 numerical failure.  Every command
honors --seed, --replicates, --threads, --out, --cap-vertices; the thread
count never changes any numeric output (per-replicate streams).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

try:
    import jsonschema
except ImportError:  # pragma: no cover
    jsonschema = None

from . import __version__, criterion as crit, experiments as xp, walks
from .families import (CombSpec, IidProfile, InfiniteProfile, PowerProfile,
                       SphericalTreeSpec, TableProfile, binomial_offspring,
                       comb_oracle, deterministic_offspring,
                       geometric_offspring, line_oracle,
                       power_tail_offspring, sample_kesten_tree,
                       sample_percolation_cluster, sample_ust,
                       spherical_tree_oracle)
from .graphs import (DEFAULT_VERTEX_CAP, DisconnectedRootError, FiniteRegion,
                     RegionExplosionError, ball_region, extract_region)
from .potential import (ResidualMassError, SolverError, green_kernel,
                        nash_williams_cutsum)


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Config helpers


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def validate_config(cfg: dict, schema_name: str) -> None:
    if jsonschema is None:
        return
    try:
        text = (resources.files("collidewalks") / "schemas"
                / f"{schema_name}.json").read_text()
    except FileNotFoundError:
        return
    try:
        jsonschema.validate(cfg, json.loads(text))
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"config does not match {schema_name} schema: "
                          f"{exc.message}") from exc


def profile_from_config(cfg: dict):
    kind = cfg.get("kind", "power")
    if kind == "power":
        c = float(cfg.get("C", 1.0))
        alpha = float(cfg.get("alpha", 1.0))
        if alpha < 0 or c < 0:
            raise ConfigError("profile needs C >= 0 and alpha >= 0")
        return PowerProfile(C=c, alpha=alpha)
    if kind == "table":
        return TableProfile(table={int(k): int(v)
                                   for k, v in cfg["table"].items()})
    if kind == "iid":
        pmf = tuple((int(h), float(p)) for h, p in cfg["pmf"])
        return IidProfile(pmf=pmf, seed=int(cfg.get("seed", 0)))
    if kind == "infinite":
        return InfiniteProfile()
    raise ConfigError(f"unknown profile kind {kind!r}")


def offspring_from_config(cfg: dict):
    kind = cfg.get("kind", "geometric")
    if kind == "geometric":
        return geometric_offspring()
    if kind == "deterministic":
        return deterministic_offspring(int(cfg.get("k", 1)))
    if kind == "binomial":
        return binomial_offspring(int(cfg.get("n", 2)),
                                  float(cfg.get("p", 0.5)))
    if kind == "power_tail":
        return power_tail_offspring(float(cfg["gamma"]),
                                    kmax=int(cfg.get("kmax", 10**9)))
    raise ConfigError(f"unknown offspring kind {kind!r}")


def oracle_from_config(cfg: dict):
    fam = cfg.get("family", "comb")
    if fam == "line":
        return line_oracle()
    if fam in ("comb", "comb2d"):
        profile = profile_from_config(cfg.get("profile", {}))
        dim = 2 if fam == "comb2d" else int(cfg.get("base_dim", 1))
        return comb_oracle(CombSpec(profile=profile, base_dim=dim))
    if fam == "spherical_tree":
        return spherical_tree_oracle(tree_spec_from_config(cfg))
    raise ConfigError(f"family {fam!r} is not a lazy oracle family")


def tree_spec_from_config(cfg: dict) -> SphericalTreeSpec:
    if "lengths" in cfg:
        lengths = tuple(math.inf if x in ("inf", None) else int(x)
                        for x in cfg["lengths"])
        return SphericalTreeSpec(lengths=lengths,
                                 depth_cap=int(cfg.get("depth_cap", 8)))
    return SphericalTreeSpec(beta=float(cfg["beta"]),
                             depth_cap=int(cfg.get("depth_cap", 3)))


def graph_from_config(cfg: dict, seed: int, cap: int):
    if isinstance(cfg.get("family"), dict):
        merged = dict(cfg["family"])
        if "region" in cfg:
            merged["region"] = cfg["region"]
        cfg = merged
    fam = cfg.get("family", "comb")
    if fam == "percolation":
        return sample_percolation_cluster(float(cfg["p"]), int(cfg["L"]),
                                          seed, int(cfg.get("stream", 0)))
    if fam == "ust":
        return sample_ust(int(cfg["L"]), seed, int(cfg.get("stream", 0)))
    if fam == "kesten":
        tree = sample_kesten_tree(
            offspring_from_config(cfg.get("offspring", {})),
            int(cfg["height"]), seed, int(cfg.get("stream", 0)),
            subtree_depth_cap=cfg.get("subtree_depth_cap"),
            vertex_cap=cap)
        return tree.graph
    oracle = oracle_from_config(cfg)
    region = region_from_config(cfg.get("region", {}), oracle, cap)
    return extract_region(oracle, region, cap=cap)


def region_from_config(cfg: dict, oracle, cap: int) -> FiniteRegion:
    kind = cfg.get("kind", "ball")
    if kind == "slab":
        r = int(cfg["r"])
        dim = getattr(getattr(oracle, "spec", None), "base_dim", 1)
        return crit.comb_slab_region(r, dim)
    if kind == "ball":
        r = int(cfg["r"])
        root = cfg.get("root")
        if root is None:
            fam = getattr(oracle, "family", "")
            root = ((), 0) if fam == "spherical_tree" else \
                ((0, 0, 0) if fam == "comb2d" else (0, 0))
        else:
            root = tuple(root) if isinstance(root, list) else root
        return ball_region(oracle, root, r, cap=cap)
    raise ConfigError(f"unknown region kind {kind!r}")


# ---------------------------------------------------------------------------
# Output plumbing


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


@dataclass
class RunManifest:
    config: dict
    resolved: dict
    master_seed: int
    version: str = __version__
    started: str = ""
    finished: str = ""
    outputs: list = field(default_factory=list)

    def add(self, path: Path) -> None:
        self.outputs.append({"path": path.name, "sha256": _sha256(path)})

    def write(self, path: Path) -> None:
        payload = {"config": self.config, "resolved": self.resolved,
                   "master_seed": self.master_seed, "version": self.version,
                   "started": self.started, "finished": self.finished,
                   "outputs": self.outputs}
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write(out_dir: Path, name: str, text: str, manifest: RunManifest) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    path.write_text(text)
    manifest.add(path)
    return path


PLOT_SCRIPT = '''#!/usr/bin/env python3
"""Plot every CSV in this directory (one figure per file)."""
import csv
import pathlib

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt


def numeric(s):
    try:
        float(s)
        return True
    except (TypeError, ValueError):
        return False


for path in sorted(pathlib.Path(__file__).parent.glob("*.csv")):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        continue
    cols = [c for c in rows[0] if c and all(numeric(r[c]) for r in rows)]
    if len(cols) < 2:
        continue
    xs = [float(r[cols[0]]) for r in rows]
    fig, ax = plt.subplots()
    for c in cols[1:]:
        ax.plot(xs, [float(r[c]) for r in rows], label=c, marker=".")
    ax.set_xlabel(cols[0])
    ax.legend()
    fig.savefig(path.with_suffix(".png"), dpi=120)
    plt.close(fig)
'''


# ---------------------------------------------------------------------------
# Commands


def cmd_build(args) -> int:
    cfg = load_config(args.config)
    validate_config(cfg, "build")
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    cap = args.cap_vertices or int(cfg.get("cap_vertices",
                                           DEFAULT_VERTEX_CAP))
    g = graph_from_config(cfg, seed, cap)
    out = Path(args.out or "graph.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(g.to_json() + "\n")
    print(f"wrote {out}: {g.n_interior} interior / {g.n_vertices} vertices, "
          f"{g.n_edges()} edges")
    return 0


def cmd_resist(args) -> int:
    cfg = load_config(args.config)
    validate_config(cfg, "resist")
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    cap = args.cap_vertices or int(cfg.get("cap_vertices",
                                           DEFAULT_VERTEX_CAP))
    manifest = _manifest(cfg, seed, args)
    g = graph_from_config(cfg, seed, cap)
    origin = cfg.get("origin")
    origin = tuple(origin) if isinstance(origin, list) else origin
    report = green_kernel(g, origin)
    out_dir = Path(args.out or "resist_out")
    _write(out_dir, "potential.csv", report.to_csv(), manifest)
    _write(out_dir, "summary.json",
           json.dumps(report.summary(), indent=2) + "\n", manifest)
    _finish(manifest, out_dir, args)
    print(f"g_root={report.green_root!r} resistance={report.resistance_root!r}"
          f" g_max={report.g_max!r}")
    return 0


def cmd_criterion(args) -> int:
    cfg = load_config(args.config)
    validate_config(cfg, "criterion")
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    manifest = _manifest(cfg, seed, args)
    oracle = oracle_from_config(cfg.get("family", cfg))
    radii = [int(r) for r in cfg["radii"]]
    kwargs = {}
    if args.slope_bounded is not None:
        kwargs["slope_bounded"] = args.slope_bounded
    if args.slope_growing is not None:
        kwargs["slope_growing"] = args.slope_growing
    scan = crit.comb_slab_scan(oracle, radii, **kwargs)
    out_dir = Path(args.out or "criterion_out")
    _write(out_dir, "scan.csv", scan.to_csv(), manifest)
    _write(out_dir, "verdict.json", scan.to_json() + "\n", manifest)
    _finish(manifest, out_dir, args)
    print(f"verdict={scan.verdict} slope={scan.slope:.4f}")
    return 0


def cmd_collide(args) -> int:
    cfg = load_config(args.config)
    validate_config(cfg, "collide")
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    reps = args.replicates or int(cfg.get("replicates", 100))
    cap = args.cap_vertices or int(cfg.get("cap_vertices",
                                           DEFAULT_VERTEX_CAP))
    manifest = _manifest(cfg, seed, args)
    horizons = sorted(int(h) for h in cfg.get("horizons",
                                              [cfg.get("horizon", 1000)]))
    fam = cfg.get("family", {})
    walkers = int(cfg.get("walkers", 2))
    out_dir = Path(args.out or "collide_out")

    if walkers == 3:
        oracle = oracle_from_config(fam)
        out = walks.comb_triple_batch(oracle, reps, horizons, seed)
        z = out["z3"]
        zt = np.zeros_like(z)
        exit_t = None
        last = np.full(reps, -1)
    elif fam.get("family") in ("percolation", "ust", "kesten") \
            or cfg.get("region"):
        g = graph_from_config(cfg, seed, cap)
        killed = bool(cfg.get("killed", bool(cfg.get("region"))))
        out = walks.csr_pair_batch(g, reps, horizons, seed, killed=killed)
        z, zt, exit_t, last = (out["z"], out["z_edge"], out["exit_times"],
                               out["last_collision"])
    else:
        oracle = oracle_from_config(fam)
        out = walks.comb_pair_batch(oracle, reps, horizons, seed)
        z, zt, exit_t, last = (out["z"], out["z_edge"], None,
                               out["last_collision"])

    lines = []
    for i in range(reps):
        rec = {"stream_id": i, "Z": int(z[i, -1]), "edgeZ": int(zt[i, -1]),
               "exit_time": (int(exit_t[i].max()) if exit_t is not None
                             else None),
               "last_collision_time": int(last[i])}
        lines.append(json.dumps(rec))
    _write(out_dir, "records.jsonl", "\n".join(lines) + "\n", manifest)
    curve_lines = ["horizon,mean_z,median_z"]
    for j, h in enumerate(out["horizons"]):
        col = z[:, j]
        curve_lines.append(f"{h},{col.mean()!r},{float(np.median(col))!r}")
    _write(out_dir, "growth.csv", "\n".join(curve_lines) + "\n", manifest)
    if args.dump_paths:
        _dump_paths(cfg, seed, min(reps, 16), horizons[-1], out_dir, manifest)
    _finish(manifest, out_dir, args)
    print(f"wrote {reps} records to {out_dir}")
    return 0


def _dump_paths(cfg, seed, reps, T, out_dir: Path, manifest) -> None:
    """Binary trajectory dump: per replicate, a length-prefixed array of the
    walker-pair vertex encodings (int64 coordinate tuples)."""
    import struct

    from .rng import RngStream
    oracle = oracle_from_config(cfg.get("family", {}))
    fam = getattr(oracle, "family", "")
    start = ((), 0) if fam == "spherical_tree" else \
        ((0, 0, 0) if fam == "comb2d" else (0, 0))
    chunks = []
    for i in range(reps):
        base = RngStream(seed, i)
        for w in range(2):
            traj = walks.walk(oracle, start, T, base.substream(w))
            flat = []
            for v in traj:
                flat.extend(int(c) for c in (v if isinstance(v[0], int)
                                             else list(v[0]) + [v[1]]))
            chunks.append(struct.pack("<q", len(flat)))
            chunks.append(np.array(flat, dtype="<i8").tobytes())
    path = out_dir / "paths.bin"
    path.write_bytes(b"".join(chunks))
    manifest.add(path)


def cmd_experiment(args) -> int:
    cfg = load_config(args.config)
    validate_config(cfg, "experiment")
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    reps = args.replicates or int(cfg.get("replicates", 1000))
    workers = args.threads or int(cfg.get("threads", 1))
    _set_threads(workers)
    manifest = _manifest(cfg, seed, args,
                         resolved={"replicates": reps, "threads": workers})
    out_dir = Path(args.out or "experiment_out")
    kind = cfg.get("experiment")

    if kind == "growth-curve":
        oracle = oracle_from_config(cfg["family"])
        curve = xp.collision_growth_curve(oracle, cfg["horizons"], reps, seed)
        _write(out_dir, "growth.csv", curve.to_csv(), manifest)
    elif kind == "kolmogorov":
        off = offspring_from_config(cfg.get("offspring", {}))
        res = xp.kolmogorov_check(off, int(cfg.get("n", 50)), reps, seed,
                                  workers=workers)
        _write(out_dir, "kolmogorov.csv", _results_csv([res]), manifest)
    elif kind == "set-collision":
        oracle = oracle_from_config(cfg["family"])
        rows = []
        for band in cfg["bands"]:
            target = xp.CombBandSpec(
                k=int(band["k"]), h=int(band["h"]),
                horizon=band.get("horizon"),
                window_factor=float(band.get("window_factor", 4.0)))
            rows.append(xp.set_collision_probability(
                oracle, target, int(band.get("replicates", reps)), seed))
        _write(out_dir, "set_collision.csv", _results_csv(rows), manifest)
    elif kind == "transition-profile":
        fam = cfg["family"]
        prof = xp.transition_profile(
            CombSpec(profile=profile_from_config(fam.get("profile", {}))),
            int(cfg["k"]), cfg["times"], master_seed=seed,
            exact=bool(cfg.get("exact", True)), replicates=reps)
        _write(out_dir, "profile.csv", prof.to_csv(), manifest)
    elif kind == "percolation-collisions":
        run = xp.percolation_collision_run(
            float(cfg["p"]), int(cfg["L"]), int(cfg["T"]),
            int(cfg.get("clusters", 4)), int(cfg.get("pairs", reps)),
            seed, horizons=cfg.get("horizons"))
        _write(out_dir, "growth.csv", run.curve.to_csv(), manifest)
        _write(out_dir, "increment.json",
               json.dumps(run.increment.to_dict(), indent=2) + "\n", manifest)
        percsv = ["cluster,n_vertices,density,mean_z_final,box_touches"]
        for row in run.per_cluster:
            percsv.append(f"{row['cluster']},{row['n_vertices']},"
                          f"{row['density']!r},{row['mean_z_final']!r},"
                          f"{row['box_touches']}")
        _write(out_dir, "clusters.csv", "\n".join(percsv) + "\n", manifest)
    elif kind == "j-lambda":
        rows = _j_lambda_rows(cfg, reps, seed)
        _write(out_dir, "j_lambda.csv", _results_csv(rows), manifest)
    elif kind == "nash-williams":
        spec = tree_spec_from_config(cfg["family"])
        rows = nash_williams_cutsum(spec, int(cfg["n_max"]))
        lines = ["n,cut_edges,inverse,partial_sum,comparison_partial"]
        for r in rows:
            lines.append(f"{r.n},{r.cut_edges},{r.inverse!r},"
                         f"{r.partial_sum!r},{r.comparison_partial!r}")
        _write(out_dir, "cutsum.csv", "\n".join(lines) + "\n", manifest)
    else:
        raise ConfigError(f"unknown experiment {kind!r}")

    _finish(manifest, out_dir, args)
    print(f"experiment {kind}: outputs in {out_dir}")
    return 0


def _j_lambda_rows(cfg, reps, seed):
    fam = cfg["family"]
    kind = fam.get("family")
    r = int(cfg["r"])
    cap = int(cfg.get("cap_vertices", DEFAULT_VERTEX_CAP))
    if kind == "kesten":
        off = offspring_from_config(fam.get("offspring", {}))
        height = int(fam.get("height", r + 2))

        def sampler(i):
            return sample_kesten_tree(off, height, seed, i,
                                      subtree_depth_cap=int(
                                          fam.get("subtree_depth_cap", r + 1)),
                                      vertex_cap=cap).graph
    elif kind == "ust":
        def sampler(i):
            return sample_ust(int(fam["L"]), seed, i)
    else:
        raise ConfigError("j-lambda runs on kesten or ust samplers")
    return [crit.estimate_j_prob(sampler, r, float(lam), reps, seed)
            for lam in cfg.get("lambdas", [8.0])]


def _results_csv(rows) -> str:
    lines = ["label,kind,estimate,se,ci_lo,ci_hi,replicates,extra"]
    for res in rows:
        d = res.to_dict()
        extra = {k: v for k, v in d.items()
                 if k not in ("label", "kind", "estimate", "se", "ci_lo",
                              "ci_hi", "replicates", "master_seed")}
        lines.append(f"\"{d['label']}\",{d['kind']},{d['estimate']!r},"
                     f"{d['se']!r},{d['ci_lo']!r},{d['ci_hi']!r},"
                     f"{d['replicates']},\"{json.dumps(extra)}\"")
    return "\n".join(lines) + "\n"


def _manifest(cfg, seed, args, resolved=None) -> RunManifest:
    m = RunManifest(config=cfg, resolved=resolved or {}, master_seed=seed)
    m.started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    return m


def _finish(manifest: RunManifest, out_dir: Path, args) -> None:
    if getattr(args, "emit_plot_script", False):
        path = out_dir / "plot.py"
        path.write_text(PLOT_SCRIPT)
    manifest.finished = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    manifest.write(out_dir / "manifest.json")


def _set_threads(n: int) -> None:
    try:
        import numba
        numba.set_num_threads(max(1, min(n, numba.config.NUMBA_NUM_THREADS)))
    except Exception:
        pass


# ---------------------------------------------------------------------------


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="collidewalks",
        description="Collision statistics of random walks on recurrent "
                    "graphs: exact kernels, criteria scans, Monte Carlo.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("build", cmd_build), ("resist", cmd_resist),
                     ("criterion", cmd_criterion), ("collide", cmd_collide),
                     ("experiment", cmd_experiment)):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--out", default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--replicates", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--cap-vertices", type=int, default=None)
        p.add_argument("--emit-plot-script", action="store_true")
        if name == "criterion":
            p.add_argument("--slope-bounded", type=float, default=None)
            p.add_argument("--slope-growing", type=float, default=None)
        if name == "collide":
            p.add_argument("--dump-paths", action="store_true")
        p.set_defaults(fn=fn)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, DisconnectedRootError, KeyError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (SolverError, ResidualMassError, RegionExplosionError,
            ValueError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
