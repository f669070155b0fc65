import json
import struct
from pathlib import Path

import numpy as np
import pytest

from collidewalks.cli import main
from collidewalks.graphs import FiniteGraph


def write(tmp_path, name, cfg):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def manifest_digests(out_dir):
    payload = json.loads((Path(out_dir) / "manifest.json").read_text())
    return {o["path"]: o["sha256"] for o in payload["outputs"]}


def test_build_comb_slab(tmp_path):
    cfg = write(tmp_path, "b.json", {
        "family": "comb", "profile": {"kind": "power", "C": 1, "alpha": 1},
        "region": {"kind": "slab", "r": 4}})
    out = tmp_path / "g.json"
    assert main(["build", "--config", cfg, "--out", str(out)]) == 0
    g = FiniteGraph.from_json(out.read_text())
    assert g.n_interior == 29          # sum over |x|<=4 of (|x|+1)
    assert g.n_edges() == 30


def test_build_ust(tmp_path):
    cfg = write(tmp_path, "u.json", {"family": "ust", "L": 1, "seed": 7})
    out = tmp_path / "u.json.out"
    assert main(["build", "--config", cfg, "--out", str(out)]) == 0
    g = FiniteGraph.from_json(out.read_text())
    assert g.n_vertices == 9 and g.n_edges() == 8


def test_invalid_profile_is_config_error(tmp_path):
    cfg = write(tmp_path, "b.json", {
        "family": "comb", "profile": {"kind": "power", "C": 1, "alpha": -1},
        "region": {"kind": "slab", "r": 2}})
    assert main(["build", "--config", cfg, "--out",
                 str(tmp_path / "x.json")]) == 2


def test_schema_violation_is_config_error(tmp_path):
    cfg = write(tmp_path, "c.json", {"radii": "not-a-list"})
    assert main(["criterion", "--config", cfg,
                 "--out", str(tmp_path / "o")]) == 2


def test_cap_exceeded_is_numerical_failure(tmp_path):
    cfg = write(tmp_path, "b.json", {
        "family": "comb", "profile": {"kind": "power", "C": 1, "alpha": 1},
        "region": {"kind": "slab", "r": 500}})
    code = main(["build", "--config", cfg, "--out", str(tmp_path / "x.json"),
                 "--cap-vertices", "100"])
    assert code == 3


def test_resist_outputs(tmp_path):
    cfg = write(tmp_path, "r.json", {
        "family": "comb", "profile": {"kind": "power", "C": 1, "alpha": 1},
        "region": {"kind": "slab", "r": 3}})
    out = tmp_path / "res"
    assert main(["resist", "--config", cfg, "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["green_root"] == pytest.approx(2.0)
    csv = (out / "potential.csv").read_text().splitlines()
    assert csv[0] == "vertex,g_diag,g_root_row"
    assert len(csv) == 1 + summary["n_interior"]
    assert (out / "manifest.json").exists()


def test_criterion_command(tmp_path):
    cfg = write(tmp_path, "c.json", {
        "family": {"family": "comb",
                   "profile": {"kind": "power", "C": 1, "alpha": 2}},
        "radii": [4, 8, 16]})
    out = tmp_path / "crit"
    assert main(["criterion", "--config", cfg, "--out", str(out)]) == 0
    verdict = json.loads((out / "verdict.json").read_text())
    assert verdict["verdict"] == "growing-ratio"


def test_collide_records_and_growth(tmp_path):
    cfg = write(tmp_path, "w.json", {
        "family": {"family": "line"}, "horizons": [50, 200],
        "replicates": 40, "seed": 3})
    out = tmp_path / "col"
    assert main(["collide", "--config", cfg, "--out", str(out)]) == 0
    lines = (out / "records.jsonl").read_text().splitlines()
    assert len(lines) == 40
    rec = json.loads(lines[0])
    assert {"stream_id", "Z", "edgeZ", "exit_time",
            "last_collision_time"} <= set(rec)
    growth = (out / "growth.csv").read_text().splitlines()
    assert growth[0] == "horizon,mean_z,median_z"
    assert len(growth) == 3


def test_collide_killed_region(tmp_path):
    cfg = write(tmp_path, "w.json", {
        "family": {"family": "line"}, "region": {"kind": "slab", "r": 2},
        "horizons": [100], "replicates": 25, "seed": 4, "killed": True})
    out = tmp_path / "colk"
    assert main(["collide", "--config", cfg, "--out", str(out)]) == 0
    recs = [json.loads(l) for l in
            (out / "records.jsonl").read_text().splitlines()]
    assert all(r["exit_time"] is not None and r["exit_time"] >= 2
               for r in recs)


def test_dump_paths(tmp_path):
    cfg = write(tmp_path, "w.json", {
        "family": {"family": "line"}, "horizons": [16],
        "replicates": 4, "seed": 3})
    out = tmp_path / "colp"
    assert main(["collide", "--config", cfg, "--out", str(out),
                 "--dump-paths"]) == 0
    blob = (out / "paths.bin").read_bytes()
    count = struct.unpack_from("<q", blob, 0)[0]
    assert count == 17 * 2             # 17 positions, 2 coordinates each


def test_triple_collide(tmp_path):
    cfg = write(tmp_path, "w3.json", {
        "family": {"family": "line"}, "walkers": 3, "horizons": [64],
        "replicates": 10, "seed": 5})
    out = tmp_path / "col3"
    assert main(["collide", "--config", cfg, "--out", str(out)]) == 0
    recs = [json.loads(l) for l in
            (out / "records.jsonl").read_text().splitlines()]
    assert all(r["Z"] >= 1 for r in recs)


def test_experiment_growth_reproducible_across_threads(tmp_path):
    cfg = write(tmp_path, "e.json", {
        "experiment": "growth-curve",
        "family": {"family": "comb",
                   "profile": {"kind": "power", "C": 1, "alpha": 1}},
        "horizons": [100, 400], "replicates": 60, "seed": 9})
    digests = []
    for threads, name in ((1, "a"), (4, "b"), (16, "c")):
        out = tmp_path / name
        assert main(["experiment", "--config", cfg, "--out", str(out),
                     "--threads", str(threads)]) == 0
        digests.append(manifest_digests(out))
    assert digests[0] == digests[1] == digests[2]
    # re-running reproduces the digests byte for byte
    out = tmp_path / "a2"
    assert main(["experiment", "--config", cfg, "--out", str(out)]) == 0
    assert manifest_digests(out) == digests[0]


def test_experiment_nash_williams(tmp_path):
    cfg = write(tmp_path, "nw.json", {
        "experiment": "nash-williams",
        "family": {"beta": 2.0, "depth_cap": 3}, "n_max": 50})
    out = tmp_path / "nw"
    assert main(["experiment", "--config", cfg, "--out", str(out)]) == 0
    rows = (out / "cutsum.csv").read_text().splitlines()[1:]
    sums = [float(r.split(",")[3]) for r in rows]
    assert sums == sorted(sums) and len(sums) == 50


def test_experiment_j_lambda(tmp_path):
    cfg = write(tmp_path, "j.json", {
        "experiment": "j-lambda",
        "family": {"family": "kesten", "offspring": {"kind": "geometric"},
                   "height": 12, "subtree_depth_cap": 10},
        "r": 10, "lambdas": [4.0, 8.0], "replicates": 25, "seed": 2})
    out = tmp_path / "j"
    assert main(["experiment", "--config", cfg, "--out", str(out)]) == 0
    rows = (out / "j_lambda.csv").read_text().splitlines()
    assert len(rows) == 3
    est = [float(r.split(",")[2]) for r in rows[1:]]
    assert est[1] >= est[0]


def test_emit_plot_script(tmp_path):
    cfg = write(tmp_path, "e.json", {
        "experiment": "kolmogorov", "offspring": {"kind": "geometric"},
        "n": 10, "replicates": 200, "seed": 1})
    out = tmp_path / "plots"
    assert main(["experiment", "--config", cfg, "--out", str(out),
                 "--emit-plot-script"]) == 0
    assert (out / "plot.py").exists()
    compile((out / "plot.py").read_text(), "plot.py", "exec")
