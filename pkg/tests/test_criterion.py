import math

import numpy as np
import pytest

from collidewalks.criterion import (SLOPE_BOUNDED, comb_slab_region,
                                    comb_slab_scan, estimate_j_prob,
                                    green_ratio_scan, j_lambda, kesten_region)
from collidewalks.families import (CombSpec, PowerProfile, SphericalTreeSpec,
                                   comb_oracle, deterministic_offspring,
                                   geometric_offspring, line_oracle,
                                   sample_kesten_tree, sample_ust,
                                   spherical_tree_oracle)
from collidewalks.graphs import extract_ball, extract_region
from collidewalks.potential import green_root_value


def test_scan_line_ratio_bounded_by_two():
    scan = comb_slab_scan(line_oracle(), [4, 8, 16])
    assert scan.verdict == "bounded-ratio"
    for row in scan.rows:
        # interior maximum of the arc resistance sits at the center
        assert 1.0 - 1e-12 <= row.ratio <= 2.0 + 1e-9


def test_scan_values_match_closed_form():
    o = comb_oracle(CombSpec(PowerProfile(1.0, 1.0)))
    scan = comb_slab_scan(o, [4, 8])
    for row in scan.rows:
        r = row.r
        assert row.g_root == pytest.approx((r + 1) / 2, abs=1e-9)
        spine_end = (2 * r + 1) / (2 * r + 2)
        assert row.g_max == pytest.approx(r + spine_end, abs=1e-9)
        assert row.argmax_vertex in ((r, r), (-r, r))


def test_scan_contrast_between_profiles():
    o1 = comb_oracle(CombSpec(PowerProfile(1.0, 1.0)))
    o2 = comb_oracle(CombSpec(PowerProfile(1.0, 2.0)))
    s1 = comb_slab_scan(o1, [4, 8, 16, 32])
    s2 = comb_slab_scan(o2, [4, 8, 16, 32])
    assert s1.verdict == "bounded-ratio" and s1.slope < SLOPE_BOUNDED
    assert s2.verdict == "growing-ratio" and s2.slope > 0.5
    assert all(w.ratio >= 1.0 for w in s1.rows + s2.rows)
    assert all(b.g_root >= a.g_root
               for a, b in zip(s2.rows, s2.rows[1:]))


def test_scan_rows_mark_failures():
    o = comb_oracle(CombSpec(PowerProfile(1.0, 1.0)))
    regions = [(4, comb_slab_region(4)),
               (8, comb_slab_region(8))]
    # an origin outside one region marks that row failed, scan continues
    from collidewalks.graphs import FiniteRegion
    bad = FiniteRegion(member=lambda v: 1 <= v[0] <= 3, root=(2, 0),
                       label="offset")
    scan = green_ratio_scan(o, (0, 0), regions + [(12, bad)])
    assert [w.failed for w in scan.rows] == [False, False, True]
    assert scan.verdict in ("bounded-ratio", "inconclusive")


def test_j_lambda_half_line():
    from collidewalks.families import half_line_oracle
    o = half_line_oracle()
    g = extract_ball(o, ((), 0), 8)
    assert j_lambda(g, 8, 1.0)


def test_j_lambda_binary_tree_false():
    # branching at every level: the root resistance saturates below 2
    spec = SphericalTreeSpec(lengths=(1,) * 10)
    o = spherical_tree_oracle(spec)
    g = extract_ball(o, ((), 0), 8)
    r = green_root_value(g, ((), 0))
    assert r == pytest.approx(2.0 - 2.0 ** -8, abs=1e-9)
    assert not j_lambda(g, 8, 1.0)
    assert j_lambda(g, 8, 8.0)         # monotone in lambda


def test_j_lambda_radius_zero():
    g = extract_ball(line_oracle(), (0, 0), 0)
    assert j_lambda(g, 0, 1.0)


def test_j_lambda_monotone_in_lambda():
    g = sample_ust(6, seed=3)
    oracle = g.as_oracle()
    ball = extract_ball(oracle, (0, 0), 4)
    values = [j_lambda(ball, 4, lam) for lam in (1.0, 2.0, 4.0, 8.0)]
    for a, b in zip(values, values[1:]):
        assert b or not a


def test_estimate_j_prob_deterministic_sampler():
    from collidewalks.families import half_line_oracle
    host = extract_ball(half_line_oracle(), ((), 0), 12)

    def sampler(i):
        return host

    res = estimate_j_prob(sampler, 6, 1.0, 20, master_seed=0)
    assert res.estimate == 1.0
    assert res.replicates == 20


def test_estimate_j_prob_kesten_monotone_in_lambda():
    off = geometric_offspring()

    def sampler(i):
        return sample_kesten_tree(off, height=18, seed=5, stream_id=i,
                                  subtree_depth_cap=16).graph

    lo = estimate_j_prob(sampler, 16, 2.0, 60, master_seed=0)
    hi = estimate_j_prob(sampler, 16, 8.0, 60, master_seed=0)
    assert hi.estimate >= lo.estimate
    assert 0.0 <= lo.estimate <= 1.0


def test_kesten_region_path_tree():
    tree = sample_kesten_tree(deterministic_offspring(1), height=30, seed=1)
    info = kesten_region(tree, 10, eps=0.5)
    assert info.n_deep == 0
    assert info.member_count == 11
    g = extract_region(tree.graph.as_oracle(), info.region)
    assert g.n_interior == 11


def test_kesten_region_identity_with_resistance():
    tree = sample_kesten_tree(geometric_offspring(), height=40, seed=9,
                              subtree_depth_cap=60)
    info = kesten_region(tree, 12, eps=0.4)
    g = extract_region(tree.graph.as_oracle(), info.region)
    gr = green_root_value(g, tree.graph.vertices[0])
    from collidewalks.potential import effective_resistance
    rv = effective_resistance(g, [g.root], g.boundary_indices())
    assert abs(gr - rv.value) < 1e-9
    # the only exit from the region is along the backbone: r+1 to leave
    assert gr == pytest.approx(13.0, abs=1e-9)


def test_kesten_region_deep_count_decreases_with_eps():
    off = geometric_offspring()
    counts = {}
    for eps in (0.4, 0.1):
        deep = 0
        for i in range(40):
            tree = sample_kesten_tree(off, height=26, seed=77, stream_id=i,
                                      subtree_depth_cap=300)
            deep += kesten_region(tree, 25, eps=eps).n_deep
        counts[eps] = deep
    assert counts[0.1] <= counts[0.4]
