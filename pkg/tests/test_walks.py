import math
from fractions import Fraction

import numpy as np
import pytest

from collidewalks.criterion import comb_slab_region
from collidewalks.families import (CombSpec, InfiniteProfile, PowerProfile,
                                   SphericalTreeSpec, comb_oracle,
                                   line_oracle, sample_percolation_cluster,
                                   spherical_tree_oracle)
from collidewalks.graphs import ExplicitOracle, FiniteRegion, extract_region
from collidewalks.potential import exact_pair_expectation, green_root_value
from collidewalks.rng import RngStream
from collidewalks.walks import (bd_chain_densities,
                                bd_monotone_coupling_check, comb_pair_batch,
                                comb_positions_batch, comb_triple_batch,
                                csr_pair_batch, first_hit_zero_pmf,
                                killed_pair_collisions, pair_collisions,
                                return_probability_exact, tree_pair_batch,
                                tree_reduction_check, triple_collisions,
                                walk)


def pair_rngs(seed, i):
    base = RngStream(seed, i)
    return base.substream(0), base.substream(1)


# ---------------------------------------------------------------------------
# Single walks


def test_walk_horizon_zero():
    assert walk(line_oracle(), (0, 0), 0, RngStream(1, 0)) == [(0, 0)]


def test_walk_on_k2_alternates():
    k2 = ExplicitOracle({0: [1], 1: [0]}, family="k2")
    traj = walk(k2, 0, 6, RngStream(1, 0))
    assert traj == [0, 1, 0, 1, 0, 1, 0]


def test_walk_moments_on_line():
    out = comb_positions_batch(line_oracle(), 4000, [400], master_seed=5)
    x = out["x"][:, 0]
    assert abs(x.mean()) < 3 * math.sqrt(400 / 4000)
    assert abs(x.var() / 400 - 1.0) < 0.1


def test_walk_determinism():
    o = comb_oracle(CombSpec(PowerProfile(1.0, 1.0)))
    t1 = walk(o, (0, 0), 50, RngStream(3, 8))
    t2 = walk(o, (0, 0), 50, RngStream(3, 8))
    assert t1 == t2


# ---------------------------------------------------------------------------
# Pair collisions


def test_pair_t0_same_start():
    rec = pair_collisions(line_oracle(), (0, 0), (0, 0), 0, pair_rngs(1, 0))
    assert rec.z == 1 and rec.z_edge == 0


def test_pair_on_k2_forced():
    k2 = ExplicitOracle({0: [1], 1: [0]}, family="k2")
    rec = pair_collisions(k2, 0, 0, 10, pair_rngs(1, 0))
    assert rec.z == 11 and rec.z_edge == 10
    assert rec.last_collision_time == 10


def test_pair_expected_collisions_line_t2():
    # E Z(2) = 1 + 1/2 + 3/8 for two walks from the origin
    n = 40000
    total = 0
    out = comb_pair_batch(line_oracle(), n, [2], master_seed=17)
    mean = out["z"][:, 0].mean()
    se = out["z"][:, 0].std(ddof=1) / math.sqrt(n)
    assert abs(mean - 15 / 8) <= 3.5 * se


def test_collision_times_recorded():
    rec = pair_collisions(line_oracle(), (0, 0), (0, 0), 100,
                          pair_rngs(2, 3), record_times=True)
    assert len(rec.collision_times) == rec.z
    assert rec.collision_times[0] == 0
    assert rec.collision_times == sorted(rec.collision_times)


def test_undirected_crossing_flag():
    k2 = ExplicitOracle({0: [1], 1: [0]}, family="k2")
    rec = pair_collisions(k2, 0, 1, 9, pair_rngs(1, 0),
                          count_undirected=True)
    # started on opposite ends: never co-located, but they swap through the
    # same edge on each of the 9 steps
    assert rec.z == 0 and rec.z_edge == 0
    assert rec.z_edge_undirected == 9


# ---------------------------------------------------------------------------
# Killed pairs


def test_killed_point_region():
    g = extract_region(line_oracle(), FiniteRegion(
        member=lambda v: v == (0, 0), root=(0, 0), label="pt"))
    for i in range(5):
        rec = killed_pair_collisions(g, (0, 0), 50, pair_rngs(4, i))
        assert rec.z == 1 and rec.z_edge in (0, 1)
        assert rec.exit_times[0] == 1 and rec.exit_times[1] == 1


def test_killed_kernel_matches_python():
    o = comb_oracle(CombSpec(PowerProfile(1.0, 1.0)))
    g = extract_region(o, comb_slab_region(2))
    batch = csr_pair_batch(g, 25, [40, 200], master_seed=21, killed=True)
    for i in range(25):
        rec = killed_pair_collisions(g, (0, 0), 200, pair_rngs(21, i))
        assert rec.z == batch["z"][i, 1]
        assert rec.z_edge == batch["z_edge"][i, 1]
        assert max(rec.exit_times) == batch["exit_times"][i].max()
        assert rec.last_collision_time == batch["last_collision"][i]


def test_unkilled_kernel_matches_python():
    o = comb_oracle(CombSpec(PowerProfile(1.0, 1.0)))
    batch = comb_pair_batch(o, 25, [150], master_seed=33)
    for i in range(25):
        rec = pair_collisions(o, (0, 0), (0, 0), 150, pair_rngs(33, i))
        assert rec.z == batch["z"][i, 0]
        assert rec.z_edge == batch["z_edge"][i, 0]


def test_full_comb_kernel_matches_python():
    o = comb_oracle(CombSpec(InfiniteProfile()))
    batch = comb_pair_batch(o, 15, [120], master_seed=8)
    for i in range(15):
        rec = pair_collisions(o, (0, 0), (0, 0), 120, pair_rngs(8, i))
        assert rec.z == batch["z"][i, 0]


def test_tree_kernel_matches_python():
    spec = SphericalTreeSpec(lengths=(1, 2, 4))
    oracle = spherical_tree_oracle(spec)
    batch = tree_pair_batch(spec, 15, (0, 150), (0, 10**9), master_seed=44)
    for i in range(15):
        rec = pair_collisions(oracle, ((), 0), ((), 0), 150, pair_rngs(44, i))
        assert rec.z == batch["z"][i]


def test_monte_carlo_matches_exact_pair_expectation():
    o = comb_oracle(CombSpec(PowerProfile(1.0, 1.0)))
    g = extract_region(o, comb_slab_region(2))
    pe = exact_pair_expectation(g, (0, 0))
    n = 30000
    batch = csr_pair_batch(g, n, [4000], master_seed=55, killed=True)
    for col, exact in ((batch["z"][:, 0], pe.ez),
                       (batch["z_edge"][:, 0], pe.ez_edge)):
        mean = col.mean()
        se = col.std(ddof=1) / math.sqrt(n)
        assert abs(mean - exact) <= 3 * se


# ---------------------------------------------------------------------------
# Triples


def test_triple_t0():
    rec = triple_collisions(line_oracle(), (0, 0), 0,
                            [RngStream(1, 0).substream(w) for w in range(3)])
    assert rec.triple == 1


def test_triple_kernel_matches_python():
    o = comb_oracle(CombSpec(PowerProfile(1.0, 1.0)))
    batch = comb_triple_batch(o, 10, [80], master_seed=66)
    for i in range(10):
        base = RngStream(66, i)
        rec = triple_collisions(o, (0, 0), 80,
                                [base.substream(w) for w in range(3)])
        assert rec.triple == batch["z3"][i, 0]


# ---------------------------------------------------------------------------
# Distance chain on spherically symmetric trees


def test_bd_chain_first_step_reflects():
    spec = SphericalTreeSpec(lengths=(2, 3))
    P = bd_chain_densities(spec, 3)
    assert P[1, 1] == 1.0
    assert P[0, 0] == 1.0


def test_bd_up_probability_at_branch_points():
    from collidewalks.walks import bd_up_probabilities
    spec = SphericalTreeSpec(lengths=(2, 3))
    up = bd_up_probabilities(spec, 8)
    assert up[0] == 1.0
    assert up[2] == pytest.approx(2 / 3)
    assert up[5] == pytest.approx(2 / 3)
    assert up[3] == 0.5


def test_two_level_reduction_value():
    # distance 2 just past the single branch point at distance 1:
    # chain mass 2/3 splits over two branches
    spec = SphericalTreeSpec(lengths=(1,))
    P = bd_chain_densities(spec, 2)
    assert P[2, 2] == pytest.approx(2 / 3)
    worst, _ = tree_reduction_check(spec, 6)
    assert worst < 1e-14


def test_reduction_identity_moderate():
    for lengths in ((1, 2, 4), (2, 3, 5)):
        worst, n = tree_reduction_check(SphericalTreeSpec(lengths=lengths), 24)
        assert worst < 1e-12
        assert n > 50


def test_bd_monotone_coupling():
    for lengths in ((2, 3, 5, 7), (1, 2, 4), (1, 1, 1, 1, 1, 1)):
        exact_viol, two_viol = bd_monotone_coupling_check(
            SphericalTreeSpec(lengths=lengths), t_max=50, x_max=40)
        assert exact_viol == 0
        assert two_viol == 0


# ---------------------------------------------------------------------------
# Ballot identity (exact arithmetic)


def test_ballot_identity_exact():
    for h in range(1, 7):
        pmf = first_hit_zero_pmf(h, 40)
        for s in range(1, 41):
            lhs = pmf[s]
            rhs = Fraction(h, s) * return_probability_exact(h, s)
            assert lhs == rhs


def test_first_hit_pmf_is_subprobability():
    pmf = first_hit_zero_pmf(3, 200)
    total = sum(pmf.values())
    assert 0 < total < 1
    assert pmf[1] == 0 and pmf[2] == 0
    assert pmf[3] == Fraction(1, 8)


# ---------------------------------------------------------------------------
# Stream discipline


def test_batches_are_thread_count_invariant():
    import numba
    o = comb_oracle(CombSpec(PowerProfile(1.0, 1.0)))
    saved = numba.get_num_threads()
    try:
        numba.set_num_threads(1)
        a = comb_pair_batch(o, 40, [500], master_seed=9)
        numba.set_num_threads(2)
        b = comb_pair_batch(o, 40, [500], master_seed=9)
    finally:
        numba.set_num_threads(saved)
    assert (a["z"] == b["z"]).all()
    assert (a["z_edge"] == b["z_edge"]).all()
