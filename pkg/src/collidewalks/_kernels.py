"""Compiled walk engines.

All kernels consume one uniform draw per walker per time step, select among
the lexicographically sorted neighbors by floor(u * degree), and derive the
draws from the same counter-based mixer as rng.RngStream, so a kernel
replicate reproduces the pure-Python walker step for step.  Replicate i uses
the pre-derived per-walker keys in keys[i, :]; outputs live in per-replicate
slots, so results are independent of the thread count.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

_GOLD = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 2.0**-53
_ONE = np.uint64(1)


@njit(cache=True, inline="always")
def _mix64(z):
    z = z + _GOLD
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True, inline="always")
def _uniform(key, counter):
    return float((_mix64(key ^ _mix64(counter)) >> _S11)) * _INV53


@njit(cache=True)
def mixer_probe(key, counters):
    """Expose the mixer for cross-checks against the Python implementation."""
    out = np.empty(len(counters), dtype=np.uint64)
    for i in range(len(counters)):
        out[i] = _mix64(key ^ _mix64(counters[i]))
    return out


# ---------------------------------------------------------------------------
# Comb walkers.  State (x, y); heights[x + off] is the tooth height over x.


@njit(cache=True, inline="always")
def _comb_step(x, y, f_here, u, two_sided):
    """One step from (x, y) given the tooth height f_here over x.

    Neighbor order is lexicographic in (x, y): spine with tooth is
    (x-1, 0) < (x, 1) < (x+1, 0); a two-sided spine inserts (x, -1) before
    (x, 1).
    """
    if y == 0:
        if two_sided:
            j = int(u * 4.0)
            if j <= 0:
                return x - 1, y
            if j == 1:
                return x, -1
            if j == 2:
                return x, 1
            return x + 1, y
        if f_here >= 1:
            j = int(u * 3.0)
            if j <= 0:
                return x - 1, y
            if j == 1:
                return x, 1
            return x + 1, y
        if u < 0.5:
            return x - 1, y
        return x + 1, y
    if y > 0:
        if y >= f_here and not two_sided:
            return x, y - 1
        if u < 0.5:
            return x, y - 1
        return x, y + 1
    # y < 0 only on two-sided teeth
    if u < 0.5:
        return x, y - 1
    return x, y + 1


@njit(cache=True, parallel=True)
def comb_pair_kernel(heights, off, keys, horizons,
                     ax0, ay0, bx0, by0, two_sided,
                     band_x, band_lo, band_hi):
    """Pairs of independent comb walks; collision counts at each horizon.

    Returns (z, zt, last_col, band_time): z[i, h] vertex collisions up to
    horizons[h] inclusive, zt[i, h] same-step edge collisions, last_col[i]
    the last coincidence time, band_time[i] the first collision inside the
    tooth band x == band_x, band_lo <= y <= band_hi (-1 if none; band_x set
    to a value outside the table disables the band).
    """
    n = keys.shape[0]
    nh = len(horizons)
    t_end = horizons[nh - 1]
    z = np.zeros((n, nh), dtype=np.int64)
    zt = np.zeros((n, nh), dtype=np.int64)
    last_col = np.full(n, -1, dtype=np.int64)
    band_time = np.full(n, -1, dtype=np.int64)
    for i in prange(n):
        ka = keys[i, 0]
        kb = keys[i, 1]
        ca = np.uint64(0)
        cb = np.uint64(0)
        xa, ya, xb, yb = ax0, ay0, bx0, by0
        zc = np.int64(0)
        ztc = np.int64(0)
        hp = 0
        for t in range(t_end + 1):
            hit = xa == xb and ya == yb
            if hit:
                zc += 1
                last_col[i] = t
                if (band_time[i] < 0 and xa == band_x
                        and ya >= band_lo and ya <= band_hi):
                    band_time[i] = t
            if hp < nh and t == horizons[hp]:
                # the edge count at horizon T covers the T steps taken
                z[i, hp] = zc
                zt[i, hp] = ztc
                hp += 1
            if t == t_end:
                break
            ua = _uniform(ka, ca)
            ca += _ONE
            xa, ya = _comb_step(xa, ya, heights[xa + off], ua, two_sided)
            ub = _uniform(kb, cb)
            cb += _ONE
            xb, yb = _comb_step(xb, yb, heights[xb + off], ub, two_sided)
            if hit and xa == xb and ya == yb:
                ztc += 1
    return z, zt, last_col, band_time


@njit(cache=True, parallel=True)
def comb_triple_kernel(heights, off, keys, horizons, two_sided):
    """Three independent comb walks from the origin; triple-coincidence
    counts at each horizon."""
    n = keys.shape[0]
    nh = len(horizons)
    t_end = horizons[nh - 1]
    z3 = np.zeros((n, nh), dtype=np.int64)
    for i in prange(n):
        ka, kb, kc = keys[i, 0], keys[i, 1], keys[i, 2]
        ca = np.uint64(0)
        cb = np.uint64(0)
        cc = np.uint64(0)
        xa = ya = xb = yb = xc = yc = np.int64(0)
        count = np.int64(0)
        hp = 0
        for t in range(t_end + 1):
            if xa == xb and ya == yb and xa == xc and ya == yc:
                count += 1
            if hp < nh and t == horizons[hp]:
                z3[i, hp] = count
                hp += 1
            if t == t_end:
                break
            ua = _uniform(ka, ca)
            ca += _ONE
            xa, ya = _comb_step(xa, ya, heights[xa + off], ua, two_sided)
            ub = _uniform(kb, cb)
            cb += _ONE
            xb, yb = _comb_step(xb, yb, heights[xb + off], ub, two_sided)
            uc = _uniform(kc, cc)
            cc += _ONE
            xc, yc = _comb_step(xc, yc, heights[xc + off], uc, two_sided)
    return z3


@njit(cache=True, parallel=True)
def comb_positions_kernel(heights, off, keys, times, two_sided):
    """Single comb walkers from the origin; position snapshots at ``times``."""
    n = len(keys)
    nt = len(times)
    xs = np.zeros((n, nt), dtype=np.int64)
    ys = np.zeros((n, nt), dtype=np.int64)
    t_end = times[nt - 1]
    for i in prange(n):
        key = keys[i]
        c = np.uint64(0)
        x = np.int64(0)
        y = np.int64(0)
        tp = 0
        for t in range(t_end + 1):
            if tp < nt and t == times[tp]:
                xs[i, tp] = x
                ys[i, tp] = y
                tp += 1
            u = _uniform(key, c)
            c += _ONE
            x, y = _comb_step(x, y, heights[x + off], u, two_sided)
    return xs, ys


# ---------------------------------------------------------------------------
# Generic CSR walkers (percolation clusters, extracted regions, ...)


@njit(cache=True, parallel=True)
def csr_pair_kernel(indptr, indices, absorbing, keys, horizons,
                    start_a, start_b, flagged):
    """Pairs of walks on an explicit graph, optionally killed.

    A walker landing on an absorbing vertex freezes there.  Collisions are
    counted only on non-absorbing vertices; the same-step edge count allows
    the joint step into a common absorbing vertex.  flagged marks vertices
    whose visits are tallied (box-edge contact logging).
    """
    n = keys.shape[0]
    nh = len(horizons)
    t_end = horizons[nh - 1]
    z = np.zeros((n, nh), dtype=np.int64)
    zt = np.zeros((n, nh), dtype=np.int64)
    exit_t = np.full((n, 2), -1, dtype=np.int64)
    last_col = np.full(n, -1, dtype=np.int64)
    touches = np.zeros(n, dtype=np.int64)
    for i in prange(n):
        ka = keys[i, 0]
        kb = keys[i, 1]
        ca = np.uint64(0)
        cb = np.uint64(0)
        va = start_a
        vb = start_b
        zc = np.int64(0)
        ztc = np.int64(0)
        hp = 0
        for t in range(t_end + 1):
            dead_a = absorbing[va]
            dead_b = absorbing[vb]
            if dead_a and exit_t[i, 0] < 0:
                exit_t[i, 0] = t
            if dead_b and exit_t[i, 1] < 0:
                exit_t[i, 1] = t
            if flagged[va]:
                touches[i] += 1
            if flagged[vb]:
                touches[i] += 1
            hit = (va == vb) and not dead_a
            if hit:
                zc += 1
                last_col[i] = t
            if hp < nh and t == horizons[hp]:
                z[i, hp] = zc
                zt[i, hp] = ztc
                hp += 1
            if dead_a and dead_b:
                # both frozen: counts are final, fill remaining horizons
                while hp < nh:
                    z[i, hp] = zc
                    zt[i, hp] = ztc
                    hp += 1
                break
            if t == t_end:
                break
            if not dead_a:
                ua = _uniform(ka, ca)
                ca += _ONE
                lo = indptr[va]
                d = indptr[va + 1] - lo
                j = int(ua * d)
                if j >= d:
                    j = d - 1
                va = indices[lo + j]
            else:
                ca += _ONE
            if not dead_b:
                ub = _uniform(kb, cb)
                cb += _ONE
                lo = indptr[vb]
                d = indptr[vb + 1] - lo
                j = int(ub * d)
                if j >= d:
                    j = d - 1
                vb = indices[lo + j]
            else:
                cb += _ONE
            if hit and va == vb:
                ztc += 1
    return z, zt, exit_t, last_col, touches


# ---------------------------------------------------------------------------
# Spherically symmetric tree walkers


@njit(cache=True, parallel=True)
def tree_pair_kernel(branch_at, keys, t_lo, t_hi, seg_lo, seg_hi, max_dist):
    """Pairs of walks on the binary spherically symmetric tree.

    branch_at[d] is 1 when distance d is a branch point.  Walker state is
    (distance, branch-path bits); two walkers collide when both agree.
    Counts collisions with distance in [seg_lo, seg_hi] during times
    [t_lo, t_hi]; also reports the first such time and whether a walker
    left the materialized range [0, max_dist].
    """
    n = keys.shape[0]
    z = np.zeros(n, dtype=np.int64)
    first = np.full(n, -1, dtype=np.int64)
    overflow = np.zeros(n, dtype=np.uint8)
    for i in prange(n):
        ka = keys[i, 0]
        kb = keys[i, 1]
        ca = np.uint64(0)
        cb = np.uint64(0)
        da = np.int64(0)
        db = np.int64(0)
        pa = np.uint64(0)
        pb = np.uint64(0)
        la = 0
        lb = 0
        for t in range(t_hi + 1):
            if (t >= t_lo and da == db and pa == pb
                    and da >= seg_lo and da <= seg_hi):
                z[i] += 1
                if first[i] < 0:
                    first[i] = t
            ua = _uniform(ka, ca)
            ca += _ONE
            da, pa, la = _tree_step(branch_at, da, pa, la, ua)
            ub = _uniform(kb, cb)
            cb += _ONE
            db, pb, lb = _tree_step(branch_at, db, pb, lb, ub)
            if da > max_dist or db > max_dist:
                overflow[i] = 1
                break
    return z, first, overflow


@njit(cache=True, inline="always")
def _tree_step(branch_at, d, path, level, u):
    if d == 0:
        return d + 1, path, level
    if d < len(branch_at) and branch_at[d] == 1:
        j = int(u * 3.0)
        if j <= 0:
            return d - 1, path, level
        bit = np.uint64(0) if j == 1 else np.uint64(1)
        path = path | (bit << np.uint64(level))
        return d + 1, path, level + 1
    if u < 0.5:
        if d - 1 < len(branch_at) and branch_at[d - 1] == 1:
            level -= 1
            path = path & ~(_ONE << np.uint64(level))
        return d - 1, path, level
    return d + 1, path, level
