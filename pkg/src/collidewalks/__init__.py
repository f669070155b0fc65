"""Random-walk collision statistics on recurrent graphs.

Builds comb, tree, percolation and spanning-tree graph families, computes
Green kernels and effective resistances exactly on finite truncations,
evaluates infinite-collision criteria, and estimates collision statistics of
independent walks by reproducible Monte Carlo.
"""

from .graphs import (FiniteGraph, FiniteRegion, NeighborOracle, ball_region,
                     extract_ball, extract_region)
from .rng import RngStream

__version__ = "0.1.0"
