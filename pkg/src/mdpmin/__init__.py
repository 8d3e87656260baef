"""Bisimulation minimization for explicit-state MDPs, with a classifier-seeded
initial-partition pipeline and built-in soundness certification."""

from .core import (
    Distribution,
    Mdp,
    Partition,
    Prob,
    VarMeta,
    accumulate,
    finer_than,
    partition_equal,
)
from .bisim import (
    RefineStats,
    SplitterQueue,
    initial_partition,
    quotient,
    read_partition,
    refine_by_splitter,
    refine_fixpoint,
    refine_fixpoint_stats,
    signature,
    write_partition,
)
from .verify import Witness, coarsest_bisimulation, is_bisimulation, max_reachability

__version__ = "0.1.0"
