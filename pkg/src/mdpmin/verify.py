"""Independent oracles: brute-force coarsest bisimulation, stability checking,
and value-iteration reachability.

Deliberately shares no machinery with `bisim` (no splitter queue, no predecessor
index, no signature caching) so that cross-validating the two is meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from .core import Mdp, Partition
from .errors import ConvergenceError, ModelError

BRUTE_FORCE_STATE_LIMIT = 2000


def _lifted_vector(mdp: Mdp, state: int, choice: int, block_of) -> tuple:
    """Probability of reaching each block under one choice, as a sorted sparse tuple."""
    acc: dict[int, Fraction] = {}
    _, dist = mdp.choices[state][choice]
    for t, p in dist.items():
        b = block_of[t]
        acc[b] = acc.get(b, Fraction(0)) + p
    return tuple(sorted(acc.items()))


def _state_vector_set(mdp: Mdp, state: int, block_of) -> frozenset:
    return frozenset(
        _lifted_vector(mdp, state, ci, block_of) for ci in range(len(mdp.choices[state]))
    )


def coarsest_bisimulation(mdp: Mdp, max_states: int = BRUTE_FORCE_STATE_LIMIT) -> Partition:
    """Coarsest goal-respecting probabilistic bisimulation, by naive fixed-point.

    Starts from {G, S\\G} and repeatedly regroups every state by the set, over its
    actions, of full per-block probability vectors, until nothing changes.  No
    splitter selection: every round looks at every state.
    """
    if mdp.n_states > max_states:
        raise ModelError(
            f"{mdp.n_states} states exceeds brute-force limit {max_states}"
        )
    block_of = [0 if s in mdp.goal else 1 for s in range(mdp.n_states)]
    n_blocks = len(set(block_of))
    while True:
        keys: dict[tuple, int] = {}
        new_block_of = []
        for s in range(mdp.n_states):
            key = (block_of[s], _state_vector_set(mdp, s, block_of))
            if key not in keys:
                keys[key] = len(keys)
            new_block_of.append(keys[key])
        # Each round refines the previous partition, so an unchanged block count
        # means the relation is already stable.
        if len(keys) == n_blocks:
            break
        block_of = new_block_of
        n_blocks = len(keys)
    return Partition.from_block_of(block_of)


@dataclass(frozen=True)
class Witness:
    """Counterexample to stability: states s, t share a block but s's choice has no match."""

    s: int
    t: int
    choice: int
    reason: str

    def __str__(self):
        return f"states {self.s} and {self.t}: {self.reason} (choice {self.choice})"


def is_bisimulation(mdp: Mdp, partition: Partition) -> tuple[bool, Optional[Witness]]:
    """Check the full-vector matching condition plus goal agreement on every block.

    Two states pass iff they agree on goal membership and their sets of lifted
    distribution vectors (probability into each block, per action) are equal.
    Returns (True, None) or (False, witness).
    """
    if partition.n_states != mdp.n_states:
        raise ModelError(
            f"partition over {partition.n_states} states, MDP has {mdp.n_states}"
        )
    block_of = partition.block_of
    for members in partition.blocks:
        rep = members[0]
        rep_goal = rep in mdp.goal
        rep_vectors = _state_vector_set(mdp, rep, block_of)
        for t in members[1:]:
            if (t in mdp.goal) != rep_goal:
                return False, Witness(rep, t, 0, "goal membership differs")
            t_vectors = _state_vector_set(mdp, t, block_of)
            if t_vectors != rep_vectors:
                missing = rep_vectors - t_vectors
                if missing:
                    bad = next(iter(missing))
                    choice = next(
                        ci
                        for ci in range(len(mdp.choices[rep]))
                        if _lifted_vector(mdp, rep, ci, block_of) == bad
                    )
                    return False, Witness(rep, t, choice, "unmatched lifted distribution")
                bad = next(iter(t_vectors - rep_vectors))
                choice = next(
                    ci
                    for ci in range(len(mdp.choices[t]))
                    if _lifted_vector(mdp, t, ci, block_of) == bad
                )
                return False, Witness(t, rep, choice, "unmatched lifted distribution")
    return True, None


def max_reachability(
    mdp: Mdp,
    epsilon: float = 1e-10,
    max_iterations: int = 1_000_000,
) -> np.ndarray:
    """Maximal probability of reaching the goal set, per state, by value iteration.

    Goal states are fixed at 1; iteration stops when the sup-norm change drops
    below `epsilon`.  Raises ConvergenceError at the iteration cap.
    """
    if epsilon <= 0:
        raise ModelError("epsilon must be positive")
    n = mdp.n_states

    # Flatten the choice structure once: segmented arrays for vectorized sweeps.
    choice_state = []   # owning state of each choice
    edge_choice_start = [0]
    edge_target: list[int] = []
    edge_prob: list[float] = []
    for s in range(n):
        for _, dist in mdp.choices[s]:
            choice_state.append(s)
            edge_target.extend(dist.targets)
            edge_prob.extend(float(p) for p in dist.probs)
            edge_choice_start.append(len(edge_target))
    n_choice = len(choice_state)
    choice_state = np.asarray(choice_state, dtype=np.int64)
    edge_start = np.asarray(edge_choice_start[:-1], dtype=np.int64)
    edge_target = np.asarray(edge_target, dtype=np.int64)
    edge_prob = np.asarray(edge_prob, dtype=np.float64)

    state_choice_start = np.zeros(n + 1, dtype=np.int64)
    np.add.at(state_choice_start, choice_state + 1, 1)
    state_choice_start = np.cumsum(state_choice_start)

    goal_mask = np.zeros(n, dtype=bool)
    goal_mask[list(mdp.goal)] = True

    values = np.where(goal_mask, 1.0, 0.0)
    for _ in range(max_iterations):
        weighted = edge_prob * values[edge_target]
        choice_values = np.add.reduceat(weighted, edge_start) if n_choice else np.array([])
        new_values = np.maximum.reduceat(choice_values, state_choice_start[:-1])
        new_values[goal_mask] = 1.0
        delta = float(np.max(np.abs(new_values - values))) if n else 0.0
        values = new_values
        if delta < epsilon:
            return values
    raise ConvergenceError(
        f"value iteration did not converge within {max_iterations} iterations"
    )
