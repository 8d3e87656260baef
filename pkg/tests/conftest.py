"""Shared fixtures: seeded random MDPs and hand-built models."""

from __future__ import annotations

import random
from fractions import Fraction

from mdpmin.core import Distribution, Mdp, VarMeta


def random_mdp(seed, max_states=200, max_actions=4, max_denominator=16) -> Mdp:
    """Seeded random MDP: every state reachable, rational probs, goal label.

    Matches the acceptance corpus: <= `max_states` states, <= `max_actions`
    choices per state, probability denominators <= `max_denominator`.
    """
    rng = random.Random(seed)
    n = rng.randint(2, max_states)
    choices = []
    for s in range(n):
        state_choices = []
        for ci in range(rng.randint(1, max_actions)):
            support = rng.sample(range(n), rng.randint(1, min(3, n)))
            if ci == 0 and s + 1 < n:
                support[0] = s + 1  # spine edge keeps every state reachable
            support = sorted(set(support))
            den = rng.randint(len(support), max_denominator)
            cuts = sorted(rng.sample(range(1, den), len(support) - 1))
            parts = [b - a for a, b in zip([0] + cuts, cuts + [den])]
            dist = Distribution.from_pairs(
                (t, Fraction(p, den)) for t, p in zip(support, parts)
            )
            state_choices.append((-1, dist))
        choices.append(state_choices)
    goal = frozenset(s for s in range(n) if rng.random() < 0.3)
    return Mdp.build(
        initial=0,
        choices=choices,
        valuations=[(s,) for s in range(n)],
        var_meta=[VarMeta("s", 0, n - 1)],
        label_names=("goal",),
        label_masks=[1 if s in goal else 0 for s in range(n)],
        goal=goal,
        goal_label="goal",
    )


def hand_mdp(transitions, goal=(), initial=0, n_states=None) -> Mdp:
    """Small MDP from {state: [ {target: prob, ...}, ... ]}; missing states self-loop."""
    if n_states is None:
        n_states = max(
            [initial]
            + [s for s in transitions]
            + [t for dists in transitions.values() for d in dists for t in d]
        ) + 1
    choices = []
    for s in range(n_states):
        dists = transitions.get(s)
        if not dists:
            choices.append([(-1, Distribution.point(s))])
            continue
        choices.append(
            [(-1, Distribution.from_pairs((t, Fraction(p)) for t, p in d.items())) for d in dists]
        )
    goal = frozenset(goal)
    return Mdp.build(
        initial=initial,
        choices=choices,
        valuations=[(s,) for s in range(n_states)],
        var_meta=[VarMeta("s", 0, n_states - 1)],
        label_names=("goal",),
        label_masks=[1 if s in goal else 0 for s in range(n_states)],
        goal=goal,
        goal_label="goal",
        check_reachable=False,
    )
