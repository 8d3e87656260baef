"""Core domain types: exact-rational distributions, explicit MDPs, and partitions.

Probabilities are `fractions.Fraction` throughout.  Exact arithmetic is load-bearing:
refinement groups states by probability equality, so any rounding would make block
membership tolerance-dependent.  All types are immutable after construction.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence

from .errors import ModelError

Prob = Fraction

ZERO = Fraction(0)
ONE = Fraction(1)


def as_prob(value) -> Fraction:
    """Coerce to an exact probability, rejecting anything outside [0, 1]."""
    p = Fraction(value)
    if p < 0 or p > 1:
        raise ModelError(f"probability {p} outside [0, 1]")
    return p


@dataclass(frozen=True)
class Distribution:
    """Sparse probability distribution over state ids.

    `targets` is strictly increasing, all probabilities are positive, and the
    probabilities sum to 1 exactly.
    """

    targets: tuple[int, ...]
    probs: tuple[Fraction, ...]

    def __post_init__(self):
        if len(self.targets) != len(self.probs):
            raise ModelError("distribution targets/probs length mismatch")
        if not self.targets:
            raise ModelError("empty distribution")
        total = ZERO
        prev = -1
        for t, p in zip(self.targets, self.probs):
            if t <= prev:
                raise ModelError("distribution targets must be strictly increasing")
            prev = t
            if p <= 0:
                raise ModelError(f"non-positive probability {p} for state {t}")
            total += p
        if total != 1:
            raise ModelError(f"distribution sums to {total}, not 1")

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, Fraction]]) -> "Distribution":
        """Build from (state, prob) pairs; duplicates are summed, zeros dropped."""
        acc: dict[int, Fraction] = {}
        for t, p in pairs:
            acc[t] = acc.get(t, ZERO) + Fraction(p)
        items = sorted((t, p) for t, p in acc.items() if p != 0)
        return cls(tuple(t for t, _ in items), tuple(p for _, p in items))

    @classmethod
    def point(cls, target: int) -> "Distribution":
        return cls((target,), (ONE,))

    def items(self) -> Iterable[tuple[int, Fraction]]:
        return zip(self.targets, self.probs)

    def __len__(self) -> int:
        return len(self.targets)


def accumulate(mu: Distribution, block: Iterable[int]) -> Fraction:
    """Exact probability mass of `mu` on the state set `block`."""
    members = block if isinstance(block, (set, frozenset)) else frozenset(block)
    total = ZERO
    for t, p in mu.items():
        if t in members:
            total += p
    return total


@dataclass(frozen=True)
class VarMeta:
    """Declared bounds and flags for one model variable."""

    name: str
    lower: int
    upper: int
    parametric: bool = False
    is_bool: bool = False


@dataclass(frozen=True)
class Mdp:
    """Explicit-state MDP: per-state action choices, labels, and a goal set.

    `choices[s]` lists (action_id, Distribution) pairs; action_id indexes
    `action_names` or is -1 for unlabeled commands.  `pred_index[s]` lists
    (predecessor, choice_index, probability) triples and is the exact inverse of
    the forward edges.  Build instances through `Mdp.build`, which derives the
    predecessor index and checks the structural invariants.
    """

    n_states: int
    initial: int
    choices: tuple[tuple[tuple[int, Distribution], ...], ...]
    action_names: tuple[str, ...]
    label_names: tuple[str, ...]
    label_masks: tuple[int, ...]
    goal: frozenset[int]
    goal_label: Optional[str]
    var_meta: tuple[VarMeta, ...]
    valuations: tuple[tuple[int, ...], ...]
    pred_index: tuple[tuple[tuple[int, int, Fraction], ...], ...]
    deadlock_states: frozenset[int]

    @classmethod
    def build(
        cls,
        *,
        initial: int,
        choices: Sequence[Sequence[tuple[int, Distribution]]],
        valuations: Sequence[Sequence[int]],
        var_meta: Sequence[VarMeta] = (),
        action_names: Sequence[str] = (),
        label_names: Sequence[str] = (),
        label_masks: Sequence[int] = (),
        goal: Iterable[int] = (),
        goal_label: Optional[str] = None,
        deadlock_states: Iterable[int] = (),
        check_reachable: bool = True,
    ) -> "Mdp":
        n = len(choices)
        if n == 0:
            raise ModelError("MDP needs at least one state")
        if not (0 <= initial < n):
            raise ModelError(f"initial state {initial} out of range")
        if len(valuations) != n:
            raise ModelError("one valuation per state required")
        masks = tuple(label_masks) if label_masks else (0,) * n
        if len(masks) != n:
            raise ModelError("one label mask per state required")

        preds: list[list[tuple[int, int, Fraction]]] = [[] for _ in range(n)]
        frozen_choices = []
        for s, state_choices in enumerate(choices):
            if not state_choices:
                raise ModelError(f"state {s} has no choice (deadlocks get a self-loop)")
            row = []
            for ci, (action, dist) in enumerate(state_choices):
                for t, p in dist.items():
                    if not (0 <= t < n):
                        raise ModelError(f"state {s} choice {ci} targets unknown state {t}")
                    preds[t].append((s, ci, p))
                row.append((action, dist))
            frozen_choices.append(tuple(row))

        meta = tuple(var_meta)
        vals = []
        for s, v in enumerate(valuations):
            tv = tuple(v)
            if len(tv) != len(meta):
                raise ModelError(f"state {s} valuation length {len(tv)} != {len(meta)} variables")
            for value, m in zip(tv, meta):
                if not (m.lower <= value <= m.upper):
                    raise ModelError(
                        f"state {s}: {m.name}={value} outside [{m.lower}, {m.upper}]"
                    )
            vals.append(tv)

        goal_set = frozenset(goal)
        for g in goal_set:
            if not (0 <= g < n):
                raise ModelError(f"goal state {g} out of range")

        mdp = cls(
            n_states=n,
            initial=initial,
            choices=tuple(frozen_choices),
            action_names=tuple(action_names),
            label_names=tuple(label_names),
            label_masks=masks,
            goal=goal_set,
            goal_label=goal_label,
            var_meta=meta,
            valuations=tuple(vals),
            pred_index=tuple(tuple(p) for p in preds),
            deadlock_states=frozenset(deadlock_states),
        )
        if check_reachable:
            unreachable = mdp._unreachable()
            if unreachable:
                raise ModelError(f"states not reachable from initial: {sorted(unreachable)[:5]}")
        return mdp

    def _unreachable(self) -> set[int]:
        seen = {self.initial}
        todo = deque([self.initial])
        while todo:
            s = todo.popleft()
            for _, dist in self.choices[s]:
                for t in dist.targets:
                    if t not in seen:
                        seen.add(t)
                        todo.append(t)
        return set(range(self.n_states)) - seen

    @property
    def n_choices(self) -> int:
        return sum(len(c) for c in self.choices)

    @property
    def n_transitions(self) -> int:
        return sum(len(d) for c in self.choices for _, d in c)

    def label_index(self, name: str) -> int:
        try:
            return self.label_names.index(name)
        except ValueError:
            raise ModelError(f"unknown label {name!r}") from None

    def states_with_label(self, name: str) -> frozenset[int]:
        bit = 1 << self.label_index(name)
        return frozenset(s for s in range(self.n_states) if self.label_masks[s] & bit)

    def labels_of(self, s: int) -> frozenset[str]:
        mask = self.label_masks[s]
        return frozenset(n for i, n in enumerate(self.label_names) if mask & (1 << i))


@dataclass(frozen=True)
class Partition:
    """Disjoint cover of the state space: `block_of[s]` is the block id of state s."""

    block_of: tuple[int, ...]
    blocks: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        n = len(self.block_of)
        seen = 0
        for b, members in enumerate(self.blocks):
            if not members:
                raise ModelError(f"block {b} is empty")
            for s in members:
                if not (0 <= s < n):
                    raise ModelError(f"block {b} contains unknown state {s}")
                if self.block_of[s] != b:
                    raise ModelError(f"state {s} listed in block {b} but block_of says {self.block_of[s]}")
                seen += 1
        if seen != n:
            raise ModelError("blocks do not cover the state space exactly once")

    @classmethod
    def from_block_of(cls, block_of: Sequence[int]) -> "Partition":
        """Build from a block-id array; ids are renumbered by first appearance."""
        remap: dict[int, int] = {}
        normalized = []
        for b in block_of:
            if b not in remap:
                remap[b] = len(remap)
            normalized.append(remap[b])
        blocks: list[list[int]] = [[] for _ in range(len(remap))]
        for s, b in enumerate(normalized):
            blocks[b].append(s)
        return cls(tuple(normalized), tuple(tuple(b) for b in blocks))

    @classmethod
    def from_blocks(cls, blocks: Iterable[Iterable[int]], n_states: int) -> "Partition":
        block_of = [-1] * n_states
        frozen = []
        for b, members in enumerate(blocks):
            ms = tuple(sorted(members))
            for s in ms:
                if not (0 <= s < n_states):
                    raise ModelError(f"state {s} out of range")
                if block_of[s] != -1:
                    raise ModelError(f"state {s} appears in two blocks")
                block_of[s] = b
            frozen.append(ms)
        if any(b == -1 for b in block_of):
            missing = [s for s, b in enumerate(block_of) if b == -1]
            raise ModelError(f"states not covered by any block: {missing[:5]}")
        return cls(tuple(block_of), tuple(frozen))

    @classmethod
    def trivial(cls, n_states: int) -> "Partition":
        return cls((0,) * n_states, (tuple(range(n_states)),))

    @classmethod
    def singletons(cls, n_states: int) -> "Partition":
        return cls(tuple(range(n_states)), tuple((s,) for s in range(n_states)))

    @property
    def n_states(self) -> int:
        return len(self.block_of)

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    def canonical_block_of(self) -> tuple[int, ...]:
        """Block ids renumbered by order of first appearance (relation canonical form)."""
        remap: dict[int, int] = {}
        out = []
        for b in self.block_of:
            if b not in remap:
                remap[b] = len(remap)
            out.append(remap[b])
        return tuple(out)


def _require_same_states(p1: Partition, p2: Partition) -> None:
    if p1.n_states != p2.n_states:
        raise ModelError(f"partition state counts differ: {p1.n_states} vs {p2.n_states}")


def finer_than(p1: Partition, p2: Partition) -> bool:
    """True iff every block of p1 lies inside one block of p2."""
    _require_same_states(p1, p2)
    for members in p1.blocks:
        target = p2.block_of[members[0]]
        if any(p2.block_of[s] != target for s in members):
            return False
    return True


def partition_equal(p1: Partition, p2: Partition) -> bool:
    """True iff both partitions induce the same equivalence relation (ids ignored)."""
    _require_same_states(p1, p2)
    return p1.canonical_block_of() == p2.canonical_block_of()
