"""Splitter-queue partition refinement and quotient construction.

The refinement loop runs in two phases.  Phase 1 is the classic queue-driven
scheme: pop a splitter block C, split every block containing a predecessor of C
by grouping states on their signature with respect to C, and enqueue all new
fragments except the largest.  Phase 2 regroups every state by its full
signature (the set, over actions, of per-block probability vectors) and
re-seeds the queue if anything moved; it repeats until nothing splits, which
makes the result a fixed point of the full matching condition rather than of
per-splitter stability only.

Edge weights are pre-scaled to integers (numerator times lcm-of-denominators)
so the hot loops add Python ints instead of Fractions; this is exact.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional, Sequence

from .core import Distribution, Mdp, Partition
from .errors import ModelError
from .limits import ResourceGuard


class SplitterQueue:
    """FIFO of pending splitter blocks; a block is pending at most once."""

    def __init__(self):
        self._fifo: deque[int] = deque()
        self._pending: set[int] = set()

    def push(self, block_id: int) -> bool:
        if block_id in self._pending:
            return False
        self._pending.add(block_id)
        self._fifo.append(block_id)
        return True

    def pop(self) -> int:
        block_id = self._fifo.popleft()
        self._pending.discard(block_id)
        return block_id

    def __len__(self) -> int:
        return len(self._fifo)

    def __contains__(self, block_id: int) -> bool:
        return block_id in self._pending


@dataclass
class RefineStats:
    """Instrumentation for one refinement run."""

    splitter_pops: int = 0
    split_events: int = 0
    fragments_created: int = 0
    fragments_enqueued: int = 0
    largest_excluded: int = 0
    phase2_passes: int = 0
    phase2_split_events: int = 0
    goal_presplit_fragments: int = 0


def signature(mdp: Mdp, state: int, block: Iterable[int]) -> tuple[Fraction, ...]:
    """Sorted, deduplicated probabilities of reaching `block` over the state's actions."""
    members = block if isinstance(block, (set, frozenset)) else frozenset(block)
    values = set()
    for _, dist in mdp.choices[state]:
        total = Fraction(0)
        for t, p in dist.items():
            if t in members:
                total += p
        values.add(total)
    return tuple(sorted(values))


class _Refiner:
    """Mutable working state for one refinement run over a fixed MDP."""

    def __init__(self, mdp: Mdp, partition: Partition, stats: Optional[RefineStats] = None):
        if partition.n_states != mdp.n_states:
            raise ModelError(
                f"partition over {partition.n_states} states, MDP has {mdp.n_states}"
            )
        self.mdp = mdp
        self.stats = stats if stats is not None else RefineStats()
        self.block_of: list[int] = list(partition.block_of)
        self.blocks: list[list[int]] = [sorted(b) for b in partition.blocks]
        self.queue = SplitterQueue()

        # Per-state choice offsets so (state, choice) flattens to one int key.
        self.choice_offset = [0] * (mdp.n_states + 1)
        for s in range(mdp.n_states):
            self.choice_offset[s + 1] = self.choice_offset[s] + len(mdp.choices[s])

        # Integer-scaled edge weights: exact, and cheap to sum.
        denom_lcm = 1
        for preds in mdp.pred_index:
            for _, _, p in preds:
                denom_lcm = denom_lcm * p.denominator // math.gcd(denom_lcm, p.denominator)
        self.weight_scale = denom_lcm
        self.pred_w: list[list[tuple[int, int, int]]] = []
        for preds in mdp.pred_index:
            self.pred_w.append(
                [(src, ci, p.numerator * (denom_lcm // p.denominator)) for src, ci, p in preds]
            )

    # -- splitting ---------------------------------------------------------

    def split_by(self, splitter_states: Sequence[int]) -> list[tuple[int, list[int]]]:
        """Split every block containing a predecessor of the given state set.

        Returns one (block_id, fragment_ids) event per block that actually
        split; fragment_ids includes the surviving id (first) and all new ids.
        """
        mdp = self.mdp
        mass: dict[int, int] = {}
        touched: set[int] = set()
        for t in splitter_states:
            for src, ci, w in self.pred_w[t]:
                key = self.choice_offset[src] + ci
                mass[key] = mass.get(key, 0) + w
                touched.add(src)

        affected_blocks = sorted({self.block_of[s] for s in touched})
        events: list[tuple[int, list[int]]] = []
        for b in affected_blocks:
            members = self.blocks[b]
            groups: dict[tuple[int, ...], list[int]] = {}
            order: list[tuple[int, ...]] = []
            for s in members:
                if s in touched:
                    base = self.choice_offset[s]
                    sig = tuple(
                        sorted({mass.get(base + ci, 0) for ci in range(len(mdp.choices[s]))})
                    )
                else:
                    sig = (0,)
                bucket = groups.get(sig)
                if bucket is None:
                    groups[sig] = [s]
                    order.append(sig)
                else:
                    bucket.append(s)
            if len(order) < 2:
                continue
            fragment_ids = self._apply_split(b, [groups[sig] for sig in order])
            events.append((b, fragment_ids))
        return events

    def split_full_signature(self) -> list[tuple[int, list[int]]]:
        """Split every block by the set over actions of per-block weight vectors."""
        mdp = self.mdp
        events: list[tuple[int, list[int]]] = []
        for b in range(len(self.blocks)):
            members = self.blocks[b]
            if len(members) < 2:
                continue
            groups: dict[frozenset, list[int]] = {}
            order: list[frozenset] = []
            for s in members:
                vectors = set()
                for _, dist in mdp.choices[s]:
                    acc: dict[int, int] = {}
                    for t, p in dist.items():
                        tb = self.block_of[t]
                        w = p.numerator * (self.weight_scale // p.denominator)
                        acc[tb] = acc.get(tb, 0) + w
                    vectors.add(tuple(sorted(acc.items())))
                sig = frozenset(vectors)
                bucket = groups.get(sig)
                if bucket is None:
                    groups[sig] = [s]
                    order.append(sig)
                else:
                    bucket.append(s)
            if len(order) < 2:
                continue
            fragment_ids = self._apply_split(b, [groups[sig] for sig in order])
            events.append((b, fragment_ids))
        return events

    def split_by_goal(self) -> int:
        """Split every block by goal membership; returns number of new fragments."""
        goal = self.mdp.goal
        created = 0
        for b in range(len(self.blocks)):
            members = self.blocks[b]
            inside = [s for s in members if s in goal]
            outside = [s for s in members if s not in goal]
            if inside and outside:
                first, second = (inside, outside) if members[0] in goal else (outside, inside)
                self._apply_split(b, [first, second])
                created += 1
        return created

    def _apply_split(self, block_id: int, parts: list[list[int]]) -> list[int]:
        """Install the fragments of one block; first part keeps the original id."""
        self.blocks[block_id] = parts[0]
        ids = [block_id]
        for part in parts[1:]:
            new_id = len(self.blocks)
            self.blocks.append(part)
            for s in part:
                self.block_of[s] = new_id
            ids.append(new_id)
        self.stats.split_events += 1
        self.stats.fragments_created += len(parts)
        return ids

    # -- queue policy ------------------------------------------------------

    def enqueue_fragments(self, fragment_ids: Sequence[int]) -> None:
        """Enqueue all fragments except the largest (ties: lowest id stays out)."""
        largest = max(fragment_ids, key=lambda fid: (len(self.blocks[fid]), -fid))
        self.stats.largest_excluded += 1
        for fid in fragment_ids:
            if fid != largest and self.queue.push(fid):
                self.stats.fragments_enqueued += 1

    # -- main loop ---------------------------------------------------------

    def run(self, guard: Optional[ResourceGuard] = None) -> None:
        for b in range(len(self.blocks)):
            self.queue.push(b)
        while True:
            while self.queue:
                splitter = self.queue.pop()
                self.stats.splitter_pops += 1
                if guard is not None:
                    guard.tick()
                snapshot = list(self.blocks[splitter])
                for _, fragment_ids in self.split_by(snapshot):
                    self.enqueue_fragments(fragment_ids)
            self.stats.phase2_passes += 1
            events = self.split_full_signature()
            if not events:
                break
            self.stats.phase2_split_events += len(events)
            for _, fragment_ids in events:
                self.enqueue_fragments(fragment_ids)

    def to_partition(self) -> Partition:
        return Partition(
            tuple(self.block_of),
            tuple(tuple(b) for b in self.blocks),
        )


def initial_partition(mdp: Mdp, goal_label: Optional[str] = None) -> Partition:
    """The two-block seed {G, S\\G}; a degenerate side is omitted."""
    if goal_label is None or goal_label == mdp.goal_label:
        goal = mdp.goal
    else:
        goal = mdp.states_with_label(goal_label)
    inside = sorted(goal)
    outside = [s for s in range(mdp.n_states) if s not in goal]
    blocks = [b for b in (inside, outside) if b]
    return Partition.from_blocks(blocks, mdp.n_states)


def refine_by_splitter(
    mdp: Mdp, partition: Partition, splitter: int
) -> tuple[Partition, tuple[int, ...]]:
    """One refinement step: split all predecessor blocks of block `splitter`.

    Returns the refined partition and the ids of every fragment of every block
    that split (surviving id included).  A no-op split returns the partition
    unchanged with no ids.
    """
    if not (0 <= splitter < partition.n_blocks):
        raise ModelError(f"splitter block {splitter} out of range")
    refiner = _Refiner(mdp, partition)
    events = refiner.split_by(list(partition.blocks[splitter]))
    involved = tuple(fid for _, ids in events for fid in ids)
    return refiner.to_partition(), involved


def refine_fixpoint_stats(
    mdp: Mdp,
    init: Partition,
    guard: Optional[ResourceGuard] = None,
) -> tuple[Partition, RefineStats]:
    """Refine `init` to the coarsest stable partition finer than it, with counters."""
    stats = RefineStats()
    refiner = _Refiner(mdp, init, stats)
    # Blocks of an arbitrary seed may straddle the goal set; stability requires
    # goal agreement inside every block, so separate that first.
    stats.goal_presplit_fragments = refiner.split_by_goal()
    refiner.run(guard)
    return refiner.to_partition(), stats


def refine_fixpoint(mdp: Mdp, init: Partition) -> Partition:
    partition, _ = refine_fixpoint_stats(mdp, init)
    return partition


def quotient(mdp: Mdp, partition: Partition, strict_labels: bool = False) -> Mdp:
    """Collapse each block to one state, lifting distributions block-wise.

    Choices of a block are the deduplicated lifted distributions of its lowest
    state (any representative works on a stable partition).  Goal membership
    must be constant on every block; other labels are inherited when constant
    and dropped otherwise unless `strict_labels` is set.
    """
    if partition.n_states != mdp.n_states:
        raise ModelError(
            f"partition over {partition.n_states} states, MDP has {mdp.n_states}"
        )
    block_of = partition.block_of
    n_blocks = partition.n_blocks

    goal = set()
    label_masks = []
    deadlocks = set()
    choices = []
    valuations = []
    for b, members in enumerate(partition.blocks):
        rep = min(members)
        in_goal = rep in mdp.goal
        if any((s in mdp.goal) != in_goal for s in members):
            raise ModelError(
                f"goal label not constant on block {b}; partition is not stable"
            )
        if in_goal:
            goal.add(b)

        mask = mdp.label_masks[rep]
        constant = all(mdp.label_masks[s] == mask for s in members)
        if not constant:
            if strict_labels:
                raise ModelError(
                    f"labels not constant on block {b}; partition is not stable"
                )
            common = mask
            for s in members:
                common &= mdp.label_masks[s]
            mask = common
        label_masks.append(mask)

        lifted: list[tuple[int, Distribution]] = []
        seen: set[tuple] = set()
        for action, dist in mdp.choices[rep]:
            acc: dict[int, Fraction] = {}
            for t, p in dist.items():
                tb = block_of[t]
                acc[tb] = acc.get(tb, Fraction(0)) + p
            key = tuple(sorted(acc.items()))
            if key in seen:
                continue
            seen.add(key)
            lifted.append((action, Distribution.from_pairs(acc.items())))
        choices.append(lifted)
        valuations.append(mdp.valuations[rep])
        if rep in mdp.deadlock_states:
            deadlocks.add(b)

    return Mdp.build(
        initial=block_of[mdp.initial],
        choices=choices,
        valuations=valuations,
        var_meta=mdp.var_meta,
        action_names=mdp.action_names,
        label_names=mdp.label_names,
        label_masks=label_masks,
        goal=goal,
        goal_label=mdp.goal_label,
        deadlock_states=deadlocks,
        check_reachable=False,
    )


def write_partition(partition: Partition, path) -> None:
    """Write the `PARTITION n_states n_blocks` + `state block` line format."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"PARTITION {partition.n_states} {partition.n_blocks}\n")
        for s, b in enumerate(partition.block_of):
            fh.write(f"{s} {b}\n")


def read_partition(path) -> Partition:
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().split()
        if len(header) != 3 or header[0] != "PARTITION":
            raise ModelError(f"{path}: bad partition header")
        n_states, n_blocks = int(header[1]), int(header[2])
        block_of = [-1] * n_states
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ModelError(f"{path}:{lineno}: expected 'state block'")
            s, b = int(parts[0]), int(parts[1])
            if not (0 <= s < n_states) or not (0 <= b < n_blocks):
                raise ModelError(f"{path}:{lineno}: state or block id out of range")
            if block_of[s] != -1:
                raise ModelError(f"{path}:{lineno}: duplicate entry for state {s}")
            block_of[s] = b
    if any(b == -1 for b in block_of):
        raise ModelError(f"{path}: not every state assigned a block")
    blocks: list[list[int]] = [[] for _ in range(n_blocks)]
    for s, b in enumerate(block_of):
        blocks[b].append(s)
    if any(not b for b in blocks):
        raise ModelError(f"{path}: header claims {n_blocks} blocks, some are empty")
    # Ids are preserved as written so that write(read(f)) reproduces f.
    return Partition(tuple(block_of), tuple(tuple(b) for b in blocks))
