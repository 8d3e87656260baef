from fractions import Fraction

import pytest

from mdpmin.bisim import (
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
from mdpmin.core import Partition, finer_than, partition_equal
from mdpmin.errors import ModelError
from mdpmin.verify import coarsest_bisimulation, is_bisimulation, max_reachability

from conftest import hand_mdp, random_mdp

F = Fraction


class TestSplitterQueue:
    def test_fifo_order(self):
        q = SplitterQueue()
        assert q.push(3) and q.push(1) and q.push(2)
        assert [q.pop(), q.pop(), q.pop()] == [3, 1, 2]

    def test_no_duplicate_pending(self):
        q = SplitterQueue()
        assert q.push(5)
        assert not q.push(5)
        assert len(q) == 1
        q.pop()
        assert q.push(5)


class TestInitialPartition:
    def test_two_blocks(self):
        m = hand_mdp({s: [{s: 1}] for s in range(6)}, goal={2, 5})
        p = initial_partition(m)
        assert partition_equal(p, Partition.from_blocks([[2, 5], [0, 1, 3, 4]], 6))

    def test_all_goal_single_block(self):
        m = hand_mdp({0: [{0: 1}], 1: [{1: 1}]}, goal={0, 1})
        assert initial_partition(m).n_blocks == 1

    def test_empty_goal_single_block(self):
        m = hand_mdp({0: [{0: 1}], 1: [{1: 1}]})
        assert initial_partition(m).n_blocks == 1

    def test_unknown_label(self):
        m = hand_mdp({0: [{0: 1}]})
        with pytest.raises(ModelError):
            initial_partition(m, "no_such_label")


class TestSignature:
    def test_sorted_deduplicated(self):
        m = hand_mdp(
            {
                0: [{1: F(1, 2), 2: F(1, 2)}, {1: F(1, 2), 3: F(1, 2)}, {1: 1}],
                1: [{1: 1}],
                2: [{2: 1}],
                3: [{3: 1}],
            }
        )
        sig = signature(m, 0, {1})
        assert sig == (F(1, 2), F(1))
        assert all(0 <= v <= 1 for v in sig)
        assert list(sig) == sorted(set(sig))


class TestRefineBySplitter:
    def _two_state_block_mdp(self, probs_s, probs_t):
        # States 0 (s) and 1 (t) feed block C={2} with the given per-action
        # probabilities; 3 catches the rest of the mass; 2 and 3 are absorbing.
        trans = {
            0: [{2: p, 3: 1 - p} if p != 1 else {2: 1} for p in probs_s],
            1: [{2: p, 3: 1 - p} if p != 1 else {2: 1} for p in probs_t],
            2: [{2: 1}],
            3: [{3: 1}],
        }
        return hand_mdp(trans)

    def test_distinct_signatures_split(self):
        m = self._two_state_block_mdp([F(1, 2)], [F(1, 3)])
        p = Partition.from_blocks([[0, 1], [2], [3]], 4)
        refined, involved = refine_by_splitter(m, p, 1)  # block {2}
        assert refined.block_of[0] != refined.block_of[1]
        assert len(involved) == 2

    def test_signature_is_a_set_order_free(self):
        m = self._two_state_block_mdp([F(1, 2), F(1, 4)], [F(1, 4), F(1, 2)])
        p = Partition.from_blocks([[0, 1], [2], [3]], 4)
        refined, involved = refine_by_splitter(m, p, 1)
        assert refined.block_of[0] == refined.block_of[1]
        assert involved == ()

    def test_untouched_blocks_survive(self):
        m = self._two_state_block_mdp([F(1, 2)], [F(1, 3)])
        p = Partition.from_blocks([[0, 1], [2], [3]], 4)
        refined, _ = refine_by_splitter(m, p, 2)  # block {3}... also splits 0 vs 1
        # Splitting by {3} distinguishes the complementary mass, same split.
        assert refined.block_of[2] != refined.block_of[3]

    def test_five_state_step_matches_pairwise_condition(self):
        # Independent oracle: group block members by exhaustive pairwise
        # comparison of their accumulated-probability sets w.r.t. the splitter.
        m = hand_mdp(
            {
                0: [{2: F(1, 2), 3: F(1, 2)}],
                1: [{2: F(1, 2), 3: F(1, 2)}, {4: 1}],
                2: [{2: F(1, 4), 4: F(3, 4)}],
                3: [{3: 1}],
                4: [{4: 1}],
            }
        )
        p = Partition.from_blocks([[0, 1, 2], [3], [4]], 5)
        splitter_states = frozenset(p.blocks[0])

        def probe(state):
            vals = set()
            for _, dist in m.choices[state]:
                vals.add(sum((q for t, q in dist.items() if t in splitter_states), F(0)))
            return frozenset(vals)

        expected_groups = {}
        for s in p.blocks[0]:
            expected_groups.setdefault(probe(s), []).append(s)

        refined, _ = refine_by_splitter(m, p, 0)
        got_groups = {}
        for s in p.blocks[0]:
            got_groups.setdefault(refined.block_of[s], []).append(s)
        assert sorted(map(sorted, expected_groups.values())) == sorted(
            map(sorted, got_groups.values())
        )


class TestRefineFixpoint:
    def test_single_state(self):
        m = hand_mdp({0: [{0: 1}]})
        assert refine_fixpoint(m, initial_partition(m)).n_blocks == 1

    def test_singletons_already_stable(self):
        m = random_mdp(7, max_states=25)
        p = Partition.singletons(m.n_states)
        result = refine_fixpoint(m, p)
        assert partition_equal(result, p)

    @pytest.mark.parametrize("seed", range(15))
    def test_matches_brute_force_oracle(self, seed):
        m = random_mdp(seed, max_states=50)
        ours = refine_fixpoint(m, initial_partition(m))
        oracle = coarsest_bisimulation(m)
        assert partition_equal(ours, oracle)

    @pytest.mark.parametrize("seed", range(8))
    def test_monotonicity_per_splitter_step(self, seed):
        m = random_mdp(seed, max_states=30)
        p = initial_partition(m)
        for splitter in range(p.n_blocks):
            refined, _ = refine_by_splitter(m, p, splitter)
            assert finer_than(refined, p)
            assert refined.n_blocks >= p.n_blocks
            p = refined

    @pytest.mark.parametrize("seed", range(8))
    def test_finer_seed_stays_finer_and_stable(self, seed):
        # Seeding with any refinement of the oracle must land on a stable
        # partition at least as fine as the oracle.
        m = random_mdp(seed, max_states=40)
        oracle = coarsest_bisimulation(m)
        seeded = Partition.singletons(m.n_states)
        result = refine_fixpoint(m, seeded)
        assert finer_than(result, oracle)
        ok, _ = is_bisimulation(m, result)
        assert ok

    def test_result_stable_under_every_splitter(self):
        m = random_mdp(11, max_states=30)
        result = refine_fixpoint(m, initial_partition(m))
        for splitter in range(result.n_blocks):
            refined, involved = refine_by_splitter(m, result, splitter)
            assert involved == ()
            assert partition_equal(refined, result)


class TestQueuePolicy:
    def test_all_but_largest_enqueued(self):
        # One split event: {0,1,2,4} splits into {0,1}, {2}, {4} (state 4 has
        # zero mass into the splitter); the largest fragment stays out.
        m = hand_mdp(
            {
                0: [{3: F(1, 2), 4: F(1, 2)}],
                1: [{3: F(1, 2), 4: F(1, 2)}],
                2: [{3: F(3, 4), 4: F(1, 4)}],
                3: [{3: 1}],
                4: [{4: 1}],
            },
            goal={3},
        )
        _, stats = refine_fixpoint_stats(m, initial_partition(m))
        assert stats.split_events == 1
        assert stats.fragments_created == 3
        assert stats.fragments_enqueued == 2
        assert stats.largest_excluded == 1

    def test_tie_keeps_lowest_block_id_out(self):
        # {0,1} splits into two singleton fragments; the surviving (lower) id
        # stays out of the queue on ties.
        m = hand_mdp(
            {
                0: [{2: F(1, 2), 3: F(1, 2)}],
                1: [{2: F(1, 4), 3: F(3, 4)}],
                2: [{2: 1}],
                3: [{3: 1}],
            },
            goal={2},
        )
        from mdpmin.bisim import _Refiner

        refiner = _Refiner(m, Partition.from_blocks([[0, 1], [2], [3]], 4))
        events = refiner.split_by([2])
        assert len(events) == 1
        block_id, fragment_ids = events[0]
        refiner.enqueue_fragments(fragment_ids)
        sizes = {fid: len(refiner.blocks[fid]) for fid in fragment_ids}
        assert set(sizes.values()) == {1}
        low = min(fragment_ids)
        assert low not in refiner.queue
        assert all(fid in refiner.queue for fid in fragment_ids if fid != low)


class TestQuotient:
    def test_singleton_partition_is_identity(self):
        m = random_mdp(5, max_states=20)
        q = quotient(m, Partition.singletons(m.n_states))
        assert q.n_states == m.n_states
        assert q.initial == m.initial
        assert q.goal == m.goal
        for s in range(m.n_states):
            # Duplicate choices collapse (lifted choices are a deduplicated set).
            ours = {tuple(d.items()) for _, d in m.choices[s]}
            theirs = {tuple(d.items()) for _, d in q.choices[s]}
            assert ours == theirs

    def test_one_state_one_block(self):
        m = hand_mdp({0: [{0: 1}]})
        q = quotient(m, Partition.trivial(1))
        assert q.n_states == 1

    def test_duplicate_lifted_choices_removed(self):
        # Both actions of 0 land in the same target block with probability 1.
        m = hand_mdp({0: [{1: 1}, {2: 1}], 1: [{1: 1}], 2: [{2: 1}]})
        p = Partition.from_blocks([[0], [1, 2]], 3)
        ok, _ = is_bisimulation(m, p)
        assert ok
        q = quotient(m, p)
        assert len(q.choices[p.block_of[0]]) == 1

    def test_goal_mismatch_inside_block_rejected(self):
        m = hand_mdp({0: [{0: 1}], 1: [{1: 1}]}, goal={1})
        with pytest.raises(ModelError):
            quotient(m, Partition.trivial(2))

    @pytest.mark.parametrize("seed", range(6))
    def test_reachability_preserved(self, seed):
        m = random_mdp(seed, max_states=40)
        p = refine_fixpoint(m, initial_partition(m))
        q = quotient(m, p)
        vm = max_reachability(m, epsilon=1e-10)
        vq = max_reachability(q, epsilon=1e-10)
        for s in range(m.n_states):
            assert abs(vm[s] - vq[p.block_of[s]]) < 2e-10


class TestPartitionFiles:
    def test_round_trip_preserves_bytes(self, tmp_path):
        m = random_mdp(2, max_states=30)
        p = refine_fixpoint(m, initial_partition(m))
        path = tmp_path / "p.part"
        write_partition(p, path)
        first = path.read_bytes()
        again = read_partition(path)
        write_partition(again, path)
        assert path.read_bytes() == first
        assert partition_equal(p, again)
        assert p.block_of == again.block_of

    def test_bad_header(self, tmp_path):
        path = tmp_path / "p.part"
        path.write_text("NOPE 3\n")
        with pytest.raises(ModelError):
            read_partition(path)

    def test_missing_state(self, tmp_path):
        path = tmp_path / "p.part"
        path.write_text("PARTITION 2 1\n0 0\n")
        with pytest.raises(ModelError):
            read_partition(path)

    def test_duplicate_state(self, tmp_path):
        path = tmp_path / "p.part"
        path.write_text("PARTITION 2 1\n0 0\n0 0\n")
        with pytest.raises(ModelError):
            read_partition(path)
