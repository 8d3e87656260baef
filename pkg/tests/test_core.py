from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mdpmin.core import (
    Distribution,
    Partition,
    accumulate,
    as_prob,
    finer_than,
    partition_equal,
)
from mdpmin.errors import ModelError

from conftest import random_mdp

F = Fraction


class TestProb:
    def test_accepts_unit_interval(self):
        assert as_prob("1/3") == F(1, 3)
        assert as_prob(0) == 0
        assert as_prob(1) == 1

    def test_rejects_outside_unit_interval(self):
        with pytest.raises(ModelError):
            as_prob(F(3, 2))
        with pytest.raises(ModelError):
            as_prob(F(-1, 2))

    def test_canonical_form(self):
        p = as_prob(F(4, 8))
        assert (p.numerator, p.denominator) == (1, 2)


class TestDistribution:
    def test_from_pairs_merges_and_drops_zeros(self):
        d = Distribution.from_pairs([(2, F(1, 4)), (0, F(1, 2)), (2, F(1, 4)), (1, F(0))])
        assert d.targets == (0, 2)
        assert d.probs == (F(1, 2), F(1, 2))

    def test_sum_must_be_one(self):
        with pytest.raises(ModelError):
            Distribution((0, 1), (F(1, 2), F(1, 3)))

    def test_targets_strictly_increasing(self):
        with pytest.raises(ModelError):
            Distribution((1, 0), (F(1, 2), F(1, 2)))
        with pytest.raises(ModelError):
            Distribution((0, 0), (F(1, 2), F(1, 2)))

    def test_no_nonpositive_probs(self):
        with pytest.raises(ModelError):
            Distribution((0, 1), (F(0), F(1)))

    def test_empty_rejected(self):
        with pytest.raises(ModelError):
            Distribution((), ())


class TestAccumulate:
    def test_full_support_sums_to_one(self):
        mu = Distribution.from_pairs([(0, F(1, 2)), (1, F(1, 2))])
        assert accumulate(mu, {0, 1}) == 1

    def test_empty_block_is_zero(self):
        mu = Distribution.from_pairs([(0, F(1, 2)), (1, F(1, 2))])
        assert accumulate(mu, set()) == 0

    def test_partial_overlap(self):
        # Hand sum: only state 2 of the block carries mass, 2/3.
        mu = Distribution.from_pairs([(0, F(1, 3)), (2, F(2, 3))])
        assert accumulate(mu, {2, 5}) == F(2, 3)


class TestPartitionInvariants:
    def test_from_blocks(self):
        p = Partition.from_blocks([[0, 2], [1]], 3)
        assert p.block_of == (0, 1, 0)
        assert p.n_blocks == 2

    def test_overlap_rejected(self):
        with pytest.raises(ModelError):
            Partition.from_blocks([[0, 1], [1, 2]], 3)

    def test_cover_required(self):
        with pytest.raises(ModelError):
            Partition.from_blocks([[0], [2]], 3)

    def test_empty_block_rejected(self):
        with pytest.raises(ModelError):
            Partition((0, 0), ((0, 1), ()))

    def test_inconsistent_block_of_rejected(self):
        with pytest.raises(ModelError):
            Partition((0, 0), ((0,), (1,)))


class TestFinerThan:
    def test_singletons_refine_everything(self):
        p1 = Partition.from_blocks([[0], [1], [2]], 3)
        p2 = Partition.from_blocks([[0, 1], [2]], 3)
        assert finer_than(p1, p2)

    def test_coarser_is_not_finer(self):
        p1 = Partition.from_blocks([[0, 1], [2]], 3)
        p2 = Partition.from_blocks([[0], [1], [2]], 3)
        assert not finer_than(p1, p2)

    def test_straddling_block(self):
        # {0,2} straddles both blocks of p2.
        p1 = Partition.from_blocks([[0, 2], [1]], 3)
        p2 = Partition.from_blocks([[0, 1], [2]], 3)
        assert not finer_than(p1, p2)

    def test_state_count_mismatch(self):
        with pytest.raises(ModelError):
            finer_than(Partition.trivial(2), Partition.trivial(3))


class TestPartitionEqual:
    def test_identical(self):
        p = Partition.from_blocks([[0, 1], [2]], 3)
        assert partition_equal(p, p)

    def test_renamed_block_ids(self):
        p1 = Partition((0, 0, 1), ((0, 1), (2,)))
        p2 = Partition((1, 1, 0), ((2,), (0, 1)))
        assert partition_equal(p1, p2)

    def test_moved_state_detected(self):
        p1 = Partition.from_blocks([[0, 1], [2]], 3)
        p2 = Partition.from_blocks([[0], [1, 2]], 3)
        assert not partition_equal(p1, p2)

    def test_state_count_mismatch(self):
        with pytest.raises(ModelError):
            partition_equal(Partition.trivial(2), Partition.trivial(3))


def _coarsen(partition: Partition, merge_seed: int) -> Partition:
    """Merge block ids through a seeded surjection: result is coarser by construction."""
    import random

    rng = random.Random(merge_seed)
    k = partition.n_blocks
    target = rng.randint(1, k)
    mapping = [rng.randrange(target) for _ in range(k)]
    return Partition.from_block_of([mapping[b] for b in partition.block_of])


@st.composite
def partition_chain(draw):
    block_of = draw(st.lists(st.integers(0, 5), min_size=1, max_size=30))
    p1 = Partition.from_block_of(block_of)
    p2 = _coarsen(p1, draw(st.integers(0, 2**30)))
    p3 = _coarsen(p2, draw(st.integers(0, 2**30)))
    return p1, p2, p3


class TestFinerThanIsPartialOrder:
    @given(partition_chain())
    @settings(max_examples=200, deadline=None)
    def test_reflexive_transitive_antisymmetric(self, chain):
        p1, p2, p3 = chain
        assert finer_than(p1, p1)
        assert finer_than(p1, p2) and finer_than(p2, p3)
        assert finer_than(p1, p3)
        if finer_than(p2, p1):
            assert partition_equal(p1, p2)


class TestMdpInvariants:
    @pytest.mark.parametrize("seed", range(8))
    def test_pred_index_round_trip(self, seed):
        mdp = random_mdp(seed, max_states=40)
        rebuilt = [
            [dict() for _ in mdp.choices[s]] for s in range(mdp.n_states)
        ]
        for t in range(mdp.n_states):
            for src, ci, p in mdp.pred_index[t]:
                assert t not in rebuilt[src][ci], "edge appears twice in pred_index"
                rebuilt[src][ci][t] = p
        for s in range(mdp.n_states):
            for ci, (_, dist) in enumerate(mdp.choices[s]):
                assert rebuilt[s][ci] == dict(dist.items())

    @pytest.mark.parametrize("seed", range(8))
    def test_every_distribution_sums_to_one(self, seed):
        mdp = random_mdp(seed, max_states=40)
        everything = frozenset(range(mdp.n_states))
        for s in range(mdp.n_states):
            for _, dist in mdp.choices[s]:
                assert accumulate(dist, everything) == 1

    def test_deadlock_state_rejected(self):
        from mdpmin.core import Mdp, VarMeta

        with pytest.raises(ModelError):
            Mdp.build(
                initial=0,
                choices=[[(-1, Distribution.point(1))], []],
                valuations=[(0,), (1,)],
                var_meta=[VarMeta("s", 0, 1)],
            )

    def test_unreachable_state_rejected(self):
        from mdpmin.core import Mdp, VarMeta

        with pytest.raises(ModelError):
            Mdp.build(
                initial=0,
                choices=[[(-1, Distribution.point(0))], [(-1, Distribution.point(0))]],
                valuations=[(0,), (1,)],
                var_meta=[VarMeta("s", 0, 1)],
            )
