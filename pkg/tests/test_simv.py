import itertools

import numpy as np
import pytest

from iapf.core import BinaryMask, InstanceMaskStack
from iapf.errors import DimensionMismatch, EmptyCandidates
from iapf.simv import SemanticMask, collapse_semantic, select_final, vote

from conftest import mask
from oracles import brute_force_vote


def _stack(*masks):
    return InstanceMaskStack(masks=list(masks))


class TestCollapse:
    def test_single_mask_identity(self):
        m = mask(["10", "01"])
        out = collapse_semantic(_stack(m))
        assert np.array_equal(out.bits, m.bits)

    def test_or(self):
        out = collapse_semantic(_stack(mask(["10"]), mask(["01"])))
        assert out.bits.tolist() == [[True, True]]

    def test_idempotent(self):
        m = mask(["110", "001"])
        once = collapse_semantic(_stack(m))
        twice = collapse_semantic(_stack(m, m))
        assert np.array_equal(once.bits, twice.bits)

    def test_monotone(self, rng):
        masks = [BinaryMask(rng.random((5, 5)) > 0.5) for _ in range(4)]
        grown = collapse_semantic(_stack(*masks[:3]))
        full = collapse_semantic(_stack(*masks))
        assert np.array_equal(grown.bits & full.bits, grown.bits)


class TestVote:
    def test_identical_candidates(self):
        m = mask(["10", "01"])
        result = vote([m, m, m])
        assert result.selected_index == 0
        assert result.distances == (0.0, 0.0, 0.0)

    def test_hand_case(self):
        m1, m2, m3 = mask(["10"]), mask(["10"]), mask(["01"])
        result = vote([m1, m2, m3])
        # mean [2/3, 1/3]; L1 distances [2/3, 2/3, 4/3]
        assert result.selected_index == 0
        assert result.distances[0] == pytest.approx(2 / 3)
        assert result.distances[1] == pytest.approx(2 / 3)
        assert result.distances[2] == pytest.approx(4 / 3)

    def test_single_candidate(self):
        result = vote([mask(["11"])])
        assert result.selected_index == 0
        assert result.distances == (0.0,)

    def test_majority_attraction(self):
        a, b = mask(["1100"]), mask(["0011"])
        assert vote([a, a, b]).selected_index in (0, 1)
        assert vote([b, a, a]).selected_index in (1, 2)

    def test_empty(self):
        with pytest.raises(EmptyCandidates):
            vote([])

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            vote([mask(["10"]), mask(["1", "0"])])

    def test_permutation_covariance(self):
        # draw until all distances are distinct; covariance is only exact then
        rng = np.random.default_rng(7)
        while True:
            masks = [BinaryMask(rng.random((4, 4)) > 0.5) for _ in range(4)]
            base = vote(masks)
            if len(set(base.distances)) == len(base.distances):
                break
        perm = [2, 0, 3, 1]
        permuted = vote([masks[i] for i in perm])
        assert perm[permuted.selected_index] == base.selected_index


def _all_masks_2x2():
    out = []
    for bits in itertools.product([False, True], repeat=4):
        out.append(np.array(bits).reshape(2, 2))
    return out


class TestExhaustiveMedoidOracle:
    # lengths 1-3 here; the acceptance suite sweeps length 4 as well
    def test_matches_brute_force_up_to_three_candidates(self):
        atoms = _all_masks_2x2()
        cases = 0
        for length in (1, 2, 3):
            for combo in itertools.product(range(16), repeat=length):
                bits = [atoms[i] for i in combo]
                expected_idx, expected_dist = brute_force_vote(bits)
                result = vote([BinaryMask(b) for b in bits])
                assert result.selected_index == expected_idx, combo
                for got, want in zip(result.distances, expected_dist):
                    assert got == pytest.approx(float(want), abs=1e-12)
                cases += 1
        assert cases == 16 + 16**2 + 16**3


class TestSelectFinal:
    def test_single_run(self):
        m = mask(["10"])
        stack = _stack(m)
        sm = SemanticMask(mask=m, run_index=0)
        final_mask, final_stack = select_final([(sm, stack)])
        assert final_mask is m and final_stack is stack

    def test_medoid_of_aab(self):
        a, b = mask(["1100"]), mask(["0011"])
        runs = [
            (SemanticMask(mask=a, run_index=0), _stack(a)),
            (SemanticMask(mask=a, run_index=1), _stack(a)),
            (SemanticMask(mask=b, run_index=2), _stack(b)),
        ]
        final_mask, _ = select_final(runs)
        assert np.array_equal(final_mask.bits, a.bits)

    def test_pass_through_pairing(self):
        a, b, c = mask(["1000"]), mask(["1110"]), mask(["1100"])
        stacks = [_stack(a), _stack(b), _stack(c)]
        runs = [
            (SemanticMask(mask=m, run_index=i), s)
            for i, (m, s) in enumerate(zip([a, b, c], stacks))
        ]
        result = vote([a, b, c])
        final_mask, final_stack = select_final(runs)
        assert final_stack is stacks[result.selected_index]
        assert np.array_equal(final_mask.bits, [a, b, c][result.selected_index].bits)
