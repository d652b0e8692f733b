"""Dynamic thresholds, pseudo-labels, and the two classification losses."""

import numpy as np
import pytest

import jepamatch.autodiff as ad
import jepamatch.curriculum as cur
from jepamatch.errors import ConfigError, ContractError
from jepamatch.verify import cross_entropy_reference


class TestThresholdState:
    def test_equal_counts_no_unused_gives_base_tau(self):
        state = cur.ThresholdState(class_count=2, num_unlabeled=8, base_tau=0.95)
        state.update(np.array([0] * 4 + [1] * 4), np.full(8, 0.99), np.arange(8))
        np.testing.assert_array_equal(state.thresholds(), [0.95, 0.95])

    def test_counts_ten_five_give_decided_linear_mapping(self):
        state = cur.ThresholdState(class_count=2, num_unlabeled=15, base_tau=0.95)
        state.update(np.array([0] * 10 + [1] * 5), np.full(15, 0.96), np.arange(15))
        np.testing.assert_array_equal(state.thresholds(), [0.95, 0.475])

    def test_cold_start_thresholds_are_zero_and_admit_everything(self):
        state = cur.ThresholdState(class_count=3, num_unlabeled=10, base_tau=0.95)
        np.testing.assert_array_equal(state.thresholds(), [0.0, 0.0, 0.0])
        p = np.full((4, 3), 1 / 3)
        res = cur.pseudo_label(p, state)
        np.testing.assert_array_equal(res.mask, np.ones(4))

    def test_unused_pool_keeps_thresholds_low(self):
        state = cur.ThresholdState(class_count=2, num_unlabeled=100, base_tau=0.95)
        state.update(np.array([0, 0]), np.array([0.99, 0.99]), np.array([0, 1]))
        # counts [2, 0], unused 98 -> denominators come from the unused pool
        np.testing.assert_allclose(state.thresholds(), [0.95 * 2 / 98, 0.0])

    def test_latest_confident_assignment_replaces_previous(self):
        state = cur.ThresholdState(class_count=2, num_unlabeled=4, base_tau=0.9)
        state.update(np.array([0]), np.array([0.95]), np.array([2]))
        assert state.counts.tolist() == [1, 0]
        state.update(np.array([1]), np.array([0.95]), np.array([2]))
        assert state.counts.tolist() == [0, 1]
        # unconfident predictions do not erase the record
        state.update(np.array([0]), np.array([0.5]), np.array([2]))
        assert state.counts.tolist() == [0, 1]

    def test_counts_plus_unused_is_total_tracked(self):
        state = cur.ThresholdState(class_count=3, num_unlabeled=50, base_tau=0.9)
        rng = np.random.default_rng(0)
        for _ in range(5):
            ids = rng.integers(0, 50, size=16)
            state.update(rng.integers(0, 3, size=16), rng.random(16), ids)
            assert int(state.counts.sum()) + state.unused == 50

    def test_thresholds_never_exceed_base(self):
        state = cur.ThresholdState(class_count=4, num_unlabeled=64, base_tau=0.8,
                                   mapping="convex")
        rng = np.random.default_rng(1)
        for _ in range(10):
            state.update(rng.integers(0, 4, size=32), rng.random(32),
                         rng.integers(0, 64, size=32))
            assert state.thresholds().max() <= 0.8 + 1e-15

    def test_concave_mapping_rejected(self):
        with pytest.raises(ConfigError):
            cur.ThresholdState(class_count=2, num_unlabeled=4, mapping="concave")

    def test_free_function_wrapper(self):
        state = cur.ThresholdState(class_count=2, num_unlabeled=2)
        out = cur.update_thresholds(state, np.array([0]), np.array([0.99]), np.array([0]))
        assert out is state
        assert state.counts.tolist() == [1, 0]


class TestPseudoLabel:
    def _confident_state(self):
        state = cur.ThresholdState(class_count=2, num_unlabeled=4, base_tau=0.95)
        state.update(np.array([0, 0, 1, 1]), np.full(4, 0.99), np.arange(4))
        return state  # thresholds [0.95, 0.95]

    def test_confident_sample_masked_in(self):
        res = cur.pseudo_label(np.array([[0.97, 0.03]]), self._confident_state())
        assert res.pseudo[0] == 0 and res.mask[0] == 1.0

    def test_unconfident_sample_masked_out(self):
        res = cur.pseudo_label(np.array([[0.60, 0.40]]), self._confident_state())
        assert res.pseudo[0] == 0 and res.mask[0] == 0.0

    def test_exact_tie_breaks_to_lowest_index(self):
        res = cur.pseudo_label(np.array([[0.5, 0.5]]), self._confident_state())
        assert res.pseudo[0] == 0

    def test_mask_matches_invariant_bitwise(self):
        state = self._confident_state()
        rng = np.random.default_rng(2)
        p = rng.dirichlet(np.ones(2), size=64)
        res = cur.pseudo_label(p, state)
        tau = state.thresholds()
        expected = (p.max(axis=1) >= tau[p.argmax(axis=1)]).astype(float)
        np.testing.assert_array_equal(res.mask, expected)

    def test_non_probability_rows_rejected(self):
        with pytest.raises(ContractError):
            cur.pseudo_label(np.array([[0.9, 0.3]]), self._confident_state())

    def test_raising_base_tau_with_fixed_state_never_admits_more(self):
        rng = np.random.default_rng(3)
        p = rng.dirichlet(np.full(3, 0.5), size=128)
        seed_state = cur.ThresholdState(class_count=3, num_unlabeled=128, base_tau=0.5)
        seed_state.update(p.argmax(axis=1), p.max(axis=1), np.arange(128))
        admitted = []
        for tau in (0.4, 0.6, 0.8, 0.95):
            state = cur.ThresholdState(class_count=3, num_unlabeled=128, base_tau=tau)
            state.assigned = seed_state.assigned.copy()  # same counts, new base
            admitted.append(int(cur.pseudo_label(p, state).mask.sum()))
        assert all(a >= b for a, b in zip(admitted, admitted[1:]))


class TestSupervisedLoss:
    def test_saturated_and_uniform_cases(self):
        logits = np.array([[30.0, 0.0]])
        assert cur.supervised_loss(ad.constant(logits), np.array([0])).item() < 1e-10
        uniform = np.zeros((1, 4))
        assert abs(cur.supervised_loss(ad.constant(uniform), np.array([2])).item()
                   - np.log(4)) < 1e-12

    def test_matches_reference(self):
        rng = np.random.default_rng(4)
        logits = rng.standard_normal((5, 3))
        labels = rng.integers(0, 3, size=5)
        fast = cur.supervised_loss(ad.constant(logits), labels).item()
        ref = cross_entropy_reference(logits, cur.one_hot(labels, 3))
        assert abs(fast - ref) < 1e-12


class TestUnsupervisedLoss:
    def _result(self, pseudo, mask):
        return cur.PseudoBatchResult(
            pseudo=np.asarray(pseudo), confidence=np.ones(len(pseudo)),
            mask=np.asarray(mask, dtype=np.float64),
        )

    def test_all_masks_zero_gives_zero_regardless_of_logits(self):
        rng = np.random.default_rng(5)
        logits = ad.constant(rng.standard_normal((6, 3)) * 50)
        res = self._result(rng.integers(0, 3, size=6), np.zeros(6))
        assert cur.unsupervised_loss(logits, res).item() == 0.0

    def test_single_confident_correct_prediction_near_zero(self):
        logits = ad.constant(np.array([[40.0, 0.0], [0.0, 0.0]]))
        res = self._result([0, 1], [1.0, 0.0])
        assert cur.unsupervised_loss(logits, res).item() < 1e-10

    def test_mixed_batch_matches_masked_reference(self):
        rng = np.random.default_rng(6)
        logits = rng.standard_normal((7, 4))
        pseudo = rng.integers(0, 4, size=7)
        mask = (rng.random(7) < 0.5).astype(np.float64)
        fast = cur.unsupervised_loss(ad.constant(logits), self._result(pseudo, mask)).item()
        ref = cross_entropy_reference(logits, cur.one_hot(pseudo, 4), weights=mask)
        assert abs(fast - ref) < 1e-12

    def test_normalized_by_full_batch_size(self):
        logits = np.zeros((4, 2))  # per-sample CE is ln 2
        res = self._result([0, 0, 0, 0], [1.0, 1.0, 0.0, 0.0])
        loss = cur.unsupervised_loss(ad.constant(logits), res).item()
        assert abs(loss - 2 * np.log(2) / 4) < 1e-12

    def test_gradient_opaque_pseudo_labels(self):
        """Perturbing weak-view logits contributes no gradient through the
        pseudo-labels or masks: the weak branch stays off the loss graph."""
        rng = np.random.default_rng(7)
        tape = ad.Tape()
        weak_logits = tape.leaf(rng.standard_normal((5, 3)))
        strong_logits = tape.leaf(rng.standard_normal((5, 3)))
        p_weak = np.exp(weak_logits.data)
        p_weak /= p_weak.sum(axis=1, keepdims=True)  # detached by construction
        state = cur.ThresholdState(class_count=3, num_unlabeled=5, base_tau=0.5)
        state.update(p_weak.argmax(axis=1), p_weak.max(axis=1), np.arange(5))
        res = cur.pseudo_label(p_weak, state)
        grads = ad.backward(cur.unsupervised_loss(strong_logits, res))
        np.testing.assert_array_equal(grads[weak_logits], np.zeros((5, 3)))
        assert np.abs(grads[strong_logits]).max() > 0
