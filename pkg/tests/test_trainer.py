"""Training loop: loss composition, phases, determinism, metric contracts."""

import numpy as np
import pytest

import jepamatch.autodiff as ad
from jepamatch.curriculum import supervised_loss
from jepamatch.errors import ContractError
from jepamatch.sigreg import anneal_sigma
from jepamatch.trainer import (
    Trainer,
    evaluate,
    prediction_loss,
    substream,
    train_run,
)
from jepamatch.views import make_weak_only

from conftest import tiny_world


class TestPredictionLoss:
    def test_identical_views_zero_for_both_metrics(self):
        z = ad.constant(np.random.default_rng(0).standard_normal((4, 3)))
        for metric in ("squared_euclidean", "cosine"):
            assert prediction_loss(z, z, [z, z], metric).item() <= 1e-12

    def test_squared_euclidean_hand_case(self):
        zw = ad.constant(np.array([[1.0, 2.0]]))
        zs = ad.constant(np.array([[4.0, -2.0]]))
        # (4-1)^2 + (-2-2)^2 = 25, batch of one
        assert prediction_loss(zw, zs, []).item() == 25.0

    def test_cosine_orthogonal_unit_vectors(self):
        zw = ad.constant(np.array([[1.0, 0.0]]))
        zs = ad.constant(np.array([[0.0, 1.0]]))
        assert abs(prediction_loss(zw, zs, [], "cosine").item() - 1.0) <= 1e-9

    def test_local_views_add_up(self):
        zw = ad.constant(np.array([[0.0, 0.0]]))
        zs = ad.constant(np.array([[1.0, 0.0]]))
        zl = ad.constant(np.array([[0.0, 2.0]]))
        assert prediction_loss(zw, zs, [zl]).item() == 5.0

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ContractError):
            prediction_loss(ad.constant(np.ones((2, 3))), ad.constant(np.ones((2, 2))), [])

    def test_detached_target_blocks_its_gradient_path(self):
        rng = np.random.default_rng(1)
        zw_data = rng.standard_normal((3, 4))
        zs_data = rng.standard_normal((3, 4))

        tape = ad.Tape()
        zw, zs = tape.leaf(zw_data), tape.leaf(zs_data)
        grads = ad.backward(prediction_loss(ad.detach(zw), zs, []))
        np.testing.assert_array_equal(grads[zw], np.zeros((3, 4)))
        assert np.abs(grads[zs]).max() > 0

        tape = ad.Tape()
        zw, zs = tape.leaf(zw_data), tape.leaf(zs_data)
        grads = ad.backward(prediction_loss(zw, zs, []))
        assert np.abs(grads[zw]).max() > 0


class TestPhases:
    def test_phase_boundary(self, world):
        dataset, _, params, cfg, augment, scfg, anneal = world
        trainer = Trainer(dataset.train_view(), params, cfg, augment, scfg, anneal)
        assert cfg.t_warm == 4
        assert trainer.phase(cfg.t_warm - 1) == "warmup"
        assert trainer.phase(cfg.t_warm) == "main"

    def test_warmup_steps_log_zero_repulsion_and_unit_sigma(self, world):
        dataset, test_split, params, cfg, augment, scfg, anneal = world
        records = train_run(dataset, test_split, params, cfg, augment, scfg, anneal)
        for rec in records:
            if rec.iteration <= cfg.t_warm:
                assert rec.loss_repulsion == 0.0
                assert rec.sigma_t == 1.0
            assert rec.sigma_t == anneal_sigma(rec.iteration - 1, anneal)

    def test_total_loss_decomposition(self, world):
        dataset, test_split, params, cfg, augment, scfg, anneal = world
        records = train_run(dataset, test_split, params, cfg, augment, scfg, anneal)
        for rec in records:
            rep_combined = ((1 - cfg.beta) * rec.loss_pred
                            + cfg.beta * rec.loss_sigreg + rec.loss_repulsion)
            total = (rec.loss_sup + cfg.lambda_unsup * rec.loss_unsup
                     + cfg.lambda_rep * rep_combined)
            assert abs(total - rec.loss_total) <= 1e-12


class TestSupervisedDegeneracy:
    def test_zero_weights_match_supervised_only_loop_bitwise(self):
        """lambda_unsup = lambda_rep = 0 must produce the exact parameter
        trajectory of a plain supervised loop over the same substreams."""
        steps = 100
        dataset, test_split, params, cfg, augment, scfg, anneal = tiny_world(
            seed=3, t_total=steps, lambda_unsup=0.0, lambda_rep=0.0,
        )
        view = dataset.train_view()

        reference = params.copy()
        velocity = {k: np.zeros_like(v) for k, v in reference.arrays.items()}
        n = view.labeled_features.shape[0]
        for t in range(steps):
            l_idx = substream(cfg.seed, "batch_labeled", t).integers(
                0, n, size=cfg.batch_labeled)
            rng_l = substream(cfg.seed, "augment_labeled", t)
            xl = np.stack([make_weak_only(x, augment, rng_l)
                           for x in view.labeled_features[l_idx]])
            tape = ad.Tape()
            net = reference.bind(tape)
            loss = supervised_loss(net.classify(net.encode(ad.constant(xl))),
                                   view.labeled_labels[l_idx])
            grads = ad.backward(loss)
            for name, leaf in net.t.items():
                velocity[name] = cfg.momentum * velocity[name] + grads[leaf]
                reference.arrays[name] = (reference.arrays[name]
                                          - cfg.learning_rate * velocity[name])

        trainer = Trainer(view, params, cfg, augment, scfg, anneal)
        for t in range(steps):
            trainer.step(t)

        for name in params.arrays:
            assert np.array_equal(params.arrays[name], reference.arrays[name]), name

    def test_lambda_rep_zero_leaves_projector_untouched(self):
        dataset, test_split, params, cfg, augment, scfg, anneal = tiny_world(
            seed=4, t_total=6, lambda_rep=0.0,
        )
        before = {k: v.copy() for k, v in params.arrays.items() if "projector" in k}
        train_run(dataset, test_split, params, cfg, augment, scfg, anneal)
        for k, v in before.items():
            assert np.array_equal(params.arrays[k], v)


class TestDeterminism:
    def test_identical_seed_identical_records(self):
        a = tiny_world(seed=5, t_total=8)
        b = tiny_world(seed=5, t_total=8)
        rec_a = train_run(*a[:2], a[2], *a[3:])
        rec_b = train_run(*b[:2], b[2], *b[3:])
        assert [r.csv_row() for r in rec_a] == [r.csv_row() for r in rec_b]

    def test_different_seed_differs(self):
        a = tiny_world(seed=6, t_total=8)
        b = tiny_world(seed=7, t_total=8)
        rec_a = train_run(*a[:2], a[2], *a[3:])
        rec_b = train_run(*b[:2], b[2], *b[3:])
        assert [r.csv_row() for r in rec_a] != [r.csv_row() for r in rec_b]


class TestGroundTruthIsolation:
    def test_unlabeled_ground_truth_only_reaches_metrics(self):
        a = tiny_world(seed=8, t_total=10)
        b = tiny_world(seed=8, t_total=10)
        dataset_b = b[0]
        # corrupt the hidden unlabeled ground truth only
        n = dataset_b.labeled_count
        dataset_b.labels[n:] = (dataset_b.labels[n:] + 1) % dataset_b.class_count
        rec_a = train_run(*a[:2], a[2], *a[3:])
        rec_b = train_run(dataset_b, b[1], b[2], *b[3:])
        params_a, params_b = a[2], b[2]
        for name in params_a.arrays:
            assert np.array_equal(params_a.arrays[name], params_b.arrays[name])
        # metrics do see the truth, so the pseudo-label accuracies diverge
        assert [r.pl_acc for r in rec_a] != [r.pl_acc for r in rec_b]


class TestEvaluate:
    def test_perfect_predictions_give_one(self, world):
        dataset, test_split, params, *_ = world
        # train nothing; fabricate a model that classifies by the known centers
        acc, per_class = evaluate(params, test_split.features, test_split.labels)
        assert 0.0 <= acc <= 1.0
        weights = np.bincount(test_split.labels, minlength=3) / test_split.labels.size
        assert abs((per_class * weights).sum() - acc) <= 1e-12

    def test_uniform_random_logits_near_chance(self):
        from jepamatch.nets import NetDims, init_params

        rng = np.random.default_rng(9)
        dims = NetDims(input_dim=4, encoder_widths=(5, 5), class_count=4,
                       proj_hidden=6, proj_out=4)
        params = init_params(1, dims)
        # kill the signal: random features, labels independent of features
        features = rng.standard_normal((4000, 4))
        labels = rng.integers(0, 4, size=4000)
        acc, _ = evaluate(params, features, labels)
        # binomial 3-sigma band around chance level
        band = 3 * np.sqrt(0.25 * 0.75 / 4000)
        assert abs(acc - 0.25) <= band


class TestMetricContracts:
    def test_count_bounds_and_column_order(self, world):
        dataset, test_split, params, cfg, augment, scfg, anneal = world
        records = train_run(dataset, test_split, params, cfg, augment, scfg, anneal)
        for rec in records:
            assert rec.max_class_count <= rec.util_masked <= cfg.batch_unlabeled
            assert rec.util_correct <= rec.util_masked
            assert 0.0 <= rec.pl_acc <= 1.0
            assert 0.0 <= rec.test_acc <= 1.0

    def test_rows_exist_at_warm_boundary_and_final(self, world):
        dataset, test_split, params, cfg, augment, scfg, anneal = world
        records = train_run(dataset, test_split, params, cfg, augment, scfg, anneal)
        iters = [r.iteration for r in records]
        assert cfg.t_warm in iters
        assert cfg.t_total in iters
