"""Acceptance criteria, one test per criterion, each printing a PASS line.

Run the whole gate with:  pytest tests/test_acceptance.py -v
The end-to-end benchmark is marked slow; deselect with -m "not slow".
"""

import time

import numpy as np
import pytest

import jepamatch.autodiff as ad
import jepamatch.curriculum as cur
import jepamatch.sigreg as sr
from jepamatch.cli import main
from jepamatch.trainer import Trainer, substream
from jepamatch.verify import (
    run_curriculum,
    run_gradcheck,
    run_sigreg_oracle,
    sigreg_reference,
)

from conftest import tiny_world


def _report(name, passed, detail=""):
    print(f"{'PASS' if passed else 'FAIL'} {name} {detail}".rstrip())
    assert passed, f"{name}: {detail}"


class TestAcceptance:
    def test_gradient_suite(self):
        """Analytic gradients of every loss match central differences
        (h=1e-5) to relative error < 1e-4, 100 randomized trials, < 60 s."""
        t0 = time.time()
        results = run_gradcheck(trials=100, tolerance=1e-4)
        elapsed = time.time() - t0
        for res in results:
            _report(res.name, res.passed, res.detail)
        _report("gradient_suite_runtime", elapsed < 60.0, f"{elapsed:.1f}s")

    def test_sigreg_oracle_equivalence(self):
        """Vectorized CF loss equals the per-slice/per-knot/per-sample
        reference to 1e-10 on 50 random instances, < 30 s."""
        t0 = time.time()
        results = {r.name: r for r in run_sigreg_oracle(
            instances=50, include_discrimination=False)}
        elapsed = time.time() - t0
        res = results["sigreg.double_loop_equivalence"]
        _report("sigreg_oracle_equivalence", res.passed, res.detail)
        _report("sigreg_oracle_runtime", elapsed < 30.0, f"{elapsed:.1f}s")

    def test_cf_normalization_zero_knot(self):
        """The t=0 knot contributes exactly 0 to every evaluation."""
        worst = 0.0
        for seed in range(25):
            rng = np.random.default_rng(seed)
            cfg = sr.SigregConfig(num_slices=int(rng.integers(1, 9)),
                                  num_knots=int(rng.choice([3, 9, 17])),
                                  t_max=float(rng.uniform(1.0, 6.0)))
            n, dim = int(rng.integers(1, 16)), int(rng.integers(2, 10))
            z = rng.standard_normal((n, dim)) * rng.uniform(0.1, 3.0)
            mu = rng.standard_normal(dim)
            u = sr.sample_slices(dim, cfg, rng)
            _, per_knot = sigreg_reference(z, mu, float(rng.uniform(0.2, 2.0)),
                                           cfg.knots(), u)
            worst = max(worst, abs(per_knot[cfg.num_knots // 2]))
        _report("cf_normalization_zero_knot", worst <= 1e-12, f"max={worst:.2e}")

    def test_degenerate_closed_form(self):
        """All-zero batch against N(0, 1): loss equals the closed form
        mean_k (1 - exp(-t_k^2/2))^2 over the 17 knots of [-5, 5]."""
        cfg = sr.SigregConfig(num_slices=32, num_knots=17, t_max=5.0)
        knots = cfg.knots()
        expected = float(np.mean((1.0 - np.exp(-0.5 * knots**2)) ** 2))
        worst = 0.0
        for seed in range(5):
            u = sr.sample_slices(8, cfg, np.random.default_rng(seed))
            loss = sr.sigreg_loss(ad.constant(np.zeros((7, 8))), np.zeros(8),
                                  1.0, cfg, slices=u).item()
            worst = max(worst, abs(loss - expected))
        _report("degenerate_closed_form", worst <= 1e-12,
                f"closed_form={expected:.6f} max_diff={worst:.2e}")

    def test_collapse_discrimination(self):
        """Over 20 seeds (N=512, d_z=16, default config): isotropic Gaussian
        samples score strictly below rank-1 and single-point batches."""
        t0 = time.time()
        cfg = sr.SigregConfig()  # the default 1024 slices, 17 knots, t_max 5
        wins = 0
        for seed in range(20):
            rng = np.random.default_rng(7000 + seed)
            gauss = rng.standard_normal((512, 16))
            rank1 = np.outer(rng.standard_normal(512), rng.standard_normal(16))
            point = np.tile(rng.standard_normal(16), (512, 1))
            u = sr.sample_slices(16, cfg, rng)
            mu = np.zeros(16)
            l_g = sr.sigreg_loss(ad.constant(gauss), mu, 1.0, cfg, slices=u).item()
            l_r = sr.sigreg_loss(ad.constant(rank1), mu, 1.0, cfg, slices=u).item()
            l_p = sr.sigreg_loss(ad.constant(point), mu, 1.0, cfg, slices=u).item()
            wins += l_g < l_r and l_g < l_p
        elapsed = time.time() - t0
        _report("collapse_discrimination", wins == 20, f"{wins}/20 seeds")
        _report("collapse_discrimination_runtime", elapsed < 60.0, f"{elapsed:.1f}s")

    def test_repulsion_hand_cases(self):
        """Orthogonal means -> 0; identical means -> 1; cosine -0.5 -> 0."""
        def means_of(rows):
            rows = np.asarray(rows, dtype=np.float64)
            return sr.class_means(ad.constant(rows), np.arange(len(rows)),
                                  np.ones(len(rows)))

        orth = sr.repulsion_loss(means_of([[2.0, 0.0], [0.0, 1.0]])).item()
        same = sr.repulsion_loss(means_of([[1.5, 0.5], [1.5, 0.5]])).item()
        anti = sr.repulsion_loss(
            means_of([[1.0, 0.0], [-0.5, np.sqrt(3) / 2]])).item()
        ok = orth == 0.0 and abs(same - 1.0) <= 1e-12 and anti == 0.0
        _report("repulsion_hand_cases", ok,
                f"orthogonal={orth} identical={same} cos(-0.5)={anti}")

    def test_curriculum_replay(self):
        """Hand-simulated 3-step threshold sequence reproduced exactly,
        ending at counts [10, 5] -> thresholds [0.95, 0.475]."""
        state = cur.ThresholdState(class_count=2, num_unlabeled=15, base_tau=0.95)
        ok1 = np.array_equal(state.thresholds(), [0.0, 0.0])
        state.update(np.array([0, 0, 0, 1]), np.array([0.99, 0.97, 0.2, 0.96]),
                     np.array([0, 1, 2, 3]))
        ok2 = np.array_equal(state.thresholds(), [0.95 * 2 / 12, 0.95 * 1 / 12])
        state.update(
            np.concatenate([np.zeros(10, dtype=int), np.ones(5, dtype=int)]),
            np.full(15, 0.96), np.arange(15),
        )
        ok3 = np.array_equal(state.thresholds(), [0.95, 0.475])
        _report("curriculum_replay", ok1 and ok2 and ok3,
                f"final thresholds={state.thresholds().tolist()}")

    def test_total_loss_degeneracy_bitwise(self):
        """lambda_unsup = lambda_rep = 0 gives a parameter trajectory
        bitwise-equal to a supervised-only loop for 100 iterations."""
        from jepamatch.curriculum import supervised_loss
        from jepamatch.views import make_weak_only

        steps = 100
        dataset, _, params, cfg, augment, scfg, anneal = tiny_world(
            seed=13, t_total=steps, lambda_unsup=0.0, lambda_rep=0.0,
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
            grads = ad.backward(supervised_loss(
                net.classify(net.encode(ad.constant(xl))),
                view.labeled_labels[l_idx]))
            for name, leaf in net.t.items():
                velocity[name] = cfg.momentum * velocity[name] + grads[leaf]
                reference.arrays[name] -= cfg.learning_rate * velocity[name]

        trainer = Trainer(view, params, cfg, augment, scfg, anneal)
        for t in range(steps):
            trainer.step(t)
        equal = all(np.array_equal(params.arrays[k], reference.arrays[k])
                    for k in params.arrays)
        _report("total_loss_degeneracy_bitwise", equal, f"{steps} iterations")

    def test_determinism_byte_identical_metrics(self, tmp_path):
        """Identical config+seed produce byte-identical metrics.csv."""
        import json

        cfg_obj = {
            "seed": 7,
            "dataset": {"class_count": 3, "input_dim": 6, "labels_per_class": 4,
                        "unlabeled_total": 120, "separation": 3.0,
                        "test_per_class": 30},
            "model": {"encoder_widths": [8, 6], "proj_hidden": 8, "proj_out": 4},
            "sigreg": {"num_slices": 6, "num_knots": 5},
            "augment": {"local_crops": 2},
            "train": {"t_total": 20, "batch_labeled": 4, "batch_unlabeled": 4,
                      "metrics_interval": 5},
        }
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(cfg_obj))
        outs = []
        for name in ("r1", "r2"):
            out = tmp_path / name
            assert main(["train", "--config", str(cfg_path), "--out", str(out)]) == 0
            outs.append((out / "metrics.csv").read_bytes())
        _report("determinism_byte_identical_metrics", outs[0] == outs[1],
                f"{len(outs[0])} bytes")

    def test_curriculum_suite_checks(self):
        for res in run_curriculum():
            _report(res.name, res.passed, res.detail)


@pytest.mark.slow
class TestEndToEnd:
    def test_qualitative_reproduction(self):
        """Reference benchmark: the full method versus the threshold-only
        baseline on the 4-class mixture, gamma in {1, 10}, 5 seeds, < 15 min."""
        from jepamatch.benchmark import evaluate_criteria, run_benchmark

        t0 = time.time()
        outcome = run_benchmark()
        elapsed = time.time() - t0
        results = evaluate_criteria(outcome)
        for res in results:
            _report(res.name, res.passed, res.detail)
        _report("e2e_runtime", elapsed < 900.0, f"{elapsed:.0f}s")
