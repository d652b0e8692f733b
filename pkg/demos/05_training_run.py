#!/usr/bin/env python3
# A complete miniature training run, configured in code, with the metrics
# stream printed as it goes. Takes around half a minute.

import numpy as np

from jepamatch.config import (
    build_anneal,
    build_dataset,
    build_model,
    build_sigreg,
    build_test_split,
    parse_config,
)
from jepamatch.trainer import Trainer, batch_metrics, evaluate

cfg = parse_config({
    "seed": 0,
    "dataset": {"class_count": 4, "input_dim": 16, "labels_per_class": 4,
                "unlabeled_total": 1000, "gamma": 5.0, "separation": 3.0,
                "test_per_class": 100},
    "augment": {"weak_noise_sigma": 0.3, "strong_noise_sigma": 0.5,
                "strong_dropout_frac": 0.3, "local_crops": 4},
    "model": {"encoder_widths": [48, 32], "proj_hidden": 48, "proj_out": 8},
    "sigreg": {"num_slices": 32, "num_knots": 17},
    "train": {"t_total": 600, "warmup_fraction": 0.5, "batch_labeled": 16,
              "batch_unlabeled": 16, "learning_rate": 0.002,
              "weight_decay": 0.03, "metrics_interval": 100},
})

dataset = build_dataset(cfg)
test_split = build_test_split(cfg)
params = build_model(cfg)
trainer = Trainer(dataset.train_view(), params, cfg.train, cfg.augment,
                  build_sigreg(cfg), build_anneal(cfg))
truth = dataset.labels[dataset.labeled_count:]

print(f"unlabeled class counts: {np.bincount(truth).tolist()} (gamma=5)")
print(f"{'iter':>5} {'phase':>7} {'sup':>7} {'unsup':>7} {'shaping':>8} "
      f"{'repel':>7} {'acc':>6} {'pl_acc':>6} {'used':>4}")
for t in range(cfg.train.t_total):
    info = trainer.step(t)
    if (t + 1) % cfg.train.metrics_interval == 0:
        acc, _ = evaluate(params, test_split.features, test_split.labels)
        rec = batch_metrics(info, truth, t + 1, acc)
        print(f"{rec.iteration:>5} {trainer.phase(t):>7} {rec.loss_sup:>7.3f} "
              f"{rec.loss_unsup:>7.3f} {rec.loss_sigreg:>8.4f} "
              f"{rec.loss_repulsion:>7.4f} {rec.test_acc:>6.3f} "
              f"{rec.pl_acc:>6.2f} {rec.util_masked:>4}")

acc, per_class = evaluate(params, test_split.features, test_split.labels)
print(f"\nfinal accuracy {acc:.3f}; per class {np.round(per_class, 3).tolist()}")
