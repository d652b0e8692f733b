#!/usr/bin/env python3
# Multi-view augmentation and the dynamic-threshold pseudo-labeling loop.

import numpy as np

from jepamatch.curriculum import ThresholdState, pseudo_label
from jepamatch.views import AugmentConfig, make_views

rng = np.random.default_rng(0)
x = np.linspace(-1, 1, 16)
cfg = AugmentConfig(weak_noise_sigma=0.1, strong_noise_sigma=0.5,
                    strong_dropout_frac=0.3, local_window_frac_min=0.25,
                    local_window_frac_max=0.5, local_crops=4)
views = make_views(x, cfg, rng)
print("weak view  :", np.round(views.weak, 2))
print("strong view:", np.round(views.strong, 2), "(note the zeroed coordinates)")
for k, loc in enumerate(views.locals):
    window = np.nonzero(loc)[0]
    print(f"local {k}: window [{window[0]}, {window[-1]}], {window.size}/16 coords")

# --- thresholds adapt to per-class confident counts -----------------------
state = ThresholdState(class_count=3, num_unlabeled=300, base_tau=0.95)
print("\ncold start thresholds:", state.thresholds(), "(everything admitted)")

# simulate a model that learns class 0 quickly, class 2 slowly
for step in range(6):
    ids = rng.integers(0, 300, size=64)
    klass = rng.choice(3, size=64, p=[0.5, 0.3, 0.2])
    conf = np.clip(rng.normal([0.97, 0.9, 0.7][0], 0.1, size=64), 0, 1)
    conf = np.where(klass == 0, conf, np.where(klass == 1, conf - 0.05, conf - 0.25))
    state.update(klass, conf, ids)
    tau = state.thresholds()
    print(f"step {step}: counts={state.counts.tolist()} unused={state.unused} "
          f"tau={np.round(tau, 3).tolist()}")

p = rng.dirichlet([4, 1, 1], size=8)
res = pseudo_label(p, state)
print("\npseudo:", res.pseudo.tolist(), "conf:", np.round(res.confidence, 2).tolist())
print("mask  :", res.mask.astype(int).tolist(),
      "(confidence gated by the per-class thresholds)")
