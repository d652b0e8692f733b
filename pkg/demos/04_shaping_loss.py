#!/usr/bin/env python3
# The sketched characteristic-function loss: how it scores healthy versus
# collapsed embedding batches, the annealed target, and mean repulsion.

import numpy as np

import jepamatch.autodiff as ad
import jepamatch.sigreg as sr

cfg = sr.SigregConfig(num_slices=256, num_knots=17, t_max=5.0)
rng = np.random.default_rng(0)
d = 16
u = sr.sample_slices(d, cfg, rng)
mu = np.zeros(d)

batches = {
    "isotropic gaussian": rng.standard_normal((512, d)),
    "rank-1 line": np.outer(rng.standard_normal(512), rng.standard_normal(d)),
    "single point": np.tile(rng.standard_normal(d), (512, 1)),
    "too wide (sigma 2)": 2.0 * rng.standard_normal((512, d)),
}
print("loss against N(0, I):")
for name, z in batches.items():
    loss = sr.sigreg_loss(ad.constant(z), mu, 1.0, cfg, slices=u).item()
    print(f"  {name:20s} {loss:.5f}")

# --- the annealed target tightens clusters over time ----------------------
sched = sr.AnnealSchedule(t_warm=1000, t_total=3000)
print("\nannealed sigma:", [round(sr.anneal_sigma(t, sched), 2)
                            for t in range(0, 3001, 500)])

# --- repulsion pushes class means apart -----------------------------------
def repulsion_of(rows):
    rows = np.asarray(rows, dtype=np.float64)
    means = sr.class_means(ad.constant(rows), np.arange(len(rows)), np.ones(len(rows)))
    return sr.repulsion_loss(means).item()

print("\nrepulsion for mean configurations:")
print("  identical     :", repulsion_of([[1, 1], [1, 1]]))
print("  orthogonal    :", repulsion_of([[1, 0], [0, 1]]))
print("  60 degrees    :", round(repulsion_of([[1, 0], [0.5, np.sqrt(3) / 2]]), 4))
print("  opposite      :", repulsion_of([[1, 0], [-1, 0]]))

# --- centering isolates intra-class spread --------------------------------
z = np.concatenate([rng.standard_normal((64, d)) + 4.0,
                    rng.standard_normal((64, d)) - 4.0])
labels = np.repeat([0, 1], 64)
means = sr.class_means(ad.constant(z), labels, np.ones(128))
centered = sr.center(ad.constant(z), labels, np.ones(128), means)
raw = sr.sigreg_loss(ad.constant(z), mu, 1.0, cfg, slices=u).item()
cen = sr.sigreg_loss(centered, mu, 1.0, cfg, slices=u).item()
print(f"\ntwo separated clusters: raw loss {raw:.4f} -> centered loss {cen:.4f}")
