"""Class balancing with per-class GANs on an imbalanced incident dataset.

Trains the minority-class GAN, compares real and synthetic moments, and
shows the counting contract of balance-and-expand.
"""

import numpy as np

from fpmt import data as dt
from fpmt import gan_augment as ga

# 900 normal windows vs 100 incident windows, standardized
base = dt.generate_synthetic(900, 100, seed=4)
std, _ = dt.standardize(base)
print("class counts before balancing:", std.class_counts())

incident_rows = std.features[std.labels == 1]
model = ga.train_gan(incident_rows, ga.GanConfig(seed=0), class_id=1)
fake = ga.generate(model, 900, np.random.default_rng(0))

print("\nminority-class moments (per feature):")
print("  real mean:", np.round(incident_rows.mean(axis=0), 2))
print("  fake mean:", np.round(fake.mean(axis=0), 2))
print("  real std: ", np.round(incident_rows.std(axis=0), 2))
print("  fake std: ", np.round(fake.std(axis=0), 2))
worst = np.max(np.abs(fake.mean(axis=0) - incident_rows.mean(axis=0))
               / incident_rows.std(axis=0))
print(f"  worst mean gap: {worst:.3f} noise stds")

balanced = ga.balance_and_expand(std, 1000, ga.GanConfig(seed=0))
print("\nafter balance_and_expand to 1000 per class:", balanced.class_counts())
print("synthetic rows:", int(balanced.synthetic.sum()),
      "(real rows preserved byte-identical:",
      bool(np.array_equal(balanced.features[:std.n], std.features)), ")")

# generated values never leave the observed feature range
lo, hi = incident_rows.min(axis=0), incident_rows.max(axis=0)
synth = balanced.features[balanced.synthetic & (balanced.labels == 1)]
print("all synthetic incident rows inside the real bounds:",
      bool(np.all(synth >= lo) and np.all(synth <= hi)))
