"""Walk through the contrastive losses: critics, InfoNCE, and schedules.

Run:  python3 demos/01_contrastive_losses.py
"""

import numpy as np

from alignkit import EmbeddingSet, LossConfig, Schedule, critic, info_nce_loss
from alignkit.contrastive import schedule_term_weights

rng = np.random.default_rng(0)

# --- 1. the three critics on a pair of vectors -----------------------------
a = np.array([1.0, 2.0, -0.5])
b = np.array([0.5, 1.5, 0.5])
print("critics on a fixed vector pair:")
for kind in ("gaussian_l2", "cosine", "l1"):
    print(f"  {kind:12s} h(a, b) = {critic(kind, a, b): .4f}")

# --- 2. InfoNCE over a paired batch, both negative-pairing modes -----------
n, d = 8, 4
base = rng.normal(size=(n, d))
set_a = EmbeddingSet("final", "A", base + 0.1 * rng.normal(size=(n, d)))
set_b = EmbeddingSet("final", "B", base + 0.1 * rng.normal(size=(n, d)))
print("\nInfoNCE on noisy positive pairs (aligned batch of 8):")
for pairing in ("cross_pair", "diagonal"):
    for tau in (0.1, 0.5, 2.0):
        value = info_nce_loss(set_a, set_b, LossConfig("gaussian_l2", tau, pairing))
        print(f"  pairing={pairing:10s} tau={tau:3.1f}  loss = {value:.4f}")

# random (unrelated) pairs score much worse than aligned ones
unrelated = EmbeddingSet("final", "B", rng.normal(size=(n, d)))
cfg = LossConfig("gaussian_l2", 0.5, "cross_pair")
print(f"\n  aligned pairs:   {info_nce_loss(set_a, set_b, cfg):.4f}")
print(f"  unrelated pairs: {info_nce_loss(set_a, unrelated, cfg):.4f}")

# --- 3. which loss terms does each schedule activate? ----------------------
print("\nactive terms over the first 6 iterations of epoch 0 (and epoch 60):")
schedules = [
    Schedule("baseline"),
    Schedule("alternating", weight=1.0),
    Schedule("summed", alpha=0.5),
    Schedule("pretraining", split_epoch=50),
]
for schedule in schedules:
    early = ["+".join(sorted(schedule_term_weights(schedule, 0, it))) for it in range(6)]
    late = "+".join(sorted(schedule_term_weights(schedule, 60, 0)))
    print(f"  {schedule.kind:12s} epoch 0: {early}   epoch 60: [{late}]")
