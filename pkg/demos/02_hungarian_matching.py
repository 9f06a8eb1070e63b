"""
Matching predictions to labels
==============================

A set predictor has no canonical output order: if the labels list objects
(A, B) and the model emits (B, A), position-wise comparison would call both
wrong. Minimum-cost bipartite matching on coordinate distance fixes the
bookkeeping before the loss is computed.
"""

import numpy as np

from griddet import build_cost, match_cell, solve_assignment

# Two labels, emitted by the model in the opposite order, slightly off.
labels = np.array([[0.20, 0.20],   # A
                   [0.80, 0.80]])  # B
predictions = np.array([[0.79, 0.81],   # ~B first
                        [0.21, 0.19]])  # ~A second

cost = build_cost(predictions, labels)
print("pairwise distances (rows = predictions, cols = labels):")
print(np.round(cost, 3))

assignment = solve_assignment(cost)
for j, i in enumerate(assignment.match):
    print(f"label {j} -> prediction slot {i}")
print(f"total matched distance: {assignment.total_cost:.4f}")

# The same machinery runs per grid cell during training. Here one real
# object must claim the nearer of two slots; the other slot is padded.
pred_coords = np.array([[0.9, 0.9], [0.35, 0.30]])
present = np.array([1.0, 0.0])
coords = np.array([[0.3, 0.3], [0.0, 0.0]])
matched = match_cell(pred_coords, present, coords, np.array([1, 0]))
print("slot presence after matching:", matched.present)
print("slot coords after matching:\n", matched.coords)

# Optimality sanity check against brute force on a random rectangle.
rng = np.random.default_rng(0)
random_cost = rng.random((5, 3))
best = solve_assignment(random_cost)
import itertools
brute = min(
    sum(random_cost[p, j] for j, p in enumerate(perm))
    for perm in itertools.permutations(range(5), 3)
)
print(f"solver {best.total_cost:.6f} vs brute force {brute:.6f}")
