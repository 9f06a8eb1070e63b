"""
Scoring detections
==================

Detection quality is summarized two ways: mean average precision (the area
under each class's precision-recall curve, averaged over classes) and, for
population surveys, the mean column-wise RMSE of per-image counts.
"""

import numpy as np

from griddet import (
    CountMatrix,
    Detection,
    MatchCriterion,
    ObjectAnnotation,
    average_precision,
    column_rmse,
    match_detections,
    mean_ap,
)

criterion = MatchCriterion(mode="point", tau=16.0)

# One image, two objects of class 0, three detections.
ground_truth = [
    ObjectAnnotation(class_id=0, x=50.0, y=50.0),
    ObjectAnnotation(class_id=0, x=150.0, y=80.0),
]
detections = [
    Detection("img", 0, 0.95, 51.0, 50.0),   # hit
    Detection("img", 0, 0.90, 150.5, 81.0),  # hit
    Detection("img", 0, 0.40, 100.0, 200.0), # far from everything
]
flags = match_detections(detections, ground_truth, criterion)
print("TP flags in input order:", flags.tolist())

scores = np.array([d.score for d in detections])
curve = average_precision(flags, scores, n_gt=len(ground_truth))
print("recall   :", np.round(curve.recall, 3))
print("precision:", np.round(curve.precision, 3))
print(f"AP = {curve.ap:.3f}")

# The classic ranking effect: a single confident false positive above one
# true positive halves the average precision.
half = average_precision(np.array([False, True]), np.array([0.9, 0.8]), n_gt=1)
print(f"FP-above-TP scoreboard AP = {half.ap:.3f}")

# mAP is the unweighted mean over the class set.
print(f"mAP of APs (1.0, 0.5): {mean_ap([curve, half]):.3f}")

# Counting metric: per class, RMSE of per-image counts, averaged over classes.
counts = CountMatrix(
    image_ids=["img-0", "img-1"],
    class_ids=[0],
    y=np.array([[3], [5]]),
    y_hat=np.array([[4], [7]]),
)
per_class, mean_rmse = column_rmse(counts)
print(f"count RMSE = {mean_rmse:.6f}  (sqrt((1 + 4) / 2) = 1.581139)")
