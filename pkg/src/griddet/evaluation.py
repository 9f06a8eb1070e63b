"""Detection scoring: per-class AP, mAP, PR curves and count RMSE.

Matching follows the standard greedy protocol: detections are visited in
descending score order and claim the best unmatched same-class ground truth
that satisfies the criterion (center distance <= tau for point labels,
IoU >= iou_min for boxes); each ground truth can be claimed once. AP is the
all-points area under the precision-recall curve with the usual monotone
precision envelope.

The counting metric is the mean column-wise RMSE: per class, the root mean
squared count error over images, averaged over classes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .codec import Detection, GridSpec, ObjectAnnotation, cell_of

__all__ = [
    "MatchCriterion",
    "PRCurve",
    "CountMatrix",
    "match_detections",
    "average_precision",
    "mean_ap",
    "column_rmse",
    "counts_from_detections",
    "counts_from_annotations",
    "evaluate_detections",
]


@dataclass(frozen=True)
class MatchCriterion:
    """What counts as a correct detection.

    ``mode`` is "point" (center distance <= tau pixels) or "box"
    (IoU >= iou_min). With ``cell_center_rule`` on, the detection must also
    lie in the grid cell containing the ground-truth center, which requires
    ``grid`` to be set.
    """

    mode: str = "point"
    tau: float | None = None
    iou_min: float | None = None
    cell_center_rule: bool = False
    grid: GridSpec | None = None

    def __post_init__(self):
        if self.mode not in ("point", "box"):
            raise ValueError(f"unknown match mode {self.mode!r}")
        if self.mode == "point":
            if self.tau is None or self.tau <= 0:
                raise ValueError("point mode requires tau > 0")
        else:
            if self.iou_min is None or not (0 < self.iou_min <= 1):
                raise ValueError("box mode requires iou_min in (0, 1]")
        if self.cell_center_rule and self.grid is None:
            raise ValueError("cell_center_rule requires a GridSpec")


@dataclass
class PRCurve:
    """Cumulative precision/recall points (recall nondecreasing) and their AP."""

    recall: np.ndarray
    precision: np.ndarray
    ap: float


@dataclass
class CountMatrix:
    """Per-image, per-class ground-truth and predicted population counts."""

    image_ids: list[str]
    class_ids: list[int]
    y: np.ndarray  # (N, K) ground-truth counts
    y_hat: np.ndarray  # (N, K) predicted counts

    def __post_init__(self):
        n, k = len(self.image_ids), len(self.class_ids)
        if self.y.shape != (n, k) or self.y_hat.shape != (n, k):
            raise ValueError("count arrays must be (num_images, num_classes)")
        for arr in (self.y, self.y_hat):
            if (arr < 0).any():
                raise ValueError("counts must be nonnegative")


def _iou(a: Detection, b: ObjectAnnotation) -> float:
    if a.w is None or a.h is None or b.w is None or b.h is None:
        raise ValueError("box IoU requires w and h on both sides")
    ax0, ay0 = a.x - a.w / 2, a.y - a.h / 2
    ax1, ay1 = a.x + a.w / 2, a.y + a.h / 2
    bx0, by0 = b.x - b.w / 2, b.y - b.h / 2
    bx1, by1 = b.x + b.w / 2, b.y + b.h / 2
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = a.w * a.h + b.w * b.h - inter
    return inter / union


def _same_cell(det: Detection, gt: ObjectAnnotation, grid: GridSpec) -> bool:
    det_point = ObjectAnnotation(class_id=det.class_id, x=det.x, y=det.y)
    try:
        return cell_of(det_point, grid) == cell_of(gt, grid)
    except ValueError:
        return False  # detection decoded outside the image cannot satisfy the rule


def match_detections(
    detections: list[Detection],
    ground_truth: list[ObjectAnnotation],
    criterion: MatchCriterion,
) -> np.ndarray:
    """Flag each detection of one image as TP (True) or FP (False).

    Detections are processed in descending score order (stable on ties);
    each claims the closest / highest-IoU unmatched same-class ground truth
    satisfying the criterion. Returned flags align with the input order.
    """
    order = sorted(range(len(detections)), key=lambda i: -detections[i].score)
    flags = np.zeros(len(detections), dtype=bool)
    taken = [False] * len(ground_truth)
    for idx in order:
        det = detections[idx]
        best_j = -1
        best_key = None
        for j, gt in enumerate(ground_truth):
            if taken[j] or gt.class_id != det.class_id:
                continue
            if criterion.mode == "point":
                dist = math.hypot(det.x - gt.x, det.y - gt.y)
                if dist > criterion.tau:
                    continue
                key = dist  # smaller is better
            else:
                iou = _iou(det, gt)
                if iou < criterion.iou_min:
                    continue
                key = -iou  # larger IoU is better
            if criterion.cell_center_rule and not _same_cell(det, gt, criterion.grid):
                continue
            if best_key is None or key < best_key:
                best_key = key
                best_j = j
        if best_j >= 0:
            taken[best_j] = True
            flags[idx] = True
    return flags


def average_precision(
    flags: np.ndarray, scores: np.ndarray, n_gt: int
) -> PRCurve:
    """All-points AP: area under the monotone precision envelope over recall.

    ``flags`` marks TPs; detections are ranked by descending score (stable
    on ties). No ground truth and no detections give AP 0 by convention.
    """
    flags = np.asarray(flags, dtype=bool)
    scores = np.asarray(scores, dtype=np.float64)
    if flags.shape != scores.shape:
        raise ValueError("flags and scores must have the same length")
    if n_gt < 0:
        raise ValueError("n_gt must be >= 0")
    if n_gt == 0 or flags.size == 0:
        return PRCurve(recall=np.zeros(0), precision=np.zeros(0), ap=0.0)
    order = sorted(range(len(scores)), key=lambda i: -scores[i])
    tp = np.cumsum(flags[order])
    ranks = np.arange(1, len(order) + 1)
    precision = tp / ranks
    recall = tp / n_gt
    # Monotone envelope, then sum rectangle areas between recall changes.
    mrec = np.concatenate(([0.0], recall))
    mpre = np.concatenate(([0.0], precision))
    for i in range(mpre.size - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    changed = np.nonzero(mrec[1:] != mrec[:-1])[0]
    ap = float(np.sum((mrec[changed + 1] - mrec[changed]) * mpre[changed + 1]))
    return PRCurve(recall=recall, precision=precision, ap=ap)


def mean_ap(curves: dict[int, PRCurve] | list[PRCurve]) -> float:
    """Unweighted mean AP over the configured class set."""
    aps = (
        [c.ap for c in curves.values()]
        if isinstance(curves, dict)
        else [c.ap for c in curves]
    )
    if not aps:
        raise ValueError("mean_ap needs at least one class")
    return float(np.mean(aps))


def column_rmse(counts: CountMatrix) -> tuple[np.ndarray, float]:
    """Per-class RMSE of population counts over images, and its class mean."""
    diff = counts.y.astype(np.float64) - counts.y_hat.astype(np.float64)
    per_class = np.sqrt((diff * diff).mean(axis=0))
    return per_class, float(per_class.mean())


def counts_from_detections(
    detections: list[Detection],
    image_ids: list[str],
    class_ids: list[int],
    threshold: float,
) -> np.ndarray:
    """Predicted counts: detections with score >= threshold, per image and class."""
    image_index = {im: i for i, im in enumerate(image_ids)}
    class_index = {c: j for j, c in enumerate(class_ids)}
    out = np.zeros((len(image_ids), len(class_ids)), dtype=np.int64)
    for det in detections:
        if det.score < threshold:
            continue
        i = image_index.get(det.image_id)
        j = class_index.get(det.class_id)
        if i is not None and j is not None:
            out[i, j] += 1
    return out


def counts_from_annotations(
    labels: dict[str, list[ObjectAnnotation]],
    image_ids: list[str],
    class_ids: list[int],
) -> np.ndarray:
    """Ground-truth counts per image and class."""
    class_index = {c: j for j, c in enumerate(class_ids)}
    out = np.zeros((len(image_ids), len(class_ids)), dtype=np.int64)
    for i, image_id in enumerate(image_ids):
        for ann in labels.get(image_id, []):
            j = class_index.get(ann.class_id)
            if j is not None:
                out[i, j] += 1
    return out


@dataclass
class EvaluationResult:
    """Everything the results file and report need."""

    class_ids: list[int]
    curves: dict[int, PRCurve]
    map: float
    per_class_rmse: dict[int, float]
    mean_rmse: float
    counts: CountMatrix
    warnings: list[str] = field(default_factory=list)


def evaluate_detections(
    detections: list[Detection],
    labels: dict[str, list[ObjectAnnotation]],
    class_ids: list[int],
    criterion: MatchCriterion,
    count_threshold: float = 0.5,
    threads: int = 1,
) -> EvaluationResult:
    """Score detections against labels over a whole image set.

    Matching is per image; scores are pooled per class across images for
    the AP sweep. ``class_ids`` fixes the class set (classes without ground
    truth contribute AP 0). Count RMSE uses ``count_threshold``.
    """
    image_ids = sorted(labels.keys())
    by_image: dict[str, list[Detection]] = {im: [] for im in image_ids}
    for det in detections:
        if det.image_id in by_image:
            by_image[det.image_id].append(det)

    def _match(image_id: str) -> np.ndarray:
        return match_detections(by_image[image_id], labels[image_id], criterion)

    if threads > 1 and len(image_ids) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            flag_list = list(pool.map(_match, image_ids))
        flags_by_image = dict(zip(image_ids, flag_list))
    else:
        flags_by_image = {im: _match(im) for im in image_ids}

    curves: dict[int, PRCurve] = {}
    for cls in class_ids:
        scores, flags = [], []
        for im in image_ids:
            for det, flag in zip(by_image[im], flags_by_image[im]):
                if det.class_id == cls:
                    scores.append(det.score)
                    flags.append(flag)
        n_gt = sum(
            1 for im in image_ids for a in labels[im] if a.class_id == cls
        )
        curves[cls] = average_precision(
            np.asarray(flags, dtype=bool), np.asarray(scores), n_gt
        )
    pooled = [d for im in image_ids for d in by_image[im]]
    counts = CountMatrix(
        image_ids=image_ids,
        class_ids=list(class_ids),
        y=counts_from_annotations(labels, image_ids, class_ids),
        y_hat=counts_from_detections(pooled, image_ids, class_ids, count_threshold),
    )
    per_class, mean_rmse = column_rmse(counts)
    return EvaluationResult(
        class_ids=list(class_ids),
        curves=curves,
        map=mean_ap(curves),
        per_class_rmse={c: float(v) for c, v in zip(class_ids, per_class)},
        mean_rmse=mean_rmse,
        counts=counts,
    )
