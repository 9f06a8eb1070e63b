import math

import numpy as np
import pytest

from griddet.codec import Detection, GridSpec, ObjectAnnotation
from griddet.evaluation import (
    CountMatrix,
    MatchCriterion,
    average_precision,
    column_rmse,
    counts_from_annotations,
    counts_from_detections,
    evaluate_detections,
    match_detections,
    mean_ap,
)

POINT = MatchCriterion(mode="point", tau=16.0)


def det(x, y, score, cls=0, image_id="img", w=None, h=None):
    return Detection(image_id=image_id, class_id=cls, score=score, x=x, y=y, w=w, h=h)


def gt(x, y, cls=0, w=None, h=None):
    return ObjectAnnotation(class_id=cls, x=x, y=y, w=w, h=h)


def reference_greedy_flags(detections, ground_truth, criterion):
    """Independent plain-python reimplementation of the greedy protocol."""
    order = sorted(range(len(detections)), key=lambda i: -detections[i].score)
    flags = [False] * len(detections)
    free = list(range(len(ground_truth)))
    for i in order:
        d = detections[i]
        candidates = []
        for j in free:
            g = ground_truth[j]
            if g.class_id != d.class_id:
                continue
            if criterion.mode == "point":
                dist = math.hypot(d.x - g.x, d.y - g.y)
                if dist <= criterion.tau:
                    candidates.append((dist, j))
            else:
                raise NotImplementedError
        if candidates:
            candidates.sort()
            flags[i] = True
            free.remove(candidates[0][1])
    return flags


class TestMatchDetections:
    def test_single_hit(self):
        flags = match_detections([det(10, 10, 0.9)], [gt(10, 10)], POINT)
        assert flags.tolist() == [True]

    def test_single_use_ground_truth(self):
        dets = [det(10, 10, 0.6), det(11, 10, 0.9)]
        flags = match_detections(dets, [gt(10, 10)], POINT)
        assert flags.tolist() == [False, True]  # higher score claims the object

    def test_class_must_match(self):
        flags = match_detections([det(10, 10, 0.9, cls=1)], [gt(10, 10, cls=0)], POINT)
        assert flags.tolist() == [False]

    def test_distance_gate(self):
        flags = match_detections([det(10, 10, 0.9)], [gt(40, 10)], POINT)
        assert flags.tolist() == [False]

    def test_matches_reference_implementation_on_random_scenes(self):
        rng = np.random.default_rng(21)
        crit = MatchCriterion(mode="point", tau=12.0)
        for _ in range(50):
            n_det = int(rng.integers(0, 12))
            n_gt = int(rng.integers(0, 8))
            dets = [
                det(
                    float(rng.uniform(0, 100)),
                    float(rng.uniform(0, 100)),
                    float(rng.random()),
                    cls=int(rng.integers(0, 3)),
                )
                for _ in range(n_det)
            ]
            gts = [
                gt(
                    float(rng.uniform(0, 100)),
                    float(rng.uniform(0, 100)),
                    cls=int(rng.integers(0, 3)),
                )
                for _ in range(n_gt)
            ]
            flags = match_detections(dets, gts, crit)
            assert flags.tolist() == reference_greedy_flags(dets, gts, crit)
            assert flags.sum() <= min(n_det, n_gt)

    def test_box_iou_mode(self):
        crit = MatchCriterion(mode="box", iou_min=0.5)
        hit = match_detections(
            [det(10, 10, 0.9, w=10, h=10)], [gt(11, 10, w=10, h=10)], crit
        )
        assert hit.tolist() == [True]
        miss = match_detections(
            [det(10, 10, 0.9, w=10, h=10)], [gt(18, 18, w=10, h=10)], crit
        )
        assert miss.tolist() == [False]

    def test_cell_center_rule(self):
        spec = GridSpec(image_w=224, image_h=224, grid_size=7, num_classes=1,
                        coord_arity=4)
        crit = MatchCriterion(
            mode="box", iou_min=0.3, cell_center_rule=True, grid=spec
        )
        # big box, right IoU, but detection center in the neighbor cell
        d = det(33.0, 10.0, 0.9, w=60, h=20)
        g = gt(30.0, 10.0, w=60, h=20)
        assert match_detections([d], [g], crit).tolist() == [False]
        d_same_cell = det(31.0, 10.0, 0.9, w=60, h=20)
        assert match_detections([d_same_cell], [g], crit).tolist() == [True]

    def test_criterion_validation(self):
        with pytest.raises(ValueError):
            MatchCriterion(mode="point")  # tau missing
        with pytest.raises(ValueError):
            MatchCriterion(mode="box", iou_min=0.0)
        with pytest.raises(ValueError):
            MatchCriterion(mode="point", tau=5.0, cell_center_rule=True)


def envelope_precision(recalls, precisions, r):
    """max precision over all achieved PR points with recall >= r (0 past the end)."""
    best = 0.0
    for rec, prec in zip(recalls, precisions):
        if rec >= r:
            best = max(best, prec)
    return best


def ap_by_grid_integration(recalls, precisions, resolution=1e-4):
    """Midpoint rectangle integration of the precision envelope over recall."""
    grid = np.arange(0.0, 1.0, resolution) + resolution / 2
    return sum(envelope_precision(recalls, precisions, r) for r in grid) * resolution


class TestAveragePrecision:
    def test_single_true_positive(self):
        curve = average_precision(np.array([True]), np.array([0.9]), n_gt=1)
        assert curve.ap == 1.0

    def test_high_scored_fp_halves_ap(self):
        curve = average_precision(
            np.array([False, True]), np.array([0.9, 0.8]), n_gt=1
        )
        assert curve.ap == pytest.approx(0.5)

    def test_no_ground_truth_and_no_detections(self):
        assert average_precision(np.zeros(0, bool), np.zeros(0), 0).ap == 0.0

    def test_recall_nondecreasing(self):
        rng = np.random.default_rng(0)
        flags = rng.random(20) < 0.5
        curve = average_precision(flags, rng.random(20), n_gt=max(1, int(flags.sum())))
        assert np.all(np.diff(curve.recall) >= 0)

    def test_matches_numeric_integration_on_random_scoreboards(self):
        # n_gt divides the grid so the midpoint rectangle sum is exact
        rng = np.random.default_rng(31)
        gt_choices = [1, 2, 4, 5, 8, 10, 16, 20, 25]
        for _ in range(100):
            n_gt = int(rng.choice(gt_choices))
            n_det = int(rng.integers(1, 30))
            scores = rng.random(n_det)
            flags = np.zeros(n_det, dtype=bool)
            tp_count = int(rng.integers(0, min(n_det, n_gt) + 1))
            flags[rng.choice(n_det, size=tp_count, replace=False)] = True
            curve = average_precision(flags, scores, n_gt)
            numeric = ap_by_grid_integration(curve.recall, curve.precision)
            assert curve.ap == pytest.approx(numeric, abs=1e-6)

    def test_invariant_under_monotone_score_transform(self):
        rng = np.random.default_rng(5)
        flags = rng.random(15) < 0.4
        scores = rng.random(15)
        base = average_precision(flags, scores, n_gt=8).ap
        squeezed = average_precision(flags, 0.1 + 0.5 * scores**3, n_gt=8).ap
        assert squeezed == pytest.approx(base)

    def test_appending_weak_fp_never_increases_ap(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            n = int(rng.integers(1, 12))
            flags = rng.random(n) < 0.5
            scores = rng.uniform(0.3, 1.0, n)
            n_gt = max(1, int(flags.sum()))
            base = average_precision(flags, scores, n_gt).ap
            worse = average_precision(
                np.append(flags, False), np.append(scores, 0.01), n_gt
            ).ap
            assert worse <= base + 1e-12

    def test_prepending_top_tp_never_decreases_ap(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            n = int(rng.integers(1, 12))
            flags = rng.random(n) < 0.5
            scores = rng.uniform(0.0, 0.9, n)
            n_gt = int(flags.sum()) + 1
            base = average_precision(flags, scores, n_gt).ap
            better = average_precision(
                np.append(flags, True), np.append(scores, 0.99), n_gt
            ).ap
            assert better >= base - 1e-12


class TestMeanAp:
    def test_mean_of_two(self):
        curves = {
            0: average_precision(np.array([True]), np.array([0.9]), 1),
            1: average_precision(np.array([False]), np.array([0.9]), 1),
        }
        assert mean_ap(curves) == pytest.approx(0.5)

    def test_single_class_passthrough(self):
        curves = [average_precision(np.array([False, True]), np.array([0.9, 0.8]), 1)]
        assert mean_ap(curves) == pytest.approx(0.5)

    def test_published_top3_aggregation(self):
        # checks our unweighted mean against a published per-class row
        aps = [0.3849, 0.3294, 0.4061]
        mean = float(np.mean(aps))
        assert round(mean * 100, 2) == 37.35

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            mean_ap({})


class TestColumnRmse:
    def _matrix(self, y, y_hat):
        y = np.asarray(y)
        y_hat = np.asarray(y_hat)
        return CountMatrix(
            image_ids=[f"i{j}" for j in range(y.shape[0])],
            class_ids=list(range(y.shape[1])),
            y=y,
            y_hat=y_hat,
        )

    def test_perfect_counts(self):
        counts = self._matrix([[3, 1], [2, 2]], [[3, 1], [2, 2]])
        per_class, mean = column_rmse(counts)
        assert np.all(per_class == 0.0)
        assert mean == 0.0

    def test_hand_fixture(self):
        counts = self._matrix([[3], [5]], [[4], [7]])
        per_class, mean = column_rmse(counts)
        assert mean == pytest.approx(1.581139, abs=1e-6)
        assert per_class[0] == pytest.approx(math.sqrt(2.5))

    def test_one_perfect_class_halves_mean(self):
        counts = self._matrix([[3, 0], [5, 4]], [[4, 0], [7, 4]])
        _, mean = column_rmse(counts)
        assert mean == pytest.approx(math.sqrt(2.5) / 2)

    def test_symmetric_and_zero_iff_equal(self):
        rng = np.random.default_rng(8)
        y = rng.integers(0, 9, size=(6, 3))
        y_hat = rng.integers(0, 9, size=(6, 3))
        _, forward = column_rmse(self._matrix(y, y_hat))
        _, backward = column_rmse(self._matrix(y_hat, y))
        assert forward == pytest.approx(backward)
        if not np.array_equal(y, y_hat):
            assert forward > 0


class TestCounts:
    def test_threshold_zero_counts_everything(self):
        dets = [det(1, 1, 0.1, cls=0), det(2, 2, 0.0, cls=0)]
        counts = counts_from_detections(dets, ["img"], [0], threshold=0.0)
        assert counts[0, 0] == 2

    def test_threshold_above_one_counts_nothing(self):
        dets = [det(1, 1, 1.0, cls=0)]
        counts = counts_from_detections(dets, ["img"], [0], threshold=1.01)
        assert counts.sum() == 0

    def test_threshold_boundary_is_inclusive(self):
        dets = [det(1, 1, s, cls=0) for s in (0.6, 0.5, 0.4)]
        counts = counts_from_detections(dets, ["img"], [0], threshold=0.5)
        assert counts[0, 0] == 2

    def test_annotation_counts(self):
        labels = {"a": [gt(1, 1, cls=0), gt(2, 2, cls=1)], "b": [gt(3, 3, cls=1)]}
        counts = counts_from_annotations(labels, ["a", "b"], [0, 1])
        assert counts.tolist() == [[1, 1], [0, 1]]


class TestEvaluateDetections:
    def _toy_setup(self):
        labels = {
            "a": [gt(10, 10, cls=0), gt(50, 50, cls=1)],
            "b": [gt(30, 30, cls=0)],
        }
        dets = [
            det(10, 10, 0.95, cls=0, image_id="a"),
            det(50, 51, 0.90, cls=1, image_id="a"),
            det(30, 31, 0.85, cls=0, image_id="b"),
        ]
        return dets, labels

    def test_perfect_detections_score_map_one(self):
        dets, labels = self._toy_setup()
        result = evaluate_detections(dets, labels, [0, 1], POINT)
        assert result.map == pytest.approx(1.0)
        assert result.mean_rmse == 0.0

    def test_threads_do_not_change_results(self):
        dets, labels = self._toy_setup()
        single = evaluate_detections(dets, labels, [0, 1], POINT, threads=1)
        multi = evaluate_detections(dets, labels, [0, 1], POINT, threads=4)
        assert single.map == multi.map
        assert single.per_class_rmse == multi.per_class_rmse

    def test_empty_detections(self):
        _, labels = self._toy_setup()
        result = evaluate_detections([], labels, [0, 1], POINT)
        assert result.map == 0.0
        # RMSE reduces to the magnitude of the ground-truth counts
        per_class, _ = column_rmse(result.counts)
        assert per_class[0] == pytest.approx(math.sqrt((1 + 1) / 2))
