import numpy as np
import pytest

from beamloc import (
    DetectionRecord,
    GroundTruth,
    PixelRect,
    Response,
    detection_metric,
    iou,
    point_metric,
)
from beamloc.evaluation import (
    load_detections,
    load_ground_truth,
    load_responses,
    save_detections,
    save_ground_truth,
    save_responses,
)


class TestIoU:
    def test_identical_rects(self):
        assert iou(PixelRect(3, 4, 10, 12), PixelRect(3, 4, 10, 12)) == 1.0

    def test_disjoint_rects(self):
        assert iou(PixelRect(0, 0, 5, 5), PixelRect(10, 10, 5, 5)) == 0.0

    def test_touching_edges_do_not_intersect(self):
        assert iou(PixelRect(0, 0, 5, 5), PixelRect(5, 0, 5, 5)) == 0.0

    def test_half_shift_hand_value(self):
        # overlap 5x10 = 50, union 150
        assert iou(PixelRect(0, 0, 10, 10), PixelRect(5, 0, 10, 10)) == pytest.approx(1 / 3)

    def test_bounds_and_symmetry(self):
        g = np.random.default_rng(0)
        for _ in range(200):
            a = PixelRect(int(g.integers(0, 20)), int(g.integers(0, 20)),
                          int(g.integers(1, 20)), int(g.integers(1, 20)))
            b = PixelRect(int(g.integers(0, 20)), int(g.integers(0, 20)),
                          int(g.integers(1, 20)), int(g.integers(1, 20)))
            v = iou(a, b)
            assert 0.0 <= v <= 1.0
            assert v == iou(b, a)


class TestPointMetric:
    def test_single_hit_is_perfect(self):
        gt = GroundTruth({"img0": [(0, PixelRect(0, 0, 10, 10))]})
        curves, mean_ap = point_metric([Response("img0", 0, 5, 5, 0.9)], gt)
        assert curves[0].ap == 100.0
        assert mean_ap == 100.0

    def test_single_miss_is_zero(self):
        gt = GroundTruth({"img0": [(0, PixelRect(0, 0, 10, 10))]})
        curves, mean_ap = point_metric([Response("img0", 0, 50, 50, 0.9)], gt)
        assert curves[0].ap == 0.0
        assert mean_ap == 0.0

    def test_hit_then_miss_gives_fifty(self):
        # rank 1 TP (recall 1/2, precision 1), rank 2 FP; the missed image's
        # box stays an unreached positive, so AP = 50
        gt = GroundTruth(
            {
                "img0": [(0, PixelRect(0, 0, 10, 10))],
                "img1": [(0, PixelRect(20, 20, 10, 10))],
            }
        )
        responses = [
            Response("img0", 0, 5, 5, 0.9),
            Response("img1", 0, 0, 0, 0.8),
        ]
        curves, mean_ap = point_metric(responses, gt)
        np.testing.assert_array_equal(curves[0].precision, [1.0, 0.5])
        np.testing.assert_array_equal(curves[0].recall, [0.5, 0.5])
        assert curves[0].ap == 50.0
        assert mean_ap == 50.0

    def test_boundary_inclusive_containment(self):
        gt = GroundTruth({"img0": [(0, PixelRect(0, 0, 10, 10))]})
        for x, y in [(0, 0), (10, 10), (10, 0)]:
            curves, _ = point_metric([Response("img0", 0, x, y, 0.5)], gt)
            assert curves[0].ap == 100.0
        curves, _ = point_metric([Response("img0", 0, 11, 0, 0.5)], gt)
        assert curves[0].ap == 0.0

    def test_wrong_class_is_miss(self):
        gt = GroundTruth({"img0": [(1, PixelRect(0, 0, 10, 10))]})
        curves, _ = point_metric([Response("img0", 0, 5, 5, 0.9)], gt)
        assert curves[0].ap == 0.0
        assert curves[1].ap == 0.0  # class 1 has a positive but no response

    def test_flagged_no_response_counts_as_unreached(self):
        gt = GroundTruth({"img0": [(0, PixelRect(0, 0, 10, 10))]})
        curves, _ = point_metric([Response("img0", 0, 0, 0, 0.0, responded=False)], gt)
        assert curves[0].ap == 0.0
        assert curves[0].confidences.size == 0

    def test_unknown_image_rejected(self):
        gt = GroundTruth({"img0": [(0, PixelRect(0, 0, 10, 10))]})
        with pytest.raises(ValueError):
            point_metric([Response("other", 0, 1, 1, 0.5)], gt)

    def test_duplicate_response_rejected(self):
        gt = GroundTruth({"img0": [(0, PixelRect(0, 0, 10, 10))]})
        responses = [Response("img0", 0, 1, 1, 0.5), Response("img0", 0, 2, 2, 0.4)]
        with pytest.raises(ValueError):
            point_metric(responses, gt)

    def test_confidence_scale_invariance(self):
        g = np.random.default_rng(1)
        gt = GroundTruth(
            {f"img{i}": [(0, PixelRect(0, 0, 10, 10))] for i in range(12)}
        )
        confs = np.sort(g.uniform(0.1, 0.9, size=12))[::-1]
        responses = [
            Response(f"img{i}", 0, 5 if i % 3 else 50, 5, float(confs[i]))
            for i in range(12)
        ]
        _, base = point_metric(responses, gt)
        squashed = [
            Response(r.image, r.class_id, r.x, r.y, r.confidence**3) for r in responses
        ]
        _, transformed = point_metric(squashed, gt)
        assert base == pytest.approx(transformed, abs=1e-12)

    def test_perfect_iff_all_hits_cover_everything(self):
        g = np.random.default_rng(2)
        for trial in range(20):
            n = int(g.integers(1, 8))
            gt = GroundTruth(
                {f"img{i}": [(0, PixelRect(0, 0, 10, 10))] for i in range(n)}
            )
            hits = g.random(n) < 0.7
            responses = [
                Response(f"img{i}", 0, 5 if hits[i] else 99, 5, float(g.uniform(0.1, 1)))
                for i in range(n)
            ]
            curves, _ = point_metric(responses, gt)
            if np.all(hits):
                assert curves[0].ap == 100.0
            else:
                assert curves[0].ap < 100.0


class TestDetectionMetric:
    def test_exact_match(self):
        gt = GroundTruth({"img0": [(0, PixelRect(2, 3, 10, 10))]})
        dets = [DetectionRecord("img0", 0, PixelRect(2, 3, 10, 10), 0.9)]
        curves, mean_ap = detection_metric(dets, gt)
        assert curves[0].ap == 100.0 and mean_ap == 100.0

    def test_one_third_iou_fails_half_threshold(self):
        gt = GroundTruth({"img0": [(0, PixelRect(0, 0, 10, 10))]})
        dets = [DetectionRecord("img0", 0, PixelRect(5, 0, 10, 10), 0.9)]
        curves, _ = detection_metric(dets, gt)
        assert curves[0].ap == 0.0

    def test_strictly_exceeds_threshold(self):
        gt = GroundTruth({"img0": [(0, PixelRect(0, 0, 10, 10))]})
        dets = [DetectionRecord("img0", 0, PixelRect(0, 0, 10, 10), 0.9)]
        curves, _ = detection_metric(dets, gt, iou_threshold=1.0)
        assert curves[0].ap == 0.0  # IoU 1.0 does not strictly exceed 1.0

    def test_second_detection_on_same_box_is_fp(self):
        gt = GroundTruth({"img0": [(0, PixelRect(0, 0, 10, 10))]})
        dets = [
            DetectionRecord("img0", 0, PixelRect(0, 0, 10, 11), 0.9),   # IoU ~0.9
            DetectionRecord("img0", 0, PixelRect(0, 0, 10, 13), 0.8),   # IoU ~0.77
        ]
        curves, _ = detection_metric(dets, gt)
        np.testing.assert_array_equal(curves[0].is_tp, [True, False])
        assert curves[0].ap == 100.0  # the positive is found at rank 1

    def test_higher_scored_wins_regardless_of_iou(self):
        gt = GroundTruth({"img0": [(0, PixelRect(0, 0, 10, 10))]})
        dets = [
            DetectionRecord("img0", 0, PixelRect(0, 0, 10, 13), 0.9),   # lower IoU, higher score
            DetectionRecord("img0", 0, PixelRect(0, 0, 10, 11), 0.8),
        ]
        curves, _ = detection_metric(dets, gt)
        np.testing.assert_array_equal(curves[0].is_tp, [True, False])

    def test_matches_are_per_image(self):
        gt = GroundTruth(
            {
                "img0": [(0, PixelRect(0, 0, 10, 10))],
                "img1": [(0, PixelRect(0, 0, 10, 10))],
            }
        )
        dets = [
            DetectionRecord("img0", 0, PixelRect(0, 0, 10, 10), 0.9),
            DetectionRecord("img1", 0, PixelRect(0, 0, 10, 10), 0.8),
        ]
        curves, mean_ap = detection_metric(dets, gt)
        assert curves[0].ap == 100.0 and mean_ap == 100.0

    def test_class_confusion_is_fp(self):
        gt = GroundTruth({"img0": [(1, PixelRect(0, 0, 10, 10))]})
        dets = [DetectionRecord("img0", 0, PixelRect(0, 0, 10, 10), 0.9)]
        curves, _ = detection_metric(dets, gt)
        assert curves[0].ap == 0.0

    def test_greedy_prefers_unmatched_gt_with_best_iou(self):
        gt = GroundTruth(
            {"img0": [(0, PixelRect(0, 0, 10, 10)), (0, PixelRect(8, 0, 10, 10))]}
        )
        dets = [
            DetectionRecord("img0", 0, PixelRect(0, 0, 10, 10), 0.9),
            DetectionRecord("img0", 0, PixelRect(7, 0, 10, 10), 0.8),
        ]
        curves, _ = detection_metric(dets, gt)
        np.testing.assert_array_equal(curves[0].is_tp, [True, True])
        assert curves[0].ap == 100.0

    def test_low_iou_fp_does_not_consume_gt(self):
        gt = GroundTruth({"img0": [(0, PixelRect(0, 0, 10, 10))]})
        dets = [
            DetectionRecord("img0", 0, PixelRect(5, 0, 10, 10), 0.9),   # IoU 1/3, FP
            DetectionRecord("img0", 0, PixelRect(0, 0, 10, 10), 0.8),   # still matchable
        ]
        curves, _ = detection_metric(dets, gt)
        np.testing.assert_array_equal(curves[0].is_tp, [False, True])

    def test_trailing_fps_do_not_reduce_ap(self):
        gt = GroundTruth({"img0": [(0, PixelRect(0, 0, 10, 10))]})
        dets = [
            DetectionRecord("img0", 0, PixelRect(0, 0, 10, 10), 0.9),
            DetectionRecord("img0", 0, PixelRect(40, 40, 5, 5), 0.1),
        ]
        curves, _ = detection_metric(dets, gt)
        assert curves[0].ap == 100.0

    def test_eleven_point_variant(self):
        gt = GroundTruth(
            {
                "img0": [(0, PixelRect(0, 0, 10, 10))],
                "img1": [(0, PixelRect(0, 0, 10, 10))],
            }
        )
        dets = [
            DetectionRecord("img0", 0, PixelRect(0, 0, 10, 10), 0.9),
            DetectionRecord("img1", 0, PixelRect(40, 40, 5, 5), 0.8),
        ]
        _, ap_all = detection_metric(dets, gt, method="all_points")
        _, ap_eleven = detection_metric(dets, gt, method="eleven_points")
        assert ap_all == 50.0
        # eleven-point averages max precision at recall 0.0 .. 1.0; recall
        # reaches only 0.5, so levels 0.0-0.5 see precision 1 and the rest 0
        assert ap_eleven == pytest.approx(100 * 6 / 11)


class TestJsonl:
    def test_ground_truth_round_trip(self, tmp_path):
        gt = GroundTruth(
            {
                "a": [(0, PixelRect(1, 2, 3, 4)), (1, PixelRect(5, 6, 7, 8))],
                "b": [(2, PixelRect(0, 0, 9, 9))],
            }
        )
        path = tmp_path / "gt.jsonl"
        save_ground_truth(gt, path)
        again = load_ground_truth(path)
        assert again.boxes_by_image == gt.boxes_by_image

    def test_detections_round_trip(self, tmp_path):
        dets = [
            DetectionRecord("a", 0, PixelRect(1, 2, 3, 4), 0.5),
            DetectionRecord("b", 1, PixelRect(5, 6, 7, 8), 0.25),
        ]
        path = tmp_path / "dets.jsonl"
        save_detections(dets, path)
        assert load_detections(path) == dets

    def test_responses_round_trip(self, tmp_path):
        responses = [
            Response("a", 0, 3, 4, 0.75),
            Response("b", 1, 0, 0, 0.0, responded=False),
        ]
        path = tmp_path / "resp.jsonl"
        save_responses(responses, path)
        assert load_responses(path) == responses

    def test_pr_curve_csv(self, tmp_path):
        gt = GroundTruth({"img0": [(0, PixelRect(0, 0, 10, 10))]})
        curves, _ = point_metric([Response("img0", 0, 5, 5, 0.9)], gt)
        path = tmp_path / "pr.csv"
        curves[0].to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "rank,confidence,precision,recall"
        assert lines[1] == "1,0.9,1.0,1.0"
