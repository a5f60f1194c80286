import numpy as np
import pytest

from slotvideo.metrics import (
    active_slots,
    evaluate_predictions,
    fg_ari,
    mbo,
    restrict_gt_to_objects,
)

from oracles import fg_ari_oracle, mbo_oracle


def _random_labeling(rng, max_pixels=12):
    t = int(rng.integers(1, 4))
    h = int(rng.integers(1, 4))
    max_w = max(1, max_pixels // (t * h))
    w = int(rng.integers(1, max_w + 1))
    gt = rng.integers(0, 4, size=(t, h, w))
    pred = rng.integers(0, 4, size=(t, h, w))
    return pred, gt


class TestFgAri:
    def test_perfect_prediction_scores_one(self):
        gt = np.array([[[0, 1, 1], [2, 2, 0]]])
        relabeled = np.where(gt == 1, 5, np.where(gt == 2, 3, 7))
        assert fg_ari(relabeled, gt, mode="video") == pytest.approx(1.0)
        assert fg_ari(relabeled, gt, mode="image") == pytest.approx(1.0)

    def test_crossed_pairs_score_minus_half(self):
        gt = np.array([[[1, 1, 2, 2]]])
        pred = np.array([[[1, 2, 1, 2]]])
        assert fg_ari(pred, gt, mode="video") == pytest.approx(-0.5, abs=1e-15)

    def test_swapped_ids_video_vs_image(self):
        # 2 frames, 2 single-pixel objects; frame 2 swaps the predicted ids:
        # per-frame segmentation is perfect but the video labeling crosses pairs
        gt = np.array([[[1, 2]], [[1, 2]]])
        pred = np.array([[[1, 2]], [[2, 1]]])
        assert fg_ari(pred, gt, mode="image") == 1.0
        assert fg_ari(pred, gt, mode="video") == -0.5

    def test_background_pixels_are_excluded(self):
        gt = np.array([[[0, 0, 1, 2]]])
        pred_a = np.array([[[3, 3, 1, 2]]])
        pred_b = np.array([[[3, 9, 1, 2]]])  # differs only on background
        assert fg_ari(pred_a, gt, mode="video") == fg_ari(pred_b, gt, mode="video")

    def test_no_foreground_is_undefined(self):
        gt = np.zeros((2, 2, 2), dtype=int)
        pred = np.ones_like(gt)
        assert fg_ari(pred, gt, mode="video") is None
        assert fg_ari(pred, gt, mode="image") is None

    def test_image_mode_skips_empty_frames(self):
        gt = np.array([[[0, 0]], [[1, 2]]])
        pred = np.array([[[5, 6]], [[3, 4]]])
        assert fg_ari(pred, gt, mode="image") == pytest.approx(1.0)

    def test_matches_pair_counting_oracle_on_fuzzed_labelings(self):
        rng = np.random.default_rng(123)
        checked = 0
        for _ in range(300):
            pred, gt = _random_labeling(rng)
            for mode in ("video", "image"):
                ours = fg_ari(pred, gt, mode)
                oracle = fg_ari_oracle(pred, gt, mode)
                if oracle is None:
                    assert ours is None
                else:
                    np.testing.assert_allclose(ours, oracle, atol=1e-12, rtol=0)
                    checked += 1
        assert checked > 100

    def test_relabeling_invariance(self):
        rng = np.random.default_rng(11)
        pred, gt = _random_labeling(rng, max_pixels=12)
        mapping = {0: 7, 1: 3, 2: 9, 3: 0}
        relabeled = np.vectorize(mapping.get)(pred)
        for mode in ("video", "image"):
            a, b = fg_ari(pred, gt, mode), fg_ari(relabeled, gt, mode)
            if a is None:
                assert b is None
            else:
                assert a == pytest.approx(b, abs=1e-12)


class TestMbo:
    def test_perfect_prediction_scores_one(self):
        gt = np.array([[[0, 1, 1], [2, 2, 0]]])
        assert mbo(gt.copy(), gt) == pytest.approx(1.0)

    def test_half_covered_instances_score_half(self):
        # each predicted mask covers exactly half its instance and nothing else
        gt = np.array([[[1, 1, 1, 1], [2, 2, 2, 2]]])
        pred = np.array([[[1, 1, 0, 0], [2, 2, 0, 0]]])
        # pred id 0 covers the rest: IoU(gt1, pred0) = 2/6, IoU(gt1, pred1) = 2/4
        assert mbo(pred, gt) == pytest.approx(0.5)

    def test_disjoint_prediction_scores_zero(self):
        # negative labels mark "no predicted mask"; masks disjoint from every
        # instance leave each best IoU at zero
        gt = np.array([[[1, 1, 0, 0]]])
        pred = np.array([[[-1, -1, 5, -1]]])
        assert mbo(pred, gt) == pytest.approx(0.0, abs=0)

    def test_no_instances_is_undefined(self):
        gt = np.zeros((1, 2, 2), dtype=int)
        assert mbo(np.ones_like(gt), gt) is None

    def test_temporal_consistency_matters(self):
        gt = np.array([[[1, 0]], [[1, 0]]])
        consistent = np.array([[[1, 0]], [[1, 0]]])
        swapping = np.array([[[1, 0]], [[0, 1]]])
        assert mbo(consistent, gt) > mbo(swapping, gt)

    def test_matches_all_pairs_oracle_on_fuzzed_masks(self):
        rng = np.random.default_rng(321)
        checked = 0
        for _ in range(200):
            pred, gt = _random_labeling(rng)
            ours = mbo(pred, gt)
            oracle = mbo_oracle(pred, gt)
            if oracle is None:
                assert ours is None
            else:
                np.testing.assert_allclose(ours, oracle, atol=1e-12, rtol=0)
                checked += 1
        assert checked > 100


class TestActiveSlots:
    def test_single_slot_covering_everything(self):
        masks = np.zeros((3, 4, 4), dtype=int)
        assert active_slots(masks, num_slots=4, threshold=0.005) == 1

    def test_slots_that_never_win_do_not_count(self):
        masks = np.zeros((2, 2, 2), dtype=int)
        masks[:, 0, :] = 1
        assert active_slots(masks, num_slots=4, threshold=0.0) == 2

    def test_zero_threshold_counts_single_pixel_winners(self):
        masks = np.zeros((1, 4, 4), dtype=int)
        masks[0, 0, 0] = 3
        assert active_slots(masks, num_slots=4, threshold=0.0) == 2

    def test_threshold_filters_small_winners(self):
        masks = np.zeros((1, 10, 10), dtype=int)
        masks[0, 0, 0] = 1  # 1% of pixels
        assert active_slots(masks, num_slots=2, threshold=0.02) == 1
        assert active_slots(masks, num_slots=2, threshold=0.01) == 2


class TestEvaluatePredictions:
    def test_identical_clips_mean_equals_per_clip(self):
        gt = np.array([[[0, 1], [2, 2]]])
        pred = np.array([[[0, 1], [2, 2]]])
        report = evaluate_predictions({"a": pred, "b": pred}, {"a": gt, "b": gt}, num_slots=3)
        assert report.clip_count == 2
        assert report.video_fg_ari == pytest.approx(report.per_clip_video_fg_ari["a"])
        assert len(set(report.per_clip_video_fg_ari.values())) == 1

    def test_histogram_sums_to_clip_count(self):
        rng = np.random.default_rng(5)
        preds = {f"c{i}": rng.integers(0, 3, size=(2, 3, 3)) for i in range(6)}
        gts = {k: rng.integers(0, 3, size=(2, 3, 3)) for k in preds}
        report = evaluate_predictions(preds, gts, num_slots=3)
        assert sum(report.active_slot_histogram) == report.clip_count

    def test_occluded_restriction_drops_other_objects(self):
        gt = np.array([[[1, 2], [3, 0]]])
        restricted = restrict_gt_to_objects(gt, [2])
        np.testing.assert_array_equal(restricted, np.array([[[0, 2], [0, 0]]]))
        pred = np.array([[[0, 1], [2, 3]]])
        full = evaluate_predictions({"a": pred}, {"a": gt}, num_slots=4)
        subset = evaluate_predictions({"a": pred}, {"a": gt}, num_slots=4, keep_objects={"a": [2]})
        assert subset.video_fg_ari == pytest.approx(1.0)  # single remaining pixel
        assert full.video_fg_ari is not None

    def test_empty_input_gives_empty_report(self):
        report = evaluate_predictions({}, {}, num_slots=3)
        assert report.clip_count == 0
        assert report.video_fg_ari is None
        assert report.skipped_clips == []

    def test_clips_without_foreground_are_skipped(self):
        gt_fg = np.array([[[0, 1]]])
        gt_bg = np.zeros((1, 1, 2), dtype=int)
        pred = np.array([[[0, 1]]])
        report = evaluate_predictions(
            {"fg": pred, "bg": pred}, {"fg": gt_fg, "bg": gt_bg}, num_slots=2
        )
        assert report.skipped_clips == ["bg"]
        assert report.clip_count == 2
        assert "bg" not in report.per_clip_video_fg_ari
