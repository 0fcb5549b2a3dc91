import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from oracles import central_difference
from textborder.decoder import PredictionMaps
from textborder.geometry import RotatedRect, iou
from textborder.labels import LabelMaps
from textborder.losses import (LossWeights, border_loss, dice_coefficient,
                               dice_loss, iou_loss, masked_dice_loss,
                               relative_gradient_error, total_loss)

unit_maps = hnp.arrays(np.float64, (6, 6), elements=st.floats(0.0, 1.0))


class TestDiceCoefficient:
    def test_identity_binary(self):
        mask = np.zeros((8, 8))
        mask[2:5, 2:7] = 1.0
        assert dice_coefficient(mask, mask) == pytest.approx(1.0, abs=1e-5)

    def test_disjoint(self):
        a = np.zeros((8, 8))
        b = np.zeros((8, 8))
        a[:2], b[6:] = 1.0, 1.0
        assert dice_coefficient(a, b) == pytest.approx(0.0, abs=1e-6)

    def test_half_overlap(self):
        a = np.array([1.0, 1.0, 0.0, 0.0])
        b = np.array([0.0, 1.0, 1.0, 0.0])
        assert dice_coefficient(a, b) == pytest.approx(0.5, abs=1e-6)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            dice_coefficient(np.zeros((2, 2)), np.zeros((3, 3)))

    @given(a=unit_maps, b=unit_maps)
    @settings(max_examples=100)
    def test_symmetry_and_bounds(self, a, b):
        forward = dice_coefficient(a, b)
        assert forward == dice_coefficient(b, a)
        assert 0.0 <= forward <= 1.0

    def test_monotone_in_overlap(self):
        truth = np.zeros(10)
        truth[:6] = 1.0
        previous = -1.0
        for k in range(7):
            pred = np.zeros(10)
            pred[:k] = 1.0
            pred[6:6 + (6 - k) if k < 6 else 6] = 0.0
            pred[6:12 - k] = 1.0  # keep |P| = 6 while overlap k varies
            value = dice_coefficient(truth, pred)
            assert value > previous
            previous = value


class TestDiceLoss:
    def test_perfect(self):
        mask = np.zeros((8, 8))
        mask[1:5, 1:5] = 1.0
        assert dice_loss(mask, mask) == pytest.approx(0.0, abs=1e-5)

    def test_disjoint(self):
        a, b = np.zeros(16), np.zeros(16)
        a[:4], b[8:] = 1.0, 1.0
        assert dice_loss(a, b) == pytest.approx(1.0, abs=1e-6)

    def test_gradient_matches_finite_differences(self, rng):
        for _ in range(10):
            truth = (rng.random((16, 16)) < 0.4).astype(np.float64)
            pred = rng.random((16, 16))
            _, grad = dice_loss(truth, pred, with_grad=True)
            numeric = central_difference(lambda p: dice_loss(truth, p), pred)
            assert relative_gradient_error(grad, numeric) < 1e-4

    def test_masked_gradient_zero_outside_mask(self, rng):
        truth = (rng.random((8, 8)) < 0.5).astype(np.float64)
        pred = rng.random((8, 8))
        mask = np.zeros((8, 8))
        mask[:4] = 1.0
        _, grad = masked_dice_loss(truth, pred, mask, with_grad=True)
        assert np.all(grad[4:] == 0.0)
        numeric = central_difference(lambda p: masked_dice_loss(truth, p, mask), pred)
        assert relative_gradient_error(grad, numeric) < 1e-4


class TestBorderLoss:
    def test_mean_of_channels(self, rng):
        truth = (rng.random((4, 8, 8)) < 0.3).astype(np.float64)
        pred = rng.random((4, 8, 8))
        expected = np.mean([dice_loss(truth[k], pred[k]) for k in range(4)])
        assert border_loss(truth, pred) == pytest.approx(expected, abs=1e-12)

    def test_gradient(self, rng):
        truth = (rng.random((4, 6, 6)) < 0.3).astype(np.float64)
        pred = rng.random((4, 6, 6))
        _, grad = border_loss(truth, pred, with_grad=True)
        numeric = central_difference(lambda p: border_loss(truth, p), pred)
        assert relative_gradient_error(grad, numeric) < 1e-4


class TestIouLoss:
    def test_identical_boxes(self):
        d = np.array([[5.0], [5.0], [20.0], [20.0]])
        assert iou_loss(d, d) == pytest.approx(0.0, abs=1e-12)

    def test_halved_distances(self):
        truth = np.array([[8.0], [8.0], [30.0], [30.0]])
        assert iou_loss(truth, truth / 2) == pytest.approx(math.log(4.0), abs=1e-12)

    def test_matches_geometric_construction(self, rng):
        # each distance quadruple implies an axis-aligned box around a
        # shared pixel; -log of the clipped-polygon IoU must agree
        for _ in range(40):
            dg = rng.uniform(1.0, 30.0, 4)
            dp = rng.uniform(1.0, 30.0, 4)

            def implied_box(d):
                up, low, left, right = d
                return RotatedRect((right - left) / 2, (low - up) / 2,
                                   left + right, up + low, 0.0)

            expected = -math.log(iou(implied_box(dg), implied_box(dp)))
            assert iou_loss(dg.reshape(4, 1), dp.reshape(4, 1)) == \
                pytest.approx(expected, abs=1e-9)

    def test_non_negative(self, rng):
        for _ in range(50):
            dg = rng.uniform(0.5, 40.0, (4, 7))
            dp = rng.uniform(0.5, 40.0, (4, 7))
            assert iou_loss(dg, dp) >= 0.0

    def test_clamps_non_positive_predictions(self):
        dg = np.array([[5.0], [5.0], [10.0], [10.0]])
        dp = np.array([[-1.0], [5.0], [10.0], [10.0]])
        loss, _, clamped = iou_loss(dg, dp, with_grad=True)
        assert clamped == 1
        assert math.isfinite(loss)

    def test_rejects_negative_truth(self):
        dg = np.array([[-2.0], [5.0], [10.0], [10.0]])
        with pytest.raises(ValueError):
            iou_loss(dg, np.abs(dg))

    def test_gradient_matches_finite_differences(self, rng):
        for _ in range(10):
            dg = rng.uniform(2.0, 30.0, (4, 12))
            dp = rng.uniform(2.0, 30.0, (4, 12))
            # keep away from min() ties so the loss is smooth at dp
            dp += np.where(np.abs(dp - dg) < 0.01, 0.05, 0.0)
            _, grad, _ = iou_loss(dg, dp, with_grad=True)
            numeric = central_difference(lambda d: iou_loss(dg, d), dp)
            assert relative_gradient_error(grad, numeric) < 1e-4

    def test_empty_input(self):
        assert iou_loss(np.zeros((4, 0)), np.zeros((4, 0))) == 0.0


def random_label_prediction_pair(rng, size=16):
    text = (rng.random((size, size)) < 0.4).astype(np.float32)
    borders = (rng.random((4, size, size)) < 0.25).astype(np.float32)
    distances = rng.uniform(1.0, 25.0, (4, size, size)).astype(np.float32)
    labels = LabelMaps(text=text, borders=borders, distances=distances,
                       validity=np.ones((size, size), dtype=np.float32))
    preds = PredictionMaps(
        text=rng.random((size, size)).astype(np.float32),
        borders=rng.random((4, size, size)).astype(np.float32),
        distances=rng.uniform(1.0, 25.0, (4, size, size)).astype(np.float32))
    return labels, preds


class TestTotalLoss:
    def test_perfect_prediction_is_zero(self, rng):
        labels, _ = random_label_prediction_pair(rng)
        preds = PredictionMaps(text=labels.text.copy(),
                               borders=labels.borders.copy(),
                               distances=labels.distances.copy())
        report = total_loss(labels, preds)
        assert abs(report.total) < 1e-5

    def test_zero_weights_leave_classification_only(self, rng):
        labels, preds = random_label_prediction_pair(rng)
        report = total_loss(labels, preds, LossWeights(loc=0.0, brd=0.0))
        assert report.total == report.cls

    def test_decomposition_identity_exact(self, rng):
        for _ in range(10):
            labels, preds = random_label_prediction_pair(rng)
            weights = LossWeights(loc=float(rng.uniform(0, 3)),
                                  brd=float(rng.uniform(0, 3)))
            report = total_loss(labels, preds, weights)
            assert report.total == report.cls + weights.loc * report.loc \
                + weights.brd * report.brd

    def test_linearity_in_weights(self, rng):
        labels, preds = random_label_prediction_pair(rng)
        at = {w: total_loss(labels, preds, LossWeights(loc=w, brd=1.0)).total
              for w in (0.0, 1.0, 2.0)}
        assert at[2.0] - at[0.0] == pytest.approx(2 * (at[1.0] - at[0.0]), abs=1e-9)
        at = {w: total_loss(labels, preds, LossWeights(loc=1.0, brd=w)).total
              for w in (0.0, 1.0, 2.0)}
        assert at[2.0] - at[0.0] == pytest.approx(2 * (at[1.0] - at[0.0]), abs=1e-9)

    def test_validity_masks_classification(self, rng):
        labels, preds = random_label_prediction_pair(rng)
        labels.validity[:] = 0.0
        report = total_loss(labels, preds)
        # empty masked region: coefficient 0 by the eps convention, loss 1,
        # and no valid text pixels feed the regression term
        assert report.cls == pytest.approx(1.0, abs=1e-6)
        assert report.loc == 0.0

    def test_validity_mask_affects_cls_value(self, rng):
        labels, preds = random_label_prediction_pair(rng)
        plain = total_loss(labels, preds).cls
        labels.validity[:8] = 0.0
        masked = total_loss(labels, preds).cls
        assert plain != masked

    def test_gradients_populated_and_match(self, rng):
        labels, preds = random_label_prediction_pair(rng, size=8)
        report = total_loss(labels, preds, with_grad=True)
        assert set(report.gradients) == {"text", "borders", "distances"}

        def text_only(p):
            trial = PredictionMaps(text=p.astype(np.float32),
                                   borders=preds.borders,
                                   distances=preds.distances)
            return total_loss(labels, trial).total

        numeric = central_difference(text_only, preds.text.astype(np.float64))
        assert relative_gradient_error(report.gradients["text"], numeric) < 1e-3

    def test_border_mask_flag_changes_cls(self, rng):
        labels, preds = random_label_prediction_pair(rng)
        plain = total_loss(labels, preds).cls
        masked = total_loss(labels, preds, mask_borders_from_text=True).cls
        assert plain != masked


def test_loss_weights_validation():
    with pytest.raises(ValueError):
        LossWeights(loc=-0.5)
