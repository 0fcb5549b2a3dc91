import numpy as np
import pytest
from scipy import stats

from textborder.annotations import AnnotatedImage, TextAnnotation
from textborder.augment import (CROP_SIZE, PAD_VALUE, RESIZE_RATIOS,
                                augment_image, inpaint_region, plan_crop,
                                random_resize_crop, sample_window)
from textborder.geometry import RotatedRect
from textborder.synth import random_scene, render_scene


class FixedUniform:
    """Generator stand-in that returns a chosen fraction of each range."""

    def __init__(self, *fractions):
        self.fractions = list(fractions)

    def uniform(self, lo, hi):
        t = self.fractions.pop(0)
        return lo + t * (hi - lo)


def annotation(length=200.0, width=40.0, angle=0.0, cx=0.0, cy=0.0):
    return TextAnnotation(RotatedRect(cx, cy, length, width, angle),
                          granularity="line")


class TestSampleWindow:
    def test_center_at_shrunk_line_end_forces_min_length(self):
        ann = annotation(length=100.0)
        window = sample_window(ann, FixedUniform(1.0, 0.0))
        # offset = +0.4*L puts the center 0.1*L from the near end, so the
        # length interval collapses to its lower bound 0.2*L
        assert window.length == pytest.approx(20.0)
        assert np.hypot(window.center[0], window.center[1]) == pytest.approx(40.0)

    def test_center_at_midpoint_allows_up_to_full_length(self):
        ann = annotation(length=100.0)
        window = sample_window(ann, FixedUniform(0.5, 1.0))
        assert window.center == pytest.approx((0.0, 0.0))
        assert window.length == pytest.approx(100.0)

    def test_monte_carlo_bounds_and_containment(self, rng):
        ann = annotation(length=200.0, width=40.0, angle=0.37, cx=300, cy=250)
        parent = ann.box
        for _ in range(10_000):
            window = sample_window(ann, rng)
            offset = np.hypot(window.center[0] - parent.cx,
                              window.center[1] - parent.cy)
            to_end = parent.length / 2 - offset
            assert 0.2 * parent.length - 1e-9 <= window.length <= 2 * to_end + 1e-9
            assert parent.contains(window.rect.corners(), tol=0.5).all()

    def test_window_rect_inherits_width_and_angle(self):
        ann = annotation(length=120.0, width=30.0, angle=-0.8)
        window = sample_window(ann, FixedUniform(0.3, 0.5))
        assert window.rect.width == 30.0
        assert window.rect.angle == pytest.approx(-0.8)


class TestInpaintRegion:
    def test_empty_mask_returns_copy(self, rng):
        image = rng.integers(0, 255, (20, 20, 3), dtype=np.uint8)
        out = inpaint_region(image, np.zeros((20, 20), bool))
        assert out is not image
        assert np.array_equal(out, image)

    def test_full_mask_rejected(self):
        with pytest.raises(ValueError):
            inpaint_region(np.zeros((8, 8), np.uint8), np.ones((8, 8), bool))

    def test_constant_image_fixed_point(self):
        image = np.full((30, 30, 3), 131, np.uint8)
        mask = np.zeros((30, 30), bool)
        mask[5:22, 7:25] = True
        out = inpaint_region(image, mask)
        assert np.abs(out.astype(int) - 131).max() <= 1

    def test_linear_gradient_recovered(self):
        # horizontal gradient, 2 levels per pixel; fill must track it
        base = np.tile((np.arange(80) * 2).astype(np.uint8), (60, 1))
        image = np.stack([base] * 3, axis=-1)
        mask = np.zeros((60, 80), bool)
        mask[20:32, 30:44] = True
        out = inpaint_region(image, mask)
        error = np.abs(out[mask].astype(int) - image[mask].astype(int))
        assert error.max() <= 5

    def test_unmasked_pixels_bit_identical(self, rng):
        image = rng.integers(0, 255, (40, 40, 3), dtype=np.uint8)
        mask = rng.random((40, 40)) < 0.2
        mask[0, 0] = False  # keep at least one known pixel
        out = inpaint_region(image, mask)
        assert np.array_equal(out[~mask], image[~mask])

    def test_grayscale_supported(self, rng):
        image = rng.integers(0, 255, (16, 16), dtype=np.uint8)
        mask = np.zeros((16, 16), bool)
        mask[4:9, 4:9] = True
        out = inpaint_region(image, mask)
        assert out.shape == image.shape
        assert np.array_equal(out[~mask], image[~mask])


class TestAugmentImage:
    def make_scene(self, seed=5, boxes=(2, 4)):
        rng = np.random.default_rng(seed)
        scene = random_scene(rng, box_count=boxes)
        return render_scene(scene, rng), scene

    def test_count_must_be_positive(self, rng):
        image, scene = self.make_scene()
        with pytest.raises(ValueError):
            augment_image(image, scene, 0, rng)

    def test_no_boxes_gives_plain_copies(self, rng):
        image = np.full((64, 64, 3), 50, np.uint8)
        scene = AnnotatedImage(None, 64, 64, [])
        outputs = augment_image(image, scene, 3, rng)
        assert len(outputs) == 3
        for out in outputs:
            assert np.array_equal(out.image, image)
            assert out.annotations == []

    def test_replacement_count_matches_source(self, rng):
        image, scene = self.make_scene()
        outputs = augment_image(image, scene, 4, rng)
        for out in outputs:
            assert len(out.annotations) == len(scene.annotations)

    def test_replacement_equals_window_rect(self, rng):
        image, scene = self.make_scene()
        out = augment_image(image, scene, 1, rng)[0]
        for ann, window in zip(out.annotations, out.windows):
            assert ann.box == window.rect
            assert ann.transcription is None

    def test_deterministic_given_seed(self):
        image, scene = self.make_scene()
        first = augment_image(image, scene, 2, np.random.default_rng(99))
        second = augment_image(image, scene, 2, np.random.default_rng(99))
        for a, b in zip(first, second):
            assert np.array_equal(a.image, b.image)
            assert a.annotations == b.annotations

    def test_pixels_outside_boxes_untouched(self, rng):
        image, scene = self.make_scene()
        out = augment_image(image, scene, 1, rng)[0]
        from textborder.raster import rects_mask
        box_mask = rects_mask([a.box for a in scene.annotations], image.shape[:2])
        assert np.array_equal(out.image[~box_mask], image[~box_mask])


class TestPlanCrop:
    def test_small_centered_box_always_inside(self):
        box = RotatedRect(256, 256, 60, 20, 0.3)
        for seed in range(50):
            plan = plan_crop(512, 512, [box], np.random.default_rng(seed))
            if plan.scale == 1.0:
                assert plan.keep == [0]
                assert not plan.fallback

    def test_scale_frequencies_uniform(self):
        counts = {ratio: 0 for ratio in RESIZE_RATIOS}
        trials = 10_000
        for seed in range(trials):
            plan = plan_crop(512, 512, [], np.random.default_rng(seed))
            counts[plan.scale] += 1
        result = stats.chisquare(list(counts.values()))
        assert result.pvalue > 0.01

    def test_never_cuts_boxes_without_fallback(self):
        boxes = [RotatedRect(150, 200, 90, 30, 0.5),
                 RotatedRect(400, 420, 120, 25, -0.4),
                 RotatedRect(300, 100, 70, 22, 1.2)]
        from textborder.augment import _crop_relation
        for seed in range(1000):
            plan = plan_crop(512, 512, boxes, np.random.default_rng(seed))
            if plan.fallback:
                continue
            scaled = [b.scaled(plan.scale) for b in boxes]
            for i, box in enumerate(scaled):
                relation = _crop_relation(box, plan.origin, CROP_SIZE)
                assert relation in ("inside", "outside")
                assert (relation == "inside") == (i in plan.keep)

    def test_fallback_after_exhaustion(self):
        # boxes arranged so every 512-crop at scale >= 1 cuts something
        boxes = [RotatedRect(x, y, 600, 14, 0.0)
                 for y in range(30, 1000, 90) for x in (350, 950)]
        plan = plan_crop(1300, 1000, boxes, np.random.default_rng(0),
                         max_attempts=50)
        if plan.scale >= 1.0:
            assert plan.fallback
            assert plan.dropped_cut or plan.keep is not None


class TestRandomResizeCrop:
    def test_output_shape_and_annotations(self):
        rng = np.random.default_rng(3)
        scene = random_scene(rng, box_count=(1, 3))
        image = render_scene(scene, rng)
        cropped, out, plan = random_resize_crop(image, scene,
                                                np.random.default_rng(8))
        assert cropped.shape == (CROP_SIZE, CROP_SIZE, 3)
        assert out.width == out.height == CROP_SIZE
        for ann in out.annotations:
            corners = ann.box.corners()
            assert corners.min() >= -1e-6
            assert corners.max() <= CROP_SIZE + 1e-6

    def test_padding_small_images(self):
        image = np.full((100, 120, 3), 7, np.uint8)
        scene = AnnotatedImage(None, 120, 100, [])
        for seed in range(10):
            cropped, _, plan = random_resize_crop(image, scene,
                                                  np.random.default_rng(seed))
            assert cropped.shape[:2] == (CROP_SIZE, CROP_SIZE)
            if plan.scale <= 3.0 and plan.padded:
                assert (cropped == PAD_VALUE).any()

    def test_deterministic(self):
        rng = np.random.default_rng(3)
        scene = random_scene(rng, box_count=(1, 3))
        image = render_scene(scene, rng)
        a, ann_a, _ = random_resize_crop(image, scene, np.random.default_rng(4))
        b, ann_b, _ = random_resize_crop(image, scene, np.random.default_rng(4))
        assert np.array_equal(a, b)
        assert ann_a.annotations == ann_b.annotations
