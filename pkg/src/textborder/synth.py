"""Synthetic scene generation for end-to-end pipeline exercises.

Scenes are collections of non-overlapping rotated text boxes on a square
canvas; a simple renderer draws stripe-textured boxes so the image
pipeline (augmentation, inpainting, overlays) has real pixels to chew on.
"""

from __future__ import annotations

import numpy as np

from .annotations import AnnotatedImage, TextAnnotation
from .geometry import RotatedRect, iou
from .raster import rect_mask


def random_scene(rng: np.random.Generator, size: int = 512,
                 box_count: tuple[int, int] = (1, 8),
                 length_range: tuple[float, float] = (50.0, 180.0),
                 width_range: tuple[float, float] = (12.0, 36.0),
                 min_aspect: float = 2.5, margin: float = 24.0,
                 separation: float = 6.0, max_attempts: int = 200,
                 difficult_rate: float = 0.0) -> AnnotatedImage:
    """Sample a scene of non-overlapping rotated boxes.

    Pairwise separation is enforced by requiring zero IoU between boxes
    grown by ``separation`` on each side, so decoded components never
    bleed into each other through rasterization alone.
    """
    target = int(rng.integers(box_count[0], box_count[1] + 1))
    boxes: list[RotatedRect] = []
    annotations: list[TextAnnotation] = []
    attempts = 0
    while len(boxes) < target and attempts < max_attempts * target:
        attempts += 1
        length = float(rng.uniform(*length_range))
        width = float(rng.uniform(width_range[0],
                                  min(width_range[1], length / min_aspect)))
        angle = float(rng.uniform(-np.pi / 2, np.pi / 2))
        cx = float(rng.uniform(margin + length / 2, size - margin - length / 2))
        cy = float(rng.uniform(margin + length / 2, size - margin - length / 2))
        candidate = RotatedRect(cx, cy, length, width, angle)
        if _corners_outside(candidate, size, margin):
            continue
        grown = RotatedRect(cx, cy, length + 2 * separation,
                            width + 2 * separation, angle)
        if any(iou(grown, other) > 0.0 for other in boxes):
            continue
        boxes.append(grown)
        difficult = bool(rng.random() < difficult_rate)
        annotations.append(TextAnnotation(candidate, difficult=difficult,
                                          granularity="line"))
    return AnnotatedImage(path=None, width=size, height=size,
                          annotations=annotations)


def _corners_outside(box: RotatedRect, size: int, margin: float) -> bool:
    c = box.corners()
    return bool(c.min() < margin or c.max() > size - margin)


def parallel_pair(rng: np.random.Generator, gap_fraction: float,
                  size: int = 256, length: float = 140.0,
                  width: float = 24.0, angle: float | None = None
                  ) -> AnnotatedImage:
    """Two same-orientation boxes stacked across their width with a small
    gap (``gap_fraction`` of the width), centered on the canvas."""
    if angle is None:
        angle = float(rng.uniform(-np.pi / 6, np.pi / 6))
    gap = gap_fraction * width
    offset = 0.5 * (width + gap)
    cx = cy = size / 2.0
    v = np.array([-np.sin(angle), np.cos(angle)])
    a = RotatedRect(cx - offset * v[0], cy - offset * v[1], length, width, angle)
    b = RotatedRect(cx + offset * v[0], cy + offset * v[1], length, width, angle)
    return AnnotatedImage(path=None, width=size, height=size,
                          annotations=[TextAnnotation(a, granularity="line"),
                                       TextAnnotation(b, granularity="line")])


def render_scene(scene: AnnotatedImage, rng: np.random.Generator) -> np.ndarray:
    """Draw a stripe-textured uint8 RGB image for the scene's boxes."""
    height, width = scene.height, scene.width
    base = rng.integers(90, 170)
    image = np.full((height, width, 3),
                    base, dtype=np.uint8)
    image = (image.astype(np.int16) +
             rng.integers(-8, 9, size=image.shape, dtype=np.int16))
    image = np.clip(image, 0, 255).astype(np.uint8)
    ys, xs = np.mgrid[0:height, 0:width]
    centers = np.stack([xs + 0.5, ys + 0.5], axis=-1).reshape(-1, 2)
    for ann in scene.annotations:
        box = ann.box
        mask = rect_mask(box, (height, width))
        if not mask.any():
            continue
        local = box.local_coords(centers).reshape(height, width, 2)
        stripe_period = max(4.0, box.width * 0.4)
        stripes = ((local[..., 0] / stripe_period) % 1.0) < 0.5
        ink = int(rng.integers(0, 70))
        paper = int(rng.integers(190, 255))
        for c in range(3):
            channel = image[..., c]
            channel[mask & stripes] = ink
            channel[mask & ~stripes] = paper
    return image
