"""Text-segment resampling augmentation and resize/crop preprocessing.

Each annotated box is replaced by a randomly sampled sub-window of itself:
the window center is drawn uniformly on the box's center line shrunk by
0.1 * length from both ends, and the window length is drawn uniformly from
0.2 * length up to twice the distance from the chosen center to the closer
box end (which keeps the window inside the box by construction).  Box
pixels left outside the window are filled by diffusion inpainting.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np
from PIL import Image
from scipy import ndimage

from .annotations import AnnotatedImage, TextAnnotation
from .geometry import RotatedRect, polygon_intersection_area
from .raster import rects_mask

log = logging.getLogger(__name__)

SHRINK_FRACTION = 0.1      # trimmed off each end of the center line
MIN_LENGTH_FRACTION = 0.2  # lower bound of the sampled window length
RESIZE_RATIOS = (0.5, 1.0, 2.0, 3.0)
CROP_SIZE = 512
PAD_VALUE = 128


@dataclass(frozen=True)
class SampleWindow:
    """A sampled sub-segment of a parent text box."""

    parent: TextAnnotation
    center: tuple[float, float]
    length: float

    @property
    def rect(self) -> RotatedRect:
        p = self.parent.box
        return RotatedRect(self.center[0], self.center[1],
                           self.length, p.width, p.angle)


def sample_window(annotation: TextAnnotation, rng: np.random.Generator) -> SampleWindow:
    """Draw one sub-window of a text box.

    The draw order is fixed (center offset, then length) so results are a
    pure function of the generator state.
    """
    box = annotation.box
    half = 0.5 * box.length
    reach = half - SHRINK_FRACTION * box.length
    offset = rng.uniform(-reach, reach)
    to_end = half - abs(offset)
    lo = MIN_LENGTH_FRACTION * box.length
    hi = 2.0 * to_end
    length = rng.uniform(lo, hi) if hi > lo else lo
    u, _ = box.axes()
    center = (box.cx + offset * u[0], box.cy + offset * u[1])
    return SampleWindow(parent=annotation, center=center, length=length)


def _neighbor_sums(values: np.ndarray, weights: np.ndarray):
    """4-neighbor weighted sums of ``values`` and sums of ``weights``."""
    total = np.zeros_like(values)
    count = np.zeros(weights.shape, dtype=np.float64)
    w = weights.astype(np.float64)
    wv = values * w[..., None] if values.ndim == 3 else values * w
    total[1:] += wv[:-1]
    total[:-1] += wv[1:]
    total[:, 1:] += wv[:, :-1]
    total[:, :-1] += wv[:, 1:]
    count[1:] += w[:-1]
    count[:-1] += w[1:]
    count[:, 1:] += w[:, :-1]
    count[:, :-1] += w[:, 1:]
    return total, count


def _diffuse_window(work: np.ndarray, region: np.ndarray,
                    smoothing_passes: int) -> None:
    """Fill ``region`` pixels of a window in place by diffusion.

    Marches inward from the region boundary (each unfilled pixel takes the
    mean of its already-known 4-neighbors), then relaxes with
    ``smoothing_passes`` sweeps of 4-neighbor averaging over the region.
    """
    known = ~region
    remaining = region.copy()
    while remaining.any():
        total, count = _neighbor_sums(work, known)
        frontier = remaining & (count > 0)
        fill = total[frontier] / (count[frontier][..., None] if work.ndim == 3
                                  else count[frontier])
        work[frontier] = fill
        known |= frontier
        remaining &= ~frontier

    everywhere = np.ones(region.shape, dtype=bool)
    for _ in range(smoothing_passes):
        total, count = _neighbor_sums(work, everywhere)
        smoothed = total / (count[..., None] if work.ndim == 3 else count)
        work[region] = smoothed[region]


def inpaint_region(image: np.ndarray, mask: np.ndarray,
                   smoothing_passes: int = 8) -> np.ndarray:
    """Fill masked pixels by diffusion from their surroundings.

    Unmasked pixels are returned bit-identical.  Disjoint mask regions
    never influence each other (diffusion only crosses 4-neighbor edges),
    so each 4-connected component is processed in its own window.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != image.shape[:2]:
        raise ValueError(f"mask shape {mask.shape} does not match image {image.shape[:2]}")
    if not mask.any():
        return image.copy()
    if mask.all():
        raise ValueError("mask covers the entire image")

    work = image.astype(np.float64)
    labeled, n = ndimage.label(mask)  # default structure = 4-connectivity
    for r0, r1, c0, c1 in _component_windows(labeled, n, mask.shape):
        window = work[r0:r1, c0:c1]
        region = labeled[r0:r1, c0:c1] > 0
        region &= mask[r0:r1, c0:c1]
        _diffuse_window(window, region, smoothing_passes)

    out = image.copy()
    if np.issubdtype(image.dtype, np.integer):
        info = np.iinfo(image.dtype)
        out[mask] = np.clip(np.rint(work[mask]), info.min, info.max).astype(image.dtype)
    else:
        out[mask] = work[mask].astype(image.dtype)
    return out


def _component_windows(labeled: np.ndarray, n: int, shape):
    """Padded bounding windows of mask components, merged when overlapping."""
    boxes = []
    for slices in ndimage.find_objects(labeled):
        if slices is None:
            continue
        sl_r, sl_c = slices
        boxes.append([max(sl_r.start - 1, 0), min(sl_r.stop + 1, shape[0]),
                      max(sl_c.start - 1, 0), min(sl_c.stop + 1, shape[1])])
    merged = True
    while merged:
        merged = False
        out = []
        for box in boxes:
            for other in out:
                if not (box[1] <= other[0] or box[0] >= other[1] or
                        box[3] <= other[2] or box[2] >= other[3]):
                    other[0] = min(other[0], box[0])
                    other[1] = max(other[1], box[1])
                    other[2] = min(other[2], box[2])
                    other[3] = max(other[3], box[3])
                    merged = True
                    break
            else:
                out.append(box)
        boxes = out
    return [tuple(b) for b in boxes]


@dataclass
class AugmentedImage:
    """One augmentation output: pixels, replacement boxes, provenance."""

    image: np.ndarray
    annotations: list[TextAnnotation]
    windows: list[SampleWindow]
    source_id: str
    seed: int


def augment_image(image: np.ndarray, annotated: AnnotatedImage, count: int,
                  rng: np.random.Generator, source_id: str = "",
                  seed: int = 0, smoothing_passes: int = 8) -> list[AugmentedImage]:
    """Produce ``count`` augmented copies of one image.

    In each copy every box is independently replaced by one sampled
    window; the leftover box area (outside any window) is inpainted and
    the annotations are swapped for the window rectangles.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if image.shape[:2] != (annotated.height, annotated.width):
        raise ValueError("image dimensions do not match the annotations")
    outputs = []
    for _ in range(count):
        windows = [sample_window(a, rng) for a in annotated.annotations]
        shape = image.shape[:2]
        box_mask = rects_mask([a.box for a in annotated.annotations], shape)
        window_mask = rects_mask([w.rect for w in windows], shape)
        fill_mask = box_mask & ~window_mask
        pixels = (inpaint_region(image, fill_mask, smoothing_passes)
                  if fill_mask.any() else image.copy())
        new_annotations = [
            replace(w.parent, box=w.rect, transcription=None) for w in windows
        ]
        outputs.append(AugmentedImage(image=pixels, annotations=new_annotations,
                                      windows=windows, source_id=source_id,
                                      seed=seed))
    return outputs


@dataclass
class CropPlan:
    """The pure random decisions behind one resize/crop."""

    scale: float
    origin: tuple[int, int]          # crop top-left in scaled-image coords
    keep: list[int]                  # indices of boxes inside the crop
    dropped_cut: list[int]           # boxes discarded because the crop cut them
    fallback: bool                   # rejection sampling gave up
    padded: bool                     # canvas was extended with gray


def _crop_relation(box: RotatedRect, origin, size: float) -> str:
    """'inside', 'outside' or 'cut' relative to an axis-aligned crop."""
    x0, y0 = origin
    crop = np.array([[x0, y0], [x0 + size, y0], [x0 + size, y0 + size], [x0, y0 + size]],
                    dtype=float)
    corners = box.corners()
    if (corners[:, 0].min() >= x0 and corners[:, 0].max() <= x0 + size and
            corners[:, 1].min() >= y0 and corners[:, 1].max() <= y0 + size):
        return "inside"
    if (corners[:, 0].max() <= x0 or corners[:, 0].min() >= x0 + size or
            corners[:, 1].max() <= y0 or corners[:, 1].min() >= y0 + size):
        return "outside"
    inter = polygon_intersection_area(crop, corners)
    if inter < 1e-6:
        return "outside"
    return "cut"


def plan_crop(width: int, height: int, boxes: list[RotatedRect],
              rng: np.random.Generator, crop_size: int = CROP_SIZE,
              max_attempts: int = 1000) -> CropPlan:
    """Choose a resize ratio and a crop window that cuts no box.

    Rejection-samples crop origins until every box is fully inside or
    fully outside; after ``max_attempts`` failures, falls back to a crop
    centered on a random box, dropping (and logging) any boxes it cuts.
    """
    scale = RESIZE_RATIOS[rng.integers(len(RESIZE_RATIOS))]
    sw, sh = max(1, round(width * scale)), max(1, round(height * scale))
    scaled = [b.scaled(scale) for b in boxes]
    padded = sw < crop_size or sh < crop_size
    span_x, span_y = max(sw, crop_size) - crop_size, max(sh, crop_size) - crop_size

    def classify(origin):
        kinds = [_crop_relation(b, origin, crop_size) for b in scaled]
        keep = [i for i, k in enumerate(kinds) if k == "inside"]
        cut = [i for i, k in enumerate(kinds) if k == "cut"]
        return keep, cut

    for _ in range(max_attempts):
        origin = (int(rng.integers(span_x + 1)), int(rng.integers(span_y + 1)))
        keep, cut = classify(origin)
        if not cut:
            return CropPlan(scale=scale, origin=origin, keep=keep,
                            dropped_cut=[], fallback=False, padded=padded)

    anchor = scaled[rng.integers(len(scaled))]
    origin = (int(min(max(round(anchor.cx - crop_size / 2), 0), span_x)),
              int(min(max(round(anchor.cy - crop_size / 2), 0), span_y)))
    keep, cut = classify(origin)
    log.warning("crop rejection sampling exhausted; dropping %d cut boxes", len(cut))
    return CropPlan(scale=scale, origin=origin, keep=keep, dropped_cut=cut,
                    fallback=True, padded=padded)


def random_resize_crop(image: np.ndarray, annotated: AnnotatedImage,
                       rng: np.random.Generator,
                       crop_size: int = CROP_SIZE) -> tuple[np.ndarray, AnnotatedImage, CropPlan]:
    """Resize by a random ratio from RESIZE_RATIOS, then crop ``crop_size``
    square without cutting any box; smaller canvases are padded with gray."""
    boxes = [a.box for a in annotated.annotations]
    plan = plan_crop(annotated.width, annotated.height, boxes, rng, crop_size)
    sw = max(1, round(annotated.width * plan.scale))
    sh = max(1, round(annotated.height * plan.scale))
    if plan.scale != 1.0:
        pil = Image.fromarray(image).resize((sw, sh), Image.Resampling.BILINEAR)
        scaled = np.asarray(pil)
    else:
        scaled = image.copy()
    if plan.padded:
        canvas_shape = ((max(sh, crop_size), max(sw, crop_size)) + image.shape[2:])
        canvas = np.full(canvas_shape, PAD_VALUE, dtype=image.dtype)
        canvas[:sh, :sw] = scaled
        scaled = canvas
    x0, y0 = plan.origin
    cropped = scaled[y0:y0 + crop_size, x0:x0 + crop_size].copy()
    kept = [annotated.annotations[i] for i in plan.keep]
    new_annotations = [
        replace(a, box=a.box.scaled(plan.scale).translated(-x0, -y0)) for a in kept
    ]
    out = AnnotatedImage(path=annotated.path, width=crop_size, height=crop_size,
                         annotations=new_annotations)
    return cropped, out, plan
