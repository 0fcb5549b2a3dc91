"""Turn score/regression maps into rotated text boxes.

Pipeline per image:

1. binarize the text map and the four border maps at their own means;
2. delineate line components: connected components of the text mask with
   the two long-edge border masks removed, which splits vertically
   adjacent lines;
3. per component, estimate its orientation, find its end pixels (overlap
   of the slightly dilated component with the short-edge border masks),
   reconstruct one box per end pixel from the four regressed distances,
   aggregate per corner with coordinate-wise medians, and merge the two
   end estimates (left corners from the left estimate, right corners from
   the right one);
4. score each box by the mean text score over its component and run
   rotated non-maximum suppression.

A synthetic predictor (:func:`oracle_predict`) perturbs ground-truth maps
and stands in for a trained network, which keeps the whole pipeline
testable end to end.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .geometry import (DetectionBox, RotatedRect, component_orientation,
                       min_area_rect, rotated_nms)
from .labels import LabelMaps, MapFormatError

log = logging.getLogger(__name__)

EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)
MIN_BOX_EXTENT = 2.0   # px; per-pixel boxes thinner than this are noise
MIN_END_PIXELS = 5     # per-end sample floor at stride 1 for a stable median


@dataclass
class PredictionMaps:
    """Predicted score and regression maps (a trained model's output shape)."""

    text: np.ndarray        # (H, W) scores in [0, 1]
    borders: np.ndarray     # (4, H, W) scores in [0, 1]
    distances: np.ndarray   # (4, H, W) px distances (upper, lower, left, right)

    def __post_init__(self):
        if self.borders.shape != (4,) + self.text.shape or \
                self.distances.shape != (4,) + self.text.shape:
            raise ValueError("inconsistent map shapes")
        if not (np.isfinite(self.text).all() and np.isfinite(self.borders).all()
                and np.isfinite(self.distances).all()):
            raise ValueError("maps contain non-finite values")

    @property
    def shape(self) -> tuple[int, int]:
        return self.text.shape

    def to_array(self) -> np.ndarray:
        return np.concatenate([self.text[None], self.borders,
                               self.distances]).astype(np.float32)

    @classmethod
    def from_array(cls, array: np.ndarray) -> "PredictionMaps":
        if array.ndim != 3 or array.shape[0] != 9:
            raise MapFormatError(f"expected 9 channels, got shape {array.shape}")
        array = array.astype(np.float32, copy=False)
        return cls(text=array[0], borders=array[1:5], distances=array[5:9])

    @classmethod
    def from_labels(cls, labels: LabelMaps) -> "PredictionMaps":
        return cls(text=labels.text.copy(), borders=labels.borders.copy(),
                   distances=labels.distances.copy())


@dataclass(frozen=True)
class NoiseSpec:
    """Degradations the synthetic predictor applies to ground-truth maps."""

    sigma_score: float = 0.0   # gaussian noise on score channels
    sigma_dist: float = 0.0    # gaussian noise on distance channels, px
    dropout: float = 0.0       # fraction of score pixels zeroed
    blur_radius: float = 0.0   # gaussian blur sigma on score channels, px


@dataclass(frozen=True)
class DecodeParams:
    nms_iou: float = 0.3
    min_component_area: float = 10.0   # image px^2 at any stride
    min_score: float = 0.5             # confidence floor on emitted boxes
    stride: int = 1
    use_borders: bool = True           # ablation flag: plain component regression
    keep_singletons: bool = True       # keep boxes seen from only one end
    end_dilation: float = 0.2          # fraction of estimated component width
    opening_size: int = 2              # binary-opening clears salt noise; <=1 off


@dataclass
class TextComponent:
    """One delineated text line: pixels, orientation, end-pixel sets."""

    pixels: np.ndarray                 # (N, 2) int (x, y) map coordinates
    orientation: float
    left_pixels: np.ndarray | None = None
    right_pixels: np.ndarray | None = None


def binarize(score_map: np.ndarray) -> np.ndarray:
    """Threshold a map at its own mean (strictly above)."""
    score_map = np.asarray(score_map)
    return score_map > score_map.mean()


def _clean_mask(mask: np.ndarray, opening_size: int) -> np.ndarray:
    """Binary opening to clear salt noise left by mean thresholding.

    A 2x2 structure wipes isolated specks while keeping bands as narrow as
    two pixels intact.
    """
    if opening_size <= 1 or not mask.any():
        return mask
    structure = np.ones((opening_size, opening_size), dtype=bool)
    return ndimage.binary_opening(mask, structure=structure)


def delineate(text_mask: np.ndarray, border_top: np.ndarray,
              border_bottom: np.ndarray, min_area: float = 10.0) -> list[np.ndarray]:
    """Split the text mask into line components.

    Long-edge border pixels are removed first, separating lines that touch
    across their long edges; remaining 8-connected components smaller than
    ``min_area`` map pixels are discarded.  Returns (N, 2) int arrays of
    (x, y) pixel coordinates in deterministic raster order.
    """
    core = text_mask & ~border_top & ~border_bottom
    labeled, count = ndimage.label(core, structure=EIGHT_CONNECTED)
    if count == 0:
        return []
    sizes = np.bincount(labeled.ravel())
    components = []
    for index in range(1, count + 1):
        if sizes[index] < min_area:
            continue
        rows, cols = np.nonzero(labeled == index)
        components.append(np.stack([cols, rows], axis=1))
    return components


def estimate_minor_extent(pixels: np.ndarray) -> float:
    """Across-axis extent of a pixel blob from its second moments.

    For a filled rectangle the minor-axis variance is extent^2 / 12.
    """
    d = pixels - pixels.mean(axis=0)
    cov = d.T @ d / len(pixels)
    eigenvalues = np.linalg.eigvalsh(cov)
    return float(math.sqrt(12.0 * max(eigenvalues[0], 0.0)))


def end_pixels(component: np.ndarray, border_left: np.ndarray,
               border_right: np.ndarray, dilation_radius: float
               ) -> tuple[np.ndarray, np.ndarray]:
    """End-pixel sets: the dilated component meeting the short border masks.

    Delineation removes long-border overlap, so the component is dilated a
    little before intersecting.  A split overlap (several blobs, e.g. when
    a collinear neighbor's band intrudes) is only logged: the downstream
    per-corner medians resolve minority contamination by majority vote.
    """
    shape = border_left.shape
    pad = int(math.ceil(dilation_radius)) + 1
    x0 = max(int(component[:, 0].min()) - pad, 0)
    x1 = min(int(component[:, 0].max()) + pad + 1, shape[1])
    y0 = max(int(component[:, 1].min()) - pad, 0)
    y1 = min(int(component[:, 1].max()) + pad + 1, shape[0])

    window = np.zeros((y1 - y0, x1 - x0), dtype=bool)
    window[component[:, 1] - y0, component[:, 0] - x0] = True
    if dilation_radius > 0:
        distance = ndimage.distance_transform_edt(~window)
        dilated = distance <= dilation_radius
    else:
        dilated = window

    def overlap(band: np.ndarray) -> np.ndarray:
        hit = dilated & band[y0:y1, x0:x1]
        if not hit.any():
            return np.empty((0, 2), dtype=np.int64)
        _, count = ndimage.label(hit, structure=EIGHT_CONNECTED)
        if count > 1:
            log.debug("end overlap split into %d blobs", count)
        rows, cols = np.nonzero(hit)
        return np.stack([cols + x0, rows + y0], axis=1)

    return overlap(border_left), overlap(border_right)


def _frame_axes(orientation: float, flipped: bool):
    u = np.array([math.cos(orientation), math.sin(orientation)])
    v = np.array([-u[1], u[0]])
    return (-u, -v) if flipped else (u, v)


def _plausible(distances: np.ndarray, pixels: np.ndarray) -> np.ndarray:
    """Mask of pixels whose regressed box has a believable extent.

    Pixels outside the true text region carry near-zero distances (plus
    noise); their implied boxes collapse to slivers and are dropped before
    aggregation.
    """
    d = distances[:, pixels[:, 1], pixels[:, 0]]
    return ((d[0] + d[1] >= MIN_BOX_EXTENT) & (d[2] + d[3] >= MIN_BOX_EXTENT))


def _regress_corners(pixels: np.ndarray, distances: np.ndarray,
                     orientation: float, stride: int = 1,
                     flipped: bool = False) -> np.ndarray:
    """Median per-corner box estimate from a set of regressing pixels.

    Each pixel's four distances span a box around it in the rotated frame;
    corners are aggregated coordinate-wise with medians, which shrugs off
    outlier pixels.  ``flipped`` interprets the distances in the
    half-turned frame (used when the detected reading direction points
    opposite the labeled one).
    """
    u, v = _frame_axes(orientation, flipped)
    xs = (pixels[:, 0] + 0.5) * stride
    ys = (pixels[:, 1] + 0.5) * stride
    d_up, d_low, d_left, d_right = (distances[k, pixels[:, 1], pixels[:, 0]]
                                    for k in range(4))
    centers = np.stack([xs, ys], axis=1)
    corner_stack = []
    for du, dv in ((-1, -1), (+1, -1), (+1, +1), (-1, +1)):
        along = d_right if du > 0 else -d_left
        across = d_low if dv > 0 else -d_up
        corner_stack.append(centers + np.outer(along, u) + np.outer(across, v))
    return np.stack([np.median(c, axis=0) for c in corner_stack])


def regress_end(pixels: np.ndarray, distances: np.ndarray, orientation: float,
                stride: int = 1, flipped: bool = False) -> RotatedRect:
    """Fit one box from a pixel set's regressed distances."""
    if len(pixels) == 0:
        raise ValueError("cannot regress an empty pixel set")
    corners = _regress_corners(pixels, distances, orientation, stride, flipped)
    return min_area_rect(corners)


def merge_corners(left: np.ndarray, right: np.ndarray) -> RotatedRect:
    """Composite box: reading-start corners from the left estimate,
    reading-end corners from the right estimate."""
    return min_area_rect(np.concatenate([left[[0, 3]], right[[1, 2]]]))


def merge_ends(left_box: RotatedRect, right_box: RotatedRect) -> RotatedRect:
    """Merge two same-frame end estimates of one text line."""
    return merge_corners(left_box.corners(), right_box.corners())


def _is_flipped(component: np.ndarray, orientation: float,
                left: np.ndarray, right: np.ndarray) -> bool:
    """Detect a half-turn between the estimated frame and the labeled one.

    The left band sits at the reading start, so its pixels must project
    below the right band's (or below the component mean when only one end
    is visible) along the estimated direction.
    """
    direction = np.array([math.cos(orientation), math.sin(orientation)])
    if len(left) and len(right):
        return float((left @ direction).mean()) > float((right @ direction).mean())
    reference = float((component @ direction).mean())
    if len(left):
        return float((left @ direction).mean()) > reference
    if len(right):
        return float((right @ direction).mean()) < reference
    return False


def decode(preds: PredictionMaps, params: DecodeParams = DecodeParams()
           ) -> list[DetectionBox]:
    """Run the full map-to-boxes pipeline.  Deterministic."""
    text_mask = _clean_mask(binarize(preds.text), params.opening_size)
    if params.use_borders:
        border_masks = [_clean_mask(binarize(band), params.opening_size)
                        for band in preds.borders]
    else:
        border_masks = [np.zeros_like(text_mask) for _ in range(4)]

    min_area = params.min_component_area / (params.stride ** 2)
    components = delineate(text_mask, border_masks[0], border_masks[1], min_area)

    boxes: list[DetectionBox] = []
    for pixels in components:
        component = TextComponent(pixels=pixels,
                                  orientation=component_orientation(pixels))
        score = float(np.clip(preds.text[pixels[:, 1], pixels[:, 0]].mean(), 0.0, 1.0))
        if score < params.min_score:
            continue
        if not params.use_borders:
            corners = _regress_corners(pixels, preds.distances,
                                       component.orientation, params.stride)
            try:
                boxes.append(DetectionBox(min_area_rect(corners), score))
            except ValueError:
                continue
            continue

        radius = params.end_dilation * estimate_minor_extent(pixels)
        left, right = end_pixels(pixels, border_masks[2], border_masks[3], radius)
        left = left[_plausible(preds.distances, left)] if len(left) else left
        right = right[_plausible(preds.distances, right)] if len(right) else right
        min_end = max(1, MIN_END_PIXELS // params.stride ** 2)
        component.left_pixels = left if len(left) >= min_end else left[:0]
        component.right_pixels = right if len(right) >= min_end else right[:0]
        left, right = component.left_pixels, component.right_pixels
        if len(left) == 0 and len(right) == 0:
            log.debug("component with %d px has no end overlap; dropped", len(pixels))
            continue
        if (len(left) == 0 or len(right) == 0) and not params.keep_singletons:
            continue
        flipped = _is_flipped(pixels, component.orientation, left, right)
        try:
            if len(left) and len(right):
                # Corner indices refer to the annotated reading frame both
                # with and without the half-turn correction, and the left
                # band sits at the reading start by construction.
                corners_l = _regress_corners(left, preds.distances,
                                             component.orientation,
                                             params.stride, flipped)
                corners_r = _regress_corners(right, preds.distances,
                                             component.orientation,
                                             params.stride, flipped)
                box = merge_corners(corners_l, corners_r)
            else:
                ends = left if len(left) else right
                box = regress_end(ends, preds.distances, component.orientation,
                                  params.stride, flipped)
        except ValueError:
            continue  # degenerate regression (e.g. collinear corners)
        boxes.append(DetectionBox(box, score))

    return rotated_nms(boxes, params.nms_iou)


def oracle_predict(labels: LabelMaps, noise: NoiseSpec = NoiseSpec(),
                   rng: np.random.Generator | None = None) -> PredictionMaps:
    """Synthesize prediction maps from ground truth with controlled noise.

    Score channels are blurred, perturbed with gaussian noise, clamped to
    [0, 1] and randomly zeroed at the dropout rate; distance channels get
    gaussian noise.  Deterministic given the generator state.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    scores = np.concatenate([labels.text[None], labels.borders]).astype(np.float64)
    for k in range(scores.shape[0]):
        channel = scores[k]
        if noise.blur_radius > 0:
            channel = ndimage.gaussian_filter(channel, sigma=noise.blur_radius)
        if noise.sigma_score > 0:
            channel = channel + rng.normal(0.0, noise.sigma_score, channel.shape)
        channel = np.clip(channel, 0.0, 1.0)
        if noise.dropout > 0:
            channel = np.where(rng.random(channel.shape) < noise.dropout,
                               0.0, channel)
        scores[k] = channel
    distances = labels.distances.astype(np.float64)
    if noise.sigma_dist > 0:
        distances = distances + rng.normal(0.0, noise.sigma_dist, distances.shape)
    return PredictionMaps(text=scores[0].astype(np.float32),
                          borders=scores[1:].astype(np.float32),
                          distances=distances.astype(np.float32))
