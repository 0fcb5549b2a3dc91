"""Multi-task loss: overlap-based classification terms plus a box-IoU
regression term, with analytic gradients for verification harnesses.

The total objective is

    total = cls + loc_weight * loc + brd_weight * brd

where ``cls`` and ``brd`` are soft-overlap (Dice) losses on the text and
border score maps and ``loc`` is the mean -log(IoU) between the axis
distances of ground truth and prediction at text pixels.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .labels import LabelMaps

log = logging.getLogger(__name__)

DICE_EPS = 1e-6
MIN_DISTANCE = 1e-3  # px; non-positive predicted distances clamp here


@dataclass(frozen=True)
class LossWeights:
    loc: float = 1.0
    brd: float = 1.0

    def __post_init__(self):
        if self.loc < 0.0 or self.brd < 0.0:
            raise ValueError("loss weights must be non-negative")


@dataclass
class LossReport:
    total: float
    cls: float
    loc: float
    brd: float
    clamped_distances: int = 0
    gradients: dict[str, np.ndarray] = field(default_factory=dict)


def _check_same_shape(truth: np.ndarray, pred: np.ndarray) -> None:
    if truth.shape != pred.shape:
        raise ValueError(f"shape mismatch: {truth.shape} vs {pred.shape}")


def dice_coefficient(truth, pred) -> float:
    """Soft overlap similarity 2*sum(g*p) / (sum(g) + sum(p) + eps)."""
    truth = np.asarray(truth, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    _check_same_shape(truth, pred)
    overlap = float((truth * pred).sum())
    return 2.0 * overlap / (float(truth.sum()) + float(pred.sum()) + DICE_EPS)


def dice_loss(truth, pred, with_grad: bool = False):
    """1 - dice_coefficient; optionally also d(loss)/d(pred)."""
    truth = np.asarray(truth, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    _check_same_shape(truth, pred)
    overlap = float((truth * pred).sum())
    denom = float(truth.sum()) + float(pred.sum()) + DICE_EPS
    loss = 1.0 - 2.0 * overlap / denom
    if not with_grad:
        return loss
    grad = (2.0 * overlap - 2.0 * truth * denom) / (denom * denom)
    return loss, grad


def masked_dice_loss(truth, pred, mask, with_grad: bool = False):
    """Dice loss restricted to mask == 1 pixels (validity masking)."""
    mask = np.asarray(mask, dtype=np.float64)
    if not with_grad:
        return dice_loss(truth * mask, pred * mask)
    loss, grad = dice_loss(truth * mask, pred * mask, with_grad=True)
    return loss, grad * mask


def border_loss(truth_borders, pred_borders, with_grad: bool = False):
    """Mean of the four per-channel dice losses."""
    truth_borders = np.asarray(truth_borders, dtype=np.float64)
    pred_borders = np.asarray(pred_borders, dtype=np.float64)
    _check_same_shape(truth_borders, pred_borders)
    n = truth_borders.shape[0]
    losses, grads = [], []
    for k in range(n):
        if with_grad:
            loss_k, grad_k = dice_loss(truth_borders[k], pred_borders[k], with_grad=True)
            grads.append(grad_k / n)
        else:
            loss_k = dice_loss(truth_borders[k], pred_borders[k])
        losses.append(loss_k)
    mean = float(np.mean(losses))
    if not with_grad:
        return mean
    return mean, np.stack(grads)


def _clamp_distances(d: np.ndarray) -> tuple[np.ndarray, int]:
    bad = d < MIN_DISTANCE
    n_bad = int(bad.sum())
    if n_bad:
        d = np.where(bad, MIN_DISTANCE, d)
    return d, n_bad


def iou_loss(dist_truth, dist_pred, with_grad: bool = False):
    """Mean -log(IoU) between the boxes implied by two 4-distance stacks.

    Inputs are (4, ...) arrays ordered (upper, lower, left, right).  The
    intersection height/width take the per-side minima; the union follows
    from the two areas.  Non-positive predicted distances are clamped to
    MIN_DISTANCE (counted, warned); gradients are zero in clamped entries.
    """
    dg = np.asarray(dist_truth, dtype=np.float64).reshape(4, -1)
    dp_raw = np.asarray(dist_pred, dtype=np.float64).reshape(4, -1)
    if dg.shape != dp_raw.shape:
        raise ValueError(f"shape mismatch: {dg.shape} vs {dp_raw.shape}")
    if dg.shape[1] == 0:
        return (0.0, np.zeros_like(dp_raw), 0) if with_grad else 0.0
    if np.any(dg < -1e-9):
        raise ValueError("ground-truth distances must be non-negative")
    dg = np.maximum(dg, MIN_DISTANCE)  # boundary pixels may rasterize to 0
    dp, n_clamped = _clamp_distances(dp_raw)
    if n_clamped:
        log.warning("clamped %d non-positive predicted distances", n_clamped)

    height_g, width_g = dg[0] + dg[1], dg[2] + dg[3]
    height_p, width_p = dp[0] + dp[1], dp[2] + dp[3]
    inter_h = np.minimum(dg[0], dp[0]) + np.minimum(dg[1], dp[1])
    inter_w = np.minimum(dg[2], dp[2]) + np.minimum(dg[3], dp[3])
    inter = inter_h * inter_w
    union = height_g * width_g + height_p * width_p - inter
    losses = np.log(union) - np.log(inter)
    n = dg.shape[1]
    loss = float(losses.mean())
    if not with_grad:
        return loss

    # d(inter)/d(pred side) is the opposite extent where pred is the minimum
    take_p = (dp < dg).astype(np.float64)
    d_inter = np.stack([inter_w * take_p[0], inter_w * take_p[1],
                        inter_h * take_p[2], inter_h * take_p[3]])
    d_area = np.stack([width_p, width_p, height_p, height_p])
    grad = ((d_area - d_inter) / union - d_inter / inter) / n
    grad = np.where(dp_raw < MIN_DISTANCE, 0.0, grad)
    return loss, grad.reshape(np.shape(dist_pred)), n_clamped


def total_loss(labels: LabelMaps, preds, weights: LossWeights = LossWeights(),
               mask_borders_from_text: bool = False,
               with_grad: bool = False) -> LossReport:
    """Combine the three loss terms on one image's maps.

    ``mask_borders_from_text`` removes border-band pixels from the text
    classification term (both sides), for experiments where border pixels
    should not count as text positives.
    """
    valid = labels.validity
    if mask_borders_from_text:
        valid = valid * (1.0 - np.clip(labels.borders.max(axis=0), 0.0, 1.0))

    text_pixels = (labels.text > 0.5) & (labels.validity > 0.5)
    dg = labels.distances[:, text_pixels]
    dp = preds.distances[:, text_pixels]

    grads: dict[str, np.ndarray] = {}
    clamped = 0
    if with_grad:
        cls, grad_text = masked_dice_loss(labels.text, preds.text, valid, with_grad=True)
        brd, grad_borders = border_loss(labels.borders, preds.borders, with_grad=True)
        loc, grad_cols, clamped = iou_loss(dg, dp, with_grad=True)
        grad_dist = np.zeros_like(preds.distances, dtype=np.float64)
        grad_dist[:, text_pixels] = weights.loc * grad_cols
        grads = {"text": grad_text,
                 "borders": weights.brd * grad_borders,
                 "distances": grad_dist}
    else:
        cls = masked_dice_loss(labels.text, preds.text, valid)
        brd = border_loss(labels.borders, preds.borders)
        if dg.size:
            loc = iou_loss(dg, dp)
        else:
            loc = 0.0

    total = cls + weights.loc * loc + weights.brd * brd
    return LossReport(total=total, cls=cls, loc=loc, brd=brd,
                      clamped_distances=clamped, gradients=grads)


def finite_difference(fn, x: np.ndarray, step: float = 1e-4) -> np.ndarray:
    """Central finite-difference gradient of a scalar function of an array."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.ravel()
    out = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = fn(x)
        flat[i] = orig - step
        lo = fn(x)
        flat[i] = orig
        out[i] = (hi - lo) / (2.0 * step)
    return grad


def relative_gradient_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Norm-relative disagreement between two gradients."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    b = np.asarray(numeric, dtype=np.float64).ravel()
    scale = max(float(np.linalg.norm(a)), float(np.linalg.norm(b)), 1e-12)
    return float(np.linalg.norm(a - b)) / scale
