"""Shared rasterization helpers.

Map pixel (row, col) at stride ``s`` covers the image square
[col*s, (col+1)*s) x [row*s, (row+1)*s); its center sits at
((col + 0.5) * s, (row + 0.5) * s) in image coordinates.  A pixel belongs
to a shape when its center does.
"""

from __future__ import annotations

import math

import numpy as np

from .geometry import RotatedRect


def map_shape(height: int, width: int, stride: int = 1) -> tuple[int, int]:
    return (-(-height // stride), -(-width // stride))


def pixel_centers(rows: np.ndarray, cols: np.ndarray, stride: int = 1):
    """Image-coordinate centers of the given map pixels."""
    xs = (cols + 0.5) * stride
    ys = (rows + 0.5) * stride
    return xs, ys


def rect_window(rect: RotatedRect, shape: tuple[int, int], stride: int = 1,
                margin: float = 0.0):
    """Map-index slice bounds covering the rect (plus ``margin`` image px).

    Returns (r0, r1, c0, c1) clamped to the map, or None when the rect
    falls entirely outside.
    """
    corners = rect.corners()
    h, w = shape
    c0 = int(math.floor((corners[:, 0].min() - margin) / stride))
    c1 = int(math.ceil((corners[:, 0].max() + margin) / stride)) + 1
    r0 = int(math.floor((corners[:, 1].min() - margin) / stride))
    r1 = int(math.ceil((corners[:, 1].max() + margin) / stride)) + 1
    r0, c0 = max(r0, 0), max(c0, 0)
    r1, c1 = min(r1, h), min(c1, w)
    if r0 >= r1 or c0 >= c1:
        return None
    return r0, r1, c0, c1


def local_frame(rect: RotatedRect, window, stride: int = 1):
    """Local (along-length, across-width) coordinates of a window's centers."""
    r0, r1, c0, c1 = window
    cols = np.arange(c0, c1)
    rows = np.arange(r0, r1)
    xs = (cols + 0.5) * stride - rect.cx
    ys = (rows + 0.5) * stride - rect.cy
    u, v = rect.axes()
    lu = u[0] * xs[None, :] + u[1] * ys[:, None]
    lv = v[0] * xs[None, :] + v[1] * ys[:, None]
    return lu, lv


def paint_rect(mask: np.ndarray, rect: RotatedRect, stride: int = 1,
               value=True) -> None:
    """Set mask pixels whose centers lie inside the rect to ``value``."""
    window = rect_window(rect, mask.shape, stride)
    if window is None:
        return
    r0, r1, c0, c1 = window
    lu, lv = local_frame(rect, window, stride)
    inside = (np.abs(lu) <= 0.5 * rect.length) & (np.abs(lv) <= 0.5 * rect.width)
    mask[r0:r1, c0:c1][inside] = value


def rect_mask(rect: RotatedRect, shape: tuple[int, int], stride: int = 1) -> np.ndarray:
    mask = np.zeros(shape, dtype=bool)
    paint_rect(mask, rect, stride)
    return mask


def rects_mask(rects, shape: tuple[int, int], stride: int = 1) -> np.ndarray:
    mask = np.zeros(shape, dtype=bool)
    for rect in rects:
        paint_rect(mask, rect, stride)
    return mask
