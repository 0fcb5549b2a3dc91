"""Ground-truth map generation: text region, border bands, regression targets.

Each annotation contributes

* a text region (its full interior),
* four border bands: two long-edge bands of size length x 0.2*width whose
  center lines coincide with the long edges, and two short-edge bands of
  size width x 0.8*width (along x across) centered on the short edges,
* four per-pixel distances from the pixel center to the box's upper,
  lower, left and right side lines, measured in the box's local frame and
  expressed in original-image pixels.

Pixels covered by several boxes belong to the box with the nearest center.
Difficult boxes contribute nothing except a zeroed validity region.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .annotations import AnnotatedImage
from .geometry import RotatedRect
from .raster import local_frame, map_shape, paint_rect, rect_window

BORDER_CHANNELS = ("long_top", "long_bottom", "short_left", "short_right")
DISTANCE_CHANNELS = ("upper", "lower", "left", "right")
LABEL_CHANNELS = 9  # text + 4 borders + 4 distances; validity is appended

FMAP_MAGIC = b"FMAP"
FMAP_VERSION = 1


class MapFormatError(ValueError):
    """Raised on malformed FMAP files or channel-count mismatches."""


@dataclass(frozen=True)
class BorderSegments:
    """The four border-band rectangles of one text box."""

    long_top: RotatedRect
    long_bottom: RotatedRect
    short_left: RotatedRect
    short_right: RotatedRect

    def in_channel_order(self) -> tuple[RotatedRect, ...]:
        return (self.long_top, self.long_bottom, self.short_left, self.short_right)


def extract_border_segments(box: RotatedRect) -> BorderSegments:
    """Border-band rects for a text box, in the box's rotated frame.

    Long bands straddle the long edges (half inside, half outside the
    box); short bands straddle the short edges and span 0.8*width across,
    fitting exactly between the two long bands.
    """
    u, v = box.axes()
    hl, hw = 0.5 * box.length, 0.5 * box.width
    cx, cy = box.cx, box.cy

    def at(du: float, dv: float, length: float, width: float) -> RotatedRect:
        return RotatedRect(cx + du * u[0] + dv * v[0],
                           cy + du * u[1] + dv * v[1],
                           length, width, box.angle)

    band = 0.2 * box.width
    return BorderSegments(
        long_top=at(0.0, -hw, box.length, band),
        long_bottom=at(0.0, hw, box.length, band),
        short_left=at(-hl, 0.0, box.width, 0.8 * box.width),
        short_right=at(hl, 0.0, box.width, 0.8 * box.width),
    )


@dataclass
class LabelMaps:
    """The 9-channel training-target stack plus a validity mask."""

    text: np.ndarray        # (H, W) float32 in {0, 1}
    borders: np.ndarray     # (4, H, W) float32 in {0, 1}, BORDER_CHANNELS order
    distances: np.ndarray   # (4, H, W) float32 px, DISTANCE_CHANNELS order
    validity: np.ndarray    # (H, W) float32 in {0, 1}

    @property
    def shape(self) -> tuple[int, int]:
        return self.text.shape

    def to_array(self, include_validity: bool = True) -> np.ndarray:
        parts = [self.text[None], self.borders, self.distances]
        if include_validity:
            parts.append(self.validity[None])
        return np.concatenate(parts).astype(np.float32)

    @classmethod
    def from_array(cls, array: np.ndarray) -> "LabelMaps":
        if array.ndim != 3 or array.shape[0] not in (LABEL_CHANNELS, LABEL_CHANNELS + 1):
            raise MapFormatError(
                f"expected {LABEL_CHANNELS} or {LABEL_CHANNELS + 1} channels, "
                f"got shape {array.shape}")
        array = array.astype(np.float32, copy=False)
        validity = (array[9] if array.shape[0] == LABEL_CHANNELS + 1
                    else np.ones(array.shape[1:], dtype=np.float32))
        return cls(text=array[0], borders=array[1:5], distances=array[5:9],
                   validity=validity)


def rasterize_labels(image: AnnotatedImage, stride: int = 1) -> LabelMaps:
    """Rasterize an image's annotations into label maps at ``stride``."""
    if stride not in (1, 2, 4):
        raise ValueError(f"stride must be 1, 2 or 4, got {stride}")
    shape = map_shape(image.height, image.width, stride)
    text = np.zeros(shape, dtype=np.float32)
    borders = np.zeros((4,) + shape, dtype=np.float32)
    distances = np.zeros((4,) + shape, dtype=np.float32)
    validity = np.ones(shape, dtype=np.float32)

    live = image.without_difficult()

    # Ownership pass: each pixel belongs to the covering box with the
    # nearest center, which settles overlaps deterministically.
    owner = np.full(shape, -1, dtype=np.int32)
    center_d2 = np.full(shape, np.inf, dtype=np.float64)
    for idx, ann in enumerate(live):
        box = ann.box
        window = rect_window(box, shape, stride)
        if window is None:
            continue
        r0, r1, c0, c1 = window
        lu, lv = local_frame(box, window, stride)
        inside = (np.abs(lu) <= 0.5 * box.length) & (np.abs(lv) <= 0.5 * box.width)
        d2 = lu * lu + lv * lv
        claim = inside & (d2 < center_d2[r0:r1, c0:c1])
        owner[r0:r1, c0:c1][claim] = idx
        center_d2[r0:r1, c0:c1][claim] = d2[claim]

    text[owner >= 0] = 1.0

    for idx, ann in enumerate(live):
        box = ann.box
        window = rect_window(box, shape, stride)
        if window is None:
            continue
        r0, r1, c0, c1 = window
        lu, lv = local_frame(box, window, stride)
        mine = owner[r0:r1, c0:c1] == idx
        hl, hw = 0.5 * box.length, 0.5 * box.width
        distances[0, r0:r1, c0:c1][mine] = (lv + hw)[mine]   # to upper side
        distances[1, r0:r1, c0:c1][mine] = (hw - lv)[mine]   # to lower side
        distances[2, r0:r1, c0:c1][mine] = (lu + hl)[mine]   # to left side
        distances[3, r0:r1, c0:c1][mine] = (hl - lu)[mine]   # to right side

        for channel, segment in enumerate(extract_border_segments(box).in_channel_order()):
            paint_rect(borders[channel], segment, stride, value=1.0)

    for ann in image.annotations:
        if ann.difficult:
            paint_rect(validity, ann.box, stride, value=0.0)

    return LabelMaps(text=text, borders=borders, distances=distances,
                     validity=validity)


def write_fmap(path, array: np.ndarray) -> None:
    """Write a (C, H, W) float32 stack in the FMAP container."""
    array = np.ascontiguousarray(array, dtype="<f4")
    if array.ndim != 3:
        raise MapFormatError(f"expected a (C, H, W) array, got shape {array.shape}")
    c, h, w = array.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sIIII", FMAP_MAGIC, FMAP_VERSION, h, w, c))
        fh.write(array.tobytes())


def read_fmap(path) -> np.ndarray:
    header_size = struct.calcsize("<4sIIII")
    with open(path, "rb") as fh:
        header = fh.read(header_size)
        if len(header) < header_size:
            raise MapFormatError("truncated FMAP header")
        magic, version, h, w, c = struct.unpack("<4sIIII", header)
        if magic != FMAP_MAGIC:
            raise MapFormatError(f"bad magic {magic!r}")
        if version != FMAP_VERSION:
            raise MapFormatError(f"unsupported FMAP version {version}")
        payload = fh.read(4 * c * h * w + 1)
    if len(payload) != 4 * c * h * w:
        raise MapFormatError("FMAP payload size does not match header")
    return np.frombuffer(payload, dtype="<f4").reshape(c, h, w).copy()


def write_maps(maps: LabelMaps, path) -> None:
    write_fmap(path, maps.to_array(include_validity=True))


def read_maps(path) -> LabelMaps:
    return LabelMaps.from_array(read_fmap(path))
