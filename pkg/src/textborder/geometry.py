"""Rotated-rectangle and convex-polygon primitives.

All operations here are pure functions of their inputs and are safe to call
from any number of threads.  Coordinates live in a continuous pixel plane:
x grows rightward, y grows downward (image convention), and angles are
measured counter-clockwise from the +x axis in that plane.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Polygons below this area are considered degenerate.
DEGENERATE_AREA = 1e-9


def normalize_angle(angle: float) -> float:
    """Fold an angle into [-pi/2, pi/2); rectangle axes are pi-periodic."""
    a = math.fmod(angle + math.pi / 2.0, math.pi)
    if a < 0.0:
        a += math.pi
    return a - math.pi / 2.0


def angle_difference(a: float, b: float) -> float:
    """Smallest absolute difference between two pi-periodic angles."""
    d = abs(normalize_angle(a) - normalize_angle(b))
    return min(d, math.pi - d)


@dataclass(frozen=True)
class RotatedRect:
    """Rotated rectangle: center, extent along/across the reading direction.

    ``length`` runs along the reading direction, ``width`` across it.  The
    angle is normalized to [-pi/2, pi/2) on construction, so two rects that
    differ by a half-turn compare equal.
    """

    cx: float
    cy: float
    length: float
    width: float
    angle: float = 0.0

    def __post_init__(self):
        if not (self.length > 0.0 and self.width > 0.0 and
                math.isfinite(self.length) and math.isfinite(self.width)):
            raise ValueError(
                f"rectangle sides must be positive, got {self.length} x {self.width}")
        object.__setattr__(self, "cx", float(self.cx))
        object.__setattr__(self, "cy", float(self.cy))
        object.__setattr__(self, "length", float(self.length))
        object.__setattr__(self, "width", float(self.width))
        object.__setattr__(self, "angle", normalize_angle(float(self.angle)))

    @property
    def center(self) -> tuple[float, float]:
        return (self.cx, self.cy)

    def area(self) -> float:
        return self.length * self.width

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        """Unit vectors along the length (u) and width (v) directions."""
        c, s = math.cos(self.angle), math.sin(self.angle)
        return np.array([c, s]), np.array([-s, c])

    def corners(self) -> np.ndarray:
        """4x2 vertex array in consistent counter-clockwise order.

        Order: (-L/2,-W/2), (+L/2,-W/2), (+L/2,+W/2), (-L/2,+W/2) in the
        local frame, i.e. indices 0 and 3 sit at the "left" (reading start)
        end, indices 0 and 1 on the "upper" side.
        """
        u, v = self.axes()
        hl, hw = 0.5 * self.length, 0.5 * self.width
        c = np.array([self.cx, self.cy])
        return np.array([
            c - hl * u - hw * v,
            c + hl * u - hw * v,
            c + hl * u + hw * v,
            c - hl * u + hw * v,
        ])

    @classmethod
    def from_corners(cls, pts) -> "RotatedRect":
        """Rebuild a rect from 4 vertices in ``corners()`` order."""
        pts = np.asarray(pts, dtype=float)
        if pts.shape != (4, 2):
            raise ValueError("expected a 4x2 vertex array")
        center = pts.mean(axis=0)
        e_len = pts[1] - pts[0]
        e_wid = pts[3] - pts[0]
        return cls(center[0], center[1],
                   float(np.hypot(*e_len)), float(np.hypot(*e_wid)),
                   math.atan2(e_len[1], e_len[0]))

    def local_coords(self, points) -> np.ndarray:
        """Coordinates of ``points`` (N x 2) in the rect's centered frame."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        u, v = self.axes()
        d = pts - np.array([self.cx, self.cy])
        return np.stack([d @ u, d @ v], axis=-1)

    def contains(self, points, tol: float = 0.0) -> np.ndarray:
        """Boolean mask of the points lying inside (with ``tol`` slack)."""
        lc = self.local_coords(points)
        return ((np.abs(lc[..., 0]) <= 0.5 * self.length + tol) &
                (np.abs(lc[..., 1]) <= 0.5 * self.width + tol))

    def translated(self, dx: float, dy: float) -> "RotatedRect":
        return RotatedRect(self.cx + dx, self.cy + dy,
                           self.length, self.width, self.angle)

    def scaled(self, factor: float) -> "RotatedRect":
        return RotatedRect(self.cx * factor, self.cy * factor,
                           self.length * factor, self.width * factor, self.angle)

    def rotated_about(self, ox: float, oy: float, phi: float) -> "RotatedRect":
        c, s = math.cos(phi), math.sin(phi)
        dx, dy = self.cx - ox, self.cy - oy
        return RotatedRect(ox + c * dx - s * dy, oy + s * dx + c * dy,
                           self.length, self.width, self.angle + phi)


@dataclass(frozen=True)
class DetectionBox:
    """A decoded text box with its confidence score."""

    box: RotatedRect
    score: float

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"score must be in [0, 1], got {self.score}")


@dataclass(frozen=True)
class Quad:
    """Simple quadrilateral, canonically ordered counter-clockwise."""

    points: tuple[tuple[float, float], ...]

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.shape != (4, 2):
            raise ValueError("a quad needs exactly 4 (x, y) vertices")
        if not _is_simple_quad(pts):
            raise ValueError("self-intersecting quad")
        if abs(signed_area(pts)) < DEGENERATE_AREA:
            raise ValueError("degenerate quad (zero area)")
        if signed_area(pts) < 0.0:
            pts = pts[::-1]
        object.__setattr__(self, "points",
                           tuple((float(x), float(y)) for x, y in pts))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.points, dtype=float)

    def area(self) -> float:
        return signed_area(self.as_array())

    def is_convex(self) -> bool:
        pts = self.as_array()
        e = np.roll(pts, -1, axis=0) - pts
        cross = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
        return bool(np.all(cross > 0.0) or np.all(cross < 0.0))


def _cross2(a, b) -> float:
    return float(a[0] * b[1] - a[1] * b[0])


def _segments_cross(p, q, r, s) -> bool:
    """True when open segments pq and rs properly intersect."""
    d1 = _cross2(q - p, r - p)
    d2 = _cross2(q - p, s - p)
    d3 = _cross2(s - r, p - r)
    d4 = _cross2(s - r, q - r)
    return (d1 * d2 < 0.0) and (d3 * d4 < 0.0)


def _is_simple_quad(pts: np.ndarray) -> bool:
    return not (_segments_cross(pts[0], pts[1], pts[2], pts[3]) or
                _segments_cross(pts[1], pts[2], pts[3], pts[0]))


def signed_area(pts: np.ndarray) -> float:
    """Shoelace area; positive for counter-clockwise vertex order."""
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def polygon_area(pts) -> float:
    pts = np.asarray(pts, dtype=float)
    if len(pts) < 3:
        return 0.0
    return abs(signed_area(pts))


def _as_ccw_array(poly) -> np.ndarray:
    if isinstance(poly, Quad):
        return poly.as_array()
    if isinstance(poly, RotatedRect):
        return poly.corners()
    pts = np.asarray(poly, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
        raise ValueError("polygon must be an Nx2 vertex array with N >= 3")
    if signed_area(pts) < 0.0:
        pts = pts[::-1]
    return pts


def _clip_convex(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman clip of a convex subject by a convex CCW clipper.

    The inside test is boundary-inclusive so clipping a polygon by itself
    returns the polygon unchanged.
    """
    output = list(subject)
    for i in range(len(clip)):
        a = clip[i]
        b = clip[(i + 1) % len(clip)]
        ex, ey = b[0] - a[0], b[1] - a[1]
        if not output:
            break
        inp = output
        output = []
        prev = inp[-1]
        prev_in = ex * (prev[1] - a[1]) - ey * (prev[0] - a[0]) >= -1e-12
        for cur in inp:
            cur_in = ex * (cur[1] - a[1]) - ey * (cur[0] - a[0]) >= -1e-12
            if cur_in != prev_in:
                output.append(_line_intersection(a, b, prev, cur))
            if cur_in:
                output.append(cur)
            prev, prev_in = cur, cur_in
    return np.asarray(output, dtype=float) if output else np.empty((0, 2))


def _line_intersection(a, b, p, q) -> np.ndarray:
    d1 = np.asarray(b, dtype=float) - a
    d2 = np.asarray(q, dtype=float) - p
    denom = d1[0] * d2[1] - d1[1] * d2[0]
    t = ((p[0] - a[0]) * d2[1] - (p[1] - a[1]) * d2[0]) / denom
    return np.asarray(a, dtype=float) + t * d1


def _require_convex(pts: np.ndarray, name: str) -> None:
    e = np.roll(pts, -1, axis=0) - pts
    cross = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
    if np.any(cross < -1e-9 * np.max(np.abs(cross), initial=1.0)):
        raise ValueError(f"{name} polygon is not convex")


def polygon_intersection_area(a, b) -> float:
    """Area of the intersection of two simple convex polygons.

    Raises ``ValueError`` on degenerate (near-zero area) or non-convex
    input; returns 0.0 when the polygons are disjoint.
    """
    pa, pb = _as_ccw_array(a), _as_ccw_array(b)
    if polygon_area(pa) < DEGENERATE_AREA or polygon_area(pb) < DEGENERATE_AREA:
        raise ValueError("degenerate polygon")
    _require_convex(pa, "first")
    _require_convex(pb, "second")
    return polygon_area(_clip_convex(pa, pb))


def _rect_sort_key(r: RotatedRect):
    return (r.cx, r.cy, r.length, r.width, r.angle)


def iou(a: RotatedRect, b: RotatedRect) -> float:
    """Intersection over union of two rotated rectangles, in [0, 1].

    The operands are ordered canonically before clipping so the result is
    exactly symmetric in its arguments.
    """
    if _rect_sort_key(a) > _rect_sort_key(b):
        a, b = b, a
    inter = polygon_area(_clip_convex(a.corners(), b.corners()))
    inter = min(inter, a.area(), b.area())
    union = a.area() + b.area() - inter
    if union <= 0.0:
        return 0.0
    return min(inter / union, 1.0)


def rotated_nms(boxes: list[DetectionBox], iou_threshold: float) -> list[DetectionBox]:
    """Greedy non-maximum suppression over rotated boxes.

    Boxes are visited by descending score (ties broken by input index);
    a box is suppressed when its IoU with an already-kept box exceeds
    ``iou_threshold``.  Survivors are returned in visit order, which makes
    the operation idempotent.
    """
    order = sorted(range(len(boxes)), key=lambda i: (-boxes[i].score, i))
    kept: list[int] = []
    for i in order:
        if all(iou(boxes[i].box, boxes[j].box) <= iou_threshold for j in kept):
            kept.append(i)
    return [boxes[i] for i in kept]


def convex_hull(points) -> np.ndarray:
    """Convex hull (Andrew monotone chain), counter-clockwise, no duplicates."""
    pts = np.unique(np.asarray(points, dtype=float), axis=0)
    if len(pts) < 3:
        return pts
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]

    def half(seq):
        out = []
        for p in seq:
            while len(out) >= 2 and _cross2(out[-1] - out[-2], p - out[-2]) <= 0.0:
                out.pop()
            out.append(p)
        return out

    lower = half(pts)
    upper = half(pts[::-1])
    return np.asarray(lower[:-1] + upper[:-1])


def min_area_rect(points) -> RotatedRect:
    """Minimum-area rotated rectangle enclosing a point set.

    The optimum shares a direction with a hull edge, so each hull edge's
    frame is tried in turn.  The result is normalized so ``length`` is the
    longer side.
    """
    pts = np.asarray(points, dtype=float)
    hull = convex_hull(pts)
    if len(hull) < 3:
        raise ValueError("points are collinear; no enclosing rectangle")
    best = None
    for i in range(len(hull)):
        e = hull[(i + 1) % len(hull)] - hull[i]
        norm = np.hypot(*e)
        if norm < 1e-12:
            continue
        u = e / norm
        v = np.array([-u[1], u[0]])
        pu, pv = pts @ u, pts @ v
        du, dv = pu.max() - pu.min(), pv.max() - pv.min()
        area = du * dv
        if best is None or area < best[0]:
            cu, cv = 0.5 * (pu.max() + pu.min()), 0.5 * (pv.max() + pv.min())
            center = cu * u + cv * v
            best = (area, center, du, dv, math.atan2(u[1], u[0]))
    _, center, du, dv, ang = best
    du, dv = max(du, 1e-9), max(dv, 1e-9)
    if du < dv:
        du, dv = dv, du
        ang += 0.5 * math.pi
    return RotatedRect(center[0], center[1], du, dv, ang)


def component_orientation(pixels) -> float:
    """Principal-axis angle of a pixel set, in [-pi/2, pi/2).

    Uses the second central moments; perfectly collinear sets yield the
    segment direction (the moment formula degenerates to it), and sets
    with no spread fall back to 0.
    """
    pts = np.asarray(sorted(pixels) if isinstance(pixels, set) else pixels,
                     dtype=float)
    pts = np.atleast_2d(pts)
    if len(pts) < 3:
        raise ValueError("need at least 3 pixels to estimate an orientation")
    d = pts - pts.mean(axis=0)
    sxx = float(np.mean(d[:, 0] ** 2))
    syy = float(np.mean(d[:, 1] ** 2))
    sxy = float(np.mean(d[:, 0] * d[:, 1]))
    if sxx + syy < 1e-12:
        return 0.0
    return normalize_angle(0.5 * math.atan2(2.0 * sxy, sxx - syy))
