"""Parsing and serialization of text-detection ground-truth formats.

Three input formats are supported:

* ``msra``      -- ``index difficulty x y w h angle`` per line, where (x, y)
  is the top-left of the unrotated box and the angle (radians) rotates the
  box about its own center.
* ``icdar13``   -- ``x1, y1, x2, y2, "transcription"`` per line
  (left, top, right, bottom), axis-aligned word boxes.
* ``icdar17``   -- 8 comma-separated quad coordinates, a script field and a
  transcription; a ``###`` transcription marks the box as difficult.

All parsers accept LF or CRLF line endings and an optional UTF-8 BOM.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

from .geometry import DetectionBox, Quad, RotatedRect, min_area_rect

log = logging.getLogger(__name__)

GRANULARITIES = ("word", "line", "unknown")


class AnnotationError(ValueError):
    """Malformed annotation input; carries the 1-based line number."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


@dataclass(frozen=True)
class TextAnnotation:
    """One annotated word or text line."""

    box: RotatedRect
    difficult: bool = False
    transcription: str | None = None
    granularity: str = "unknown"

    def __post_init__(self):
        if self.granularity not in GRANULARITIES:
            raise ValueError(f"unknown granularity {self.granularity!r}")


@dataclass
class AnnotatedImage:
    """An image path, its dimensions, and the text boxes it contains."""

    path: str | None
    width: int
    height: int
    annotations: list[TextAnnotation] = field(default_factory=list)

    def validate(self, slack: float = 20.0) -> None:
        """Check all corners lie within the image expanded by ``slack`` px.

        Real datasets contain slightly out-of-frame boxes, hence the slack.
        """
        for i, ann in enumerate(self.annotations):
            c = ann.box.corners()
            if (c[:, 0].min() < -slack or c[:, 1].min() < -slack or
                    c[:, 0].max() > self.width + slack or
                    c[:, 1].max() > self.height + slack):
                raise ValueError(
                    f"annotation {i} exceeds image bounds by more than {slack} px")

    def without_difficult(self) -> list[TextAnnotation]:
        return [a for a in self.annotations if not a.difficult]


def _content_lines(text: str):
    """Yield (line_number, stripped_line) skipping blank lines."""
    if text.startswith("﻿"):
        text = text[1:]
    for number, raw in enumerate(text.split("\n"), start=1):
        line = raw.rstrip("\r").strip()
        if line:
            yield number, line


def parse_msra(gt_text: str) -> list[TextAnnotation]:
    """Parse MSRA-style rotated-box ground truth."""
    out = []
    for number, line in _content_lines(gt_text):
        fields = line.split()
        if len(fields) != 7:
            raise AnnotationError(number, f"expected 7 fields, got {len(fields)}")
        try:
            difficult = int(fields[1]) != 0
            x, y, w, h, angle = (float(v) for v in fields[2:7])
        except ValueError as exc:
            raise AnnotationError(number, str(exc)) from None
        if w <= 0 or h <= 0:
            raise AnnotationError(number, f"non-positive box size {w} x {h}")
        rect = RotatedRect(x + 0.5 * w, y + 0.5 * h, w, h, angle)
        out.append(TextAnnotation(rect, difficult=difficult, granularity="line"))
    return out


def parse_icdar13(gt_text: str) -> list[TextAnnotation]:
    """Parse axis-aligned word boxes (left, top, right, bottom)."""
    out = []
    for number, line in _content_lines(gt_text):
        parts = line.split(",", 4)
        if len(parts) < 4:
            raise AnnotationError(number, f"expected 4 coordinates, got {len(parts)}")
        try:
            left, top, right, bottom = (float(p.strip()) for p in parts[:4])
        except ValueError as exc:
            raise AnnotationError(number, str(exc)) from None
        if right <= left or bottom <= top:
            raise AnnotationError(number, "box corners are not in left-top/right-bottom order")
        transcription = parts[4].strip().strip('"') if len(parts) == 5 else None
        rect = RotatedRect(0.5 * (left + right), 0.5 * (top + bottom),
                           right - left, bottom - top, 0.0)
        out.append(TextAnnotation(rect, transcription=transcription,
                                  granularity="word"))
    return out


def parse_icdar17_quad(gt_text: str, warnings: list[str] | None = None) -> list[TextAnnotation]:
    """Parse quadrilateral ground truth, fitting each quad's min-area rect.

    Self-intersecting or non-convex quads are skipped; a record for each is
    appended to ``warnings`` (when given) and logged.
    """
    out = []
    for number, line in _content_lines(gt_text):
        parts = line.split(",", 9)
        if len(parts) < 10:
            raise AnnotationError(number, f"expected 10 fields, got {len(parts)}")
        try:
            coords = [float(p.strip()) for p in parts[:8]]
        except ValueError as exc:
            raise AnnotationError(number, str(exc)) from None
        transcription = parts[9].strip()
        difficult = transcription == "###"
        pts = [(coords[i], coords[i + 1]) for i in range(0, 8, 2)]
        try:
            quad = Quad(tuple(pts))
            if not quad.is_convex():
                raise ValueError("non-convex quad")
            rect = min_area_rect(quad.as_array())
        except ValueError as exc:
            record = f"line {number}: skipped quad ({exc})"
            log.warning("%s", record)
            if warnings is not None:
                warnings.append(record)
            continue
        out.append(TextAnnotation(rect, difficult=difficult,
                                  transcription=transcription or None))
    return out


PARSERS = {
    "msra": parse_msra,
    "icdar13": parse_icdar13,
    "icdar17": parse_icdar17_quad,
}


def parse(gt_text: str, fmt: str) -> list[TextAnnotation]:
    try:
        parser = PARSERS[fmt]
    except KeyError:
        raise ValueError(f"unknown annotation format {fmt!r}") from None
    return parser(gt_text)


def drop_difficult(annotations: list[TextAnnotation]) -> list[TextAnnotation]:
    return [a for a in annotations if not a.difficult]


def write_msra(annotations: list[TextAnnotation]) -> str:
    lines = []
    for i, ann in enumerate(annotations):
        r = ann.box
        lines.append(f"{i} {int(ann.difficult)} "
                     f"{r.cx - 0.5 * r.length:.3f} {r.cy - 0.5 * r.width:.3f} "
                     f"{r.length:.3f} {r.width:.3f} {r.angle:.6f}")
    return "\n".join(lines) + ("\n" if lines else "")


def write_detections(boxes: list[DetectionBox], fmt: str) -> str:
    """Serialize detections in an annotation format's geometry layout.

    ``msra`` emits the rotated-box line format (scores are not
    representable there and are dropped); ``quad`` emits 8 corner
    coordinates followed by the score and an empty transcription, which
    round-trips through :func:`parse_icdar17_quad`.
    """
    lines = []
    if fmt == "msra":
        for i, det in enumerate(boxes):
            r = det.box
            lines.append(f"{i} 0 "
                         f"{r.cx - 0.5 * r.length:.3f} {r.cy - 0.5 * r.width:.3f} "
                         f"{r.length:.3f} {r.width:.3f} {r.angle:.6f}")
    elif fmt == "quad":
        for det in boxes:
            coords = ",".join(f"{v:.3f}" for v in det.box.corners().ravel())
            lines.append(f"{coords},{det.score:.4f},")
    else:
        raise ValueError(f"unknown detection format {fmt!r}")
    return "\n".join(lines) + ("\n" if lines else "")


def read_detections(text: str, fmt: str) -> list[DetectionBox]:
    """Parse detection files written by :func:`write_detections`."""
    if fmt == "msra":
        return [DetectionBox(a.box, 1.0) for a in parse_msra(text)]
    if fmt == "quad":
        boxes = []
        for number, line in _content_lines(text):
            parts = line.split(",", 9)
            if len(parts) < 9:
                raise AnnotationError(number, "expected 8 coordinates and a score")
            coords = [float(p) for p in parts[:8]]
            score = min(max(float(parts[8]), 0.0), 1.0)
            pts = [(coords[i], coords[i + 1]) for i in range(0, 8, 2)]
            boxes.append(DetectionBox(min_area_rect(pts), score))
        return boxes
    raise ValueError(f"unknown detection format {fmt!r}")


def rescale(annotation: TextAnnotation, factor: float) -> TextAnnotation:
    return replace(annotation, box=annotation.box.scaled(factor))
