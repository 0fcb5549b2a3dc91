"""Detection-evaluation protocols.

Two matchers are provided:

* ``one_to_one`` -- greedy best-IoU bipartite matching with an angle
  constraint (the rotated-box protocol used by MSRA-style benchmarks);
* ``icdar13`` -- area-recall / area-precision matching with one-to-many
  and many-to-one groups scored at a 0.8 fragmentation penalty
  (the DetEval / Wolf-Jolion scheme behind the ICDAR2013 server).

Difficult ground-truth boxes are don't-care regions: they leave the
recall pool, and detections that only hit them leave the precision pool.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .annotations import TextAnnotation
from .geometry import DetectionBox, angle_difference, iou, polygon_intersection_area

ONE_TO_ONE = "one_to_one"
ICDAR13 = "icdar13"
FRAGMENTATION_PENALTY = 0.8
DONT_CARE_OVERLAP = 0.5  # det-area fraction inside a difficult box


@dataclass
class MatchRecord:
    gt_index: int
    det_index: int
    kind: str          # "one_one" | "one_many" | "many_one"
    quality: float     # IoU (one_to_one) or area recall (icdar13)


@dataclass
class ImageEval:
    """Per-image matching outcome plus the corpus-aggregation numerators."""

    records: list[MatchRecord] = field(default_factory=list)
    recall_score: float = 0.0
    precision_score: float = 0.0
    gt_count: int = 0
    det_count: int = 0


@dataclass
class MatchReport:
    protocol: str
    thresholds: dict
    images: list[ImageEval] = field(default_factory=list)

    @property
    def recall(self) -> float:
        total = sum(e.gt_count for e in self.images)
        return sum(e.recall_score for e in self.images) / total if total else 0.0

    @property
    def precision(self) -> float:
        total = sum(e.det_count for e in self.images)
        return sum(e.precision_score for e in self.images) / total if total else 0.0

    @property
    def fscore(self) -> float:
        p, r = self.precision, self.recall
        return 2.0 * p * r / (p + r) if p + r > 0 else 0.0

    def to_json(self) -> str:
        payload = {
            "protocol": self.protocol,
            "thresholds": self.thresholds,
            "recall": self.recall,
            "precision": self.precision,
            "fscore": self.fscore,
            "images": [asdict(e) for e in self.images],
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    def format_table(self) -> str:
        header = f"{'Protocol':<12} {'R':>7} {'P':>7} {'F':>7}"
        row = (f"{self.protocol:<12} {self.recall:7.3f} "
               f"{self.precision:7.3f} {self.fscore:7.3f}")
        return header + "\n" + row + "\n"


def combine_reports(reports: list[MatchReport]) -> MatchReport:
    if not reports:
        raise ValueError("no reports to combine")
    protocol = reports[0].protocol
    thresholds = reports[0].thresholds
    if any(r.protocol != protocol for r in reports):
        raise ValueError("cannot combine reports from different protocols")
    combined = MatchReport(protocol=protocol, thresholds=thresholds)
    for r in reports:
        combined.images.extend(r.images)
    return combined


def _split_difficult(gts: list[TextAnnotation]):
    countable, difficult = [], []
    for g in gts:
        (difficult if g.difficult else countable).append(g)
    return countable, difficult


def match_one_to_one(gts: list[TextAnnotation], dets: list[DetectionBox],
                     iou_threshold: float = 0.5,
                     angle_threshold: float = math.pi / 8.0) -> MatchReport:
    """Greedy best-IoU one-to-one matching for a single image.

    A pair qualifies when IoU exceeds ``iou_threshold`` and the box angles
    differ by less than ``angle_threshold``.  Candidate pairs are taken in
    decreasing IoU (ties by indices), so the outcome does not depend on
    input order beyond deterministic tie-breaks.
    """
    if not 0.0 < iou_threshold < 1.0:
        raise ValueError("iou_threshold must be in (0, 1)")
    countable, difficult = _split_difficult(gts)

    candidates = []
    for gi, g in enumerate(countable):
        for di, d in enumerate(dets):
            pair_iou = iou(g.box, d.box)
            if pair_iou > iou_threshold and \
                    angle_difference(g.box.angle, d.box.angle) < angle_threshold:
                candidates.append((pair_iou, gi, di))
    candidates.sort(key=lambda t: (-t[0], t[1], t[2]))

    gt_used, det_used = set(), set()
    result = ImageEval(gt_count=len(countable), det_count=len(dets))
    for pair_iou, gi, di in candidates:
        if gi in gt_used or di in det_used:
            continue
        gt_used.add(gi)
        det_used.add(di)
        result.records.append(MatchRecord(gi, di, "one_one", pair_iou))

    dont_care = 0
    for di, d in enumerate(dets):
        if di in det_used:
            continue
        for g in difficult:
            if iou(g.box, d.box) > iou_threshold and \
                    angle_difference(g.box.angle, d.box.angle) < angle_threshold:
                dont_care += 1
                break
    result.det_count -= dont_care
    result.recall_score = float(len(gt_used))
    result.precision_score = float(len(det_used))

    return MatchReport(protocol=ONE_TO_ONE,
                       thresholds={"iou": iou_threshold, "angle": angle_threshold},
                       images=[result])


def _area(box) -> float:
    return box.area()


def match_icdar13(gts: list[TextAnnotation], dets: list[DetectionBox],
                  recall_threshold: float = 0.8,
                  precision_threshold: float = 0.4) -> MatchReport:
    """Area-recall/area-precision matching with split/merge credit.

    For ground truth i and detection j let sigma = |i & j| / |i| (area
    recall) and tau = |i & j| / |j| (area precision).  A unique pair
    passing both thresholds is a one-to-one match worth 1.0 on each side;
    a ground truth covered by several detections (each with qualifying
    tau, jointly reaching sigma) or a detection covering several ground
    truths (symmetric condition) scores 0.8 per participant.
    """
    countable, difficult = _split_difficult(gts)

    live_dets = []
    for di, d in enumerate(dets):
        absorbed = False
        for g in difficult:
            try:
                inter = polygon_intersection_area(d.box.corners(), g.box.corners())
            except ValueError:
                continue
            if inter / _area(d.box) > DONT_CARE_OVERLAP:
                absorbed = True
                break
        if not absorbed:
            live_dets.append((di, d))

    n_gt, n_det = len(countable), len(live_dets)
    sigma = np.zeros((n_gt, n_det))
    tau = np.zeros((n_gt, n_det))
    for gi, g in enumerate(countable):
        for dj, (_, d) in enumerate(live_dets):
            inter = polygon_intersection_area(g.box.corners(), d.box.corners())
            sigma[gi, dj] = inter / _area(g.box)
            tau[gi, dj] = inter / _area(d.box)

    result = ImageEval(gt_count=n_gt, det_count=n_det)
    gt_done = np.zeros(n_gt, dtype=bool)
    det_done = np.zeros(n_det, dtype=bool)

    def det_index(dj: int) -> int:
        return live_dets[dj][0]

    # One-to-one: the qualifying entry is unique in both its row and column.
    for gi in range(n_gt):
        row_r = np.nonzero(sigma[gi] > recall_threshold)[0]
        row_p = np.nonzero(tau[gi] > precision_threshold)[0]
        if len(row_r) != 1 or len(row_p) != 1 or row_r[0] != row_p[0]:
            continue
        dj = int(row_r[0])
        col_r = np.nonzero(sigma[:, dj] > recall_threshold)[0]
        col_p = np.nonzero(tau[:, dj] > precision_threshold)[0]
        if len(col_r) == 1 and len(col_p) == 1 and col_r[0] == gi and col_p[0] == gi:
            gt_done[gi] = True
            det_done[dj] = True
            result.recall_score += 1.0
            result.precision_score += 1.0
            result.records.append(
                MatchRecord(gi, det_index(dj), "one_one", float(sigma[gi, dj])))

    # One-to-many: one ground truth fragmented across several detections.
    for gi in range(n_gt):
        if gt_done[gi]:
            continue
        group = np.nonzero((tau[gi] >= precision_threshold) & ~det_done)[0]
        if len(group) >= 2 and sigma[gi, group].sum() >= recall_threshold:
            gt_done[gi] = True
            det_done[group] = True
            result.recall_score += FRAGMENTATION_PENALTY
            result.precision_score += FRAGMENTATION_PENALTY * len(group)
            for dj in group:
                result.records.append(
                    MatchRecord(gi, det_index(int(dj)), "one_many",
                                float(sigma[gi, dj])))

    # Many-to-one: one detection covering several ground truths.
    for dj in range(n_det):
        if det_done[dj]:
            continue
        group = np.nonzero((sigma[:, dj] >= recall_threshold) & ~gt_done)[0]
        if len(group) >= 2 and tau[group, dj].sum() >= precision_threshold:
            det_done[dj] = True
            gt_done[group] = True
            result.recall_score += FRAGMENTATION_PENALTY * len(group)
            result.precision_score += FRAGMENTATION_PENALTY
            for gi in group:
                result.records.append(
                    MatchRecord(int(gi), det_index(dj), "many_one",
                                float(sigma[gi, dj])))

    return MatchReport(protocol=ICDAR13,
                       thresholds={"recall": recall_threshold,
                                   "precision": precision_threshold},
                       images=[result])


def evaluate_corpus(gt_images: list[list[TextAnnotation]],
                    det_images: list[list[DetectionBox]],
                    protocol: str = ONE_TO_ONE, **params) -> MatchReport:
    """Match every image and aggregate into one corpus report."""
    if len(gt_images) != len(det_images):
        raise ValueError("ground truth and detection image counts differ")
    if protocol == ONE_TO_ONE:
        reports = [match_one_to_one(g, d, **params)
                   for g, d in zip(gt_images, det_images)]
    elif protocol == ICDAR13:
        reports = [match_icdar13(g, d, **params)
                   for g, d in zip(gt_images, det_images)]
    else:
        raise ValueError(f"unknown protocol {protocol!r}")
    return combine_reports(reports)


def iou_sweep(gt_images: list[list[TextAnnotation]],
              det_images: list[list[DetectionBox]],
              thresholds, angle_threshold: float = math.pi / 8.0
              ) -> list[tuple[float, float]]:
    """Corpus f-score at each IoU threshold (non-increasing by design)."""
    out = []
    for threshold in thresholds:
        report = evaluate_corpus(gt_images, det_images, protocol=ONE_TO_ONE,
                                 iou_threshold=threshold,
                                 angle_threshold=angle_threshold)
        out.append((float(threshold), report.fscore))
    return out
