"""Localization metrics: point-response AP and IoU-matched detection AP.

Point metric: one response per (image, class); a response is correct when
its location falls inside any same-class ground-truth box of that image
(boundary inclusive). A wrong response counts one false positive, and every
ground-truth instance not covered by a correct response counts one false
negative. Detection metric: detections are ranked by score and greedily
matched to the unmatched same-class ground-truth box of highest IoU; a
match is a true positive only when IoU strictly exceeds the threshold, and
each ground-truth box is consumed at most once.

AP is the area under the precision-recall curve on the 0..100 scale, using
the monotone precision envelope over all ranked points; the legacy
11-point interpolation is available for comparison.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .tensors import PixelRect


@dataclass(frozen=True)
class Response:
    """Point prediction for one (image, class)."""

    image: str
    class_id: int
    x: int
    y: int
    confidence: float
    responded: bool = True


@dataclass(frozen=True)
class DetectionRecord:
    image: str
    class_id: int
    rect: PixelRect
    score: float


class GroundTruth:
    """Per-image lists of (class_id, rect) annotations."""

    def __init__(self, boxes_by_image: dict[str, list[tuple[int, PixelRect]]]):
        self.boxes_by_image = {img: list(boxes) for img, boxes in boxes_by_image.items()}

    @property
    def images(self) -> set[str]:
        return set(self.boxes_by_image)

    @property
    def class_ids(self) -> list[int]:
        seen = {c for boxes in self.boxes_by_image.values() for c, _ in boxes}
        return sorted(seen)

    def instances(self, class_id: int) -> list[tuple[str, PixelRect]]:
        return [
            (img, rect)
            for img, boxes in self.boxes_by_image.items()
            for c, rect in boxes
            if c == class_id
        ]


@dataclass
class PRCurve:
    """Ranked outcomes for one class, with the derived PR arrays and AP."""

    class_id: int
    confidences: np.ndarray
    is_tp: np.ndarray
    positives: int
    precision: np.ndarray
    recall: np.ndarray
    ap: float

    def to_csv(self, path) -> None:
        lines = ["rank,confidence,precision,recall"]
        for i in range(self.confidences.size):
            lines.append(
                f"{i + 1},{float(self.confidences[i])!r},"
                f"{float(self.precision[i])!r},{float(self.recall[i])!r}"
            )
        Path(path).write_text("\n".join(lines) + "\n")


def iou(a: PixelRect, b: PixelRect) -> float:
    """Intersection area over union area, in [0, 1]."""
    ix = max(a.x, b.x)
    iy = max(a.y, b.y)
    ix2 = min(a.x + a.w, b.x + b.w)
    iy2 = min(a.y + a.h, b.y + b.h)
    if ix2 <= ix or iy2 <= iy:
        return 0.0
    inter = (ix2 - ix) * (iy2 - iy)
    return inter / (a.area + b.area - inter)


def point_inside(x: int, y: int, rect: PixelRect) -> bool:
    """Boundary-inclusive containment on the closed rectangle."""
    return rect.x <= x <= rect.x + rect.w and rect.y <= y <= rect.y + rect.h


def _average_precision(confidences, tp_flags, positives: int, method: str) -> PRCurve:
    order = sorted(range(len(confidences)), key=lambda i: -confidences[i])
    conf = np.array([confidences[i] for i in order], dtype=np.float64)
    tps = np.array([tp_flags[i] for i in order], dtype=bool)

    cum_tp = np.cumsum(tps)
    ranks = np.arange(1, tps.size + 1)
    precision = cum_tp / ranks if tps.size else np.zeros(0)
    recall = cum_tp / positives if positives > 0 else np.zeros(tps.size)

    if positives == 0 or tps.size == 0:
        ap = 0.0
    elif method == "all_points":
        mrec = np.concatenate(([0.0], recall, [1.0]))
        mpre = np.concatenate(([0.0], precision, [0.0]))
        for i in range(mpre.size - 2, -1, -1):
            mpre[i] = max(mpre[i], mpre[i + 1])
        steps = np.flatnonzero(mrec[1:] != mrec[:-1])
        ap = float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]) * 100.0)
    elif method == "eleven_points":
        levels = np.linspace(0.0, 1.0, 11)
        vals = [precision[recall >= r].max() if np.any(recall >= r) else 0.0 for r in levels]
        ap = float(np.mean(vals) * 100.0)
    else:
        raise ValueError(f"unknown AP method {method!r}")

    return PRCurve(
        class_id=-1,
        confidences=conf,
        is_tp=tps,
        positives=positives,
        precision=precision,
        recall=recall,
        ap=ap,
    )


def point_metric(
    responses: list[Response],
    gt: GroundTruth,
    *,
    method: str = "all_points",
) -> tuple[dict[int, PRCurve], float]:
    """Per-class PR curves and mAP for point responses."""
    unknown = {r.image for r in responses if r.responded} - gt.images
    if unknown:
        raise ValueError(f"responses reference images missing from ground truth: {sorted(unknown)}")
    seen = set()
    for r in responses:
        key = (r.image, r.class_id)
        if key in seen:
            raise ValueError(f"duplicate response for image {r.image!r} class {r.class_id}")
        seen.add(key)

    class_ids = sorted(set(gt.class_ids) | {r.class_id for r in responses})
    curves: dict[int, PRCurve] = {}
    for class_id in class_ids:
        instances = gt.instances(class_id)
        confidences, tps = [], []
        for r in responses:
            if r.class_id != class_id or not r.responded:
                continue
            boxes = [rect for c, rect in gt.boxes_by_image.get(r.image, []) if c == class_id]
            hit = any(point_inside(r.x, r.y, rect) for rect in boxes)
            confidences.append(r.confidence)
            tps.append(hit)
        curve = _average_precision(confidences, tps, len(instances), method)
        curve.class_id = class_id
        curves[class_id] = curve

    scored = [c.ap for c in curves.values() if c.positives > 0]
    mean_ap = float(np.mean(scored)) if scored else 0.0
    return curves, mean_ap


def detection_metric(
    detections: list[DetectionRecord],
    gt: GroundTruth,
    *,
    iou_threshold: float = 0.5,
    method: str = "all_points",
) -> tuple[dict[int, PRCurve], float]:
    """Per-class PR curves and mAP for detection boxes."""
    class_ids = sorted(set(gt.class_ids) | {d.class_id for d in detections})
    curves: dict[int, PRCurve] = {}
    for class_id in class_ids:
        dets = [d for d in detections if d.class_id == class_id]
        dets.sort(key=lambda d: -d.score)

        gt_boxes: dict[str, list[PixelRect]] = defaultdict(list)
        for img, rect in gt.instances(class_id):
            gt_boxes[img].append(rect)
        matched: dict[str, list[bool]] = {
            img: [False] * len(boxes) for img, boxes in gt_boxes.items()
        }

        confidences, tps = [], []
        for det in dets:
            candidates = gt_boxes.get(det.image, [])
            best_iou, best_idx = 0.0, -1
            for idx, rect in enumerate(candidates):
                if matched[det.image][idx]:
                    continue
                value = iou(det.rect, rect)
                if value > best_iou:
                    best_iou, best_idx = value, idx
            is_tp = best_iou > iou_threshold
            if is_tp:
                matched[det.image][best_idx] = True
            confidences.append(det.score)
            tps.append(is_tp)

        positives = sum(len(b) for b in gt_boxes.values())
        curve = _average_precision(confidences, tps, positives, method)
        curve.class_id = class_id
        curves[class_id] = curve

    scored = [c.ap for c in curves.values() if c.positives > 0]
    mean_ap = float(np.mean(scored)) if scored else 0.0
    return curves, mean_ap


# ---------------------------------------------------------------------------
# JSON-lines interchange


def save_ground_truth(gt: GroundTruth, path) -> None:
    lines = []
    for image in sorted(gt.boxes_by_image):
        for class_id, rect in gt.boxes_by_image[image]:
            lines.append(
                json.dumps(
                    {"image": image, "class": class_id, "x": rect.x, "y": rect.y,
                     "w": rect.w, "h": rect.h},
                    sort_keys=True,
                )
            )
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def load_ground_truth(path) -> GroundTruth:
    boxes: dict[str, list[tuple[int, PixelRect]]] = defaultdict(list)
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        boxes[rec["image"]].append(
            (int(rec["class"]), PixelRect(rec["x"], rec["y"], rec["w"], rec["h"]))
        )
    return GroundTruth(dict(boxes))


def save_detections(detections: list[DetectionRecord], path) -> None:
    lines = [
        json.dumps(
            {"image": d.image, "class": d.class_id, "x": d.rect.x, "y": d.rect.y,
             "w": d.rect.w, "h": d.rect.h, "score": d.score},
            sort_keys=True,
        )
        for d in detections
    ]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def load_detections(path) -> list[DetectionRecord]:
    out = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        out.append(
            DetectionRecord(
                rec["image"],
                int(rec["class"]),
                PixelRect(rec["x"], rec["y"], rec["w"], rec["h"]),
                float(rec["score"]),
            )
        )
    return out


def save_responses(responses: list[Response], path) -> None:
    lines = []
    for r in responses:
        rec = {"image": r.image, "class": r.class_id, "x": r.x, "y": r.y,
               "confidence": r.confidence}
        if not r.responded:
            rec["no_response"] = True
        lines.append(json.dumps(rec, sort_keys=True))
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def load_responses(path) -> list[Response]:
    out = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        out.append(
            Response(
                rec["image"],
                int(rec["class"]),
                int(rec["x"]),
                int(rec["y"]),
                float(rec["confidence"]),
                responded=not rec.get("no_response", False),
            )
        )
    return out
