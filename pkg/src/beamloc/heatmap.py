"""Heat maps pooled from search survivors, and detections extracted from them.

Every survivor paints its pixel rectangle with its score; the per-class sum
is the heat map. The maximal-response pixel gives the point prediction, and
thresholding plus connected components gives detection boxes scored by the
mean heat inside them.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .search import SearchNode
from .tensors import PixelRect
from .validation import check_nonnegative, check_positive_int

HEAT_MAGIC = b"HMAP"
HEAT_VERSION = 1
_HEAT_HEADER = struct.Struct("<4sIII")


@dataclass(frozen=True)
class PointResponse:
    """Location and value of the maximal heat response."""

    x: int
    y: int
    confidence: float
    responded: bool = True


@dataclass(frozen=True)
class Detection:
    class_id: int
    rect: PixelRect
    score: float


class HeatMap:
    """Non-negative per-pixel accumulation of candidate scores for one class."""

    __slots__ = ("values", "width", "height", "class_id")

    def __init__(self, values: np.ndarray, class_id: int):
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"heat map must be 2-d, got shape {arr.shape}")
        if np.any(arr < 0) or not np.all(np.isfinite(arr)):
            raise ValueError("heat values must be finite and >= 0")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        self.values = arr
        self.height, self.width = arr.shape
        self.class_id = class_id


def accumulate(
    survivors: Iterable[SearchNode],
    image_w: int,
    image_h: int,
    class_id: int,
    *,
    include_root: bool = True,
) -> HeatMap:
    """Sum survivor scores into a heat map; every level contributes.

    ``include_root`` drops level-0 nodes (the uninformative full-image box)
    for ablation runs when set to False.
    """
    check_positive_int(image_w, "image_w")
    check_positive_int(image_h, "image_h")
    heat = np.zeros((image_h, image_w), dtype=np.float64)
    for node in survivors:
        if not include_root and node.level == 0:
            continue
        r = node.abs_rect
        if r.x < 0 or r.y < 0 or r.x + r.w > image_w or r.y + r.h > image_h:
            raise ValueError(f"survivor rect {r.as_tuple()} outside {image_w}x{image_h}")
        heat[r.y : r.y + r.h, r.x : r.x + r.w] += node.score
    return HeatMap(heat, class_id)


def point_response(heat: HeatMap) -> PointResponse:
    """Center of the maximal-response region, with the peak value as confidence.

    The peak of a pooled heat map is a plateau (the intersection of the
    top candidates' rectangles), so the response is the center of the
    plateau's 4-connected component, not its first pixel; when several
    disjoint regions tie, the one holding the smallest (row, col) pixel
    wins. An all-zero map yields a flagged non-response at (0, 0).
    """
    flat_idx = int(np.argmax(heat.values))
    top_y, top_x = divmod(flat_idx, heat.width)
    value = float(heat.values[top_y, top_x])
    if value == 0.0:
        return PointResponse(0, 0, 0.0, responded=False)

    mask = heat.values == value
    seen = np.zeros_like(mask)
    stack = [(top_y, top_x)]
    seen[top_y, top_x] = True
    x0 = x1 = top_x
    y0 = y1 = top_y
    while stack:
        cy, cx = stack.pop()
        x0, x1 = min(x0, cx), max(x1, cx)
        y0, y1 = min(y0, cy), max(y1, cy)
        for ny, nx in ((cy - 1, cx), (cy + 1, cx), (cy, cx - 1), (cy, cx + 1)):
            if 0 <= ny < heat.height and 0 <= nx < heat.width and mask[ny, nx] and not seen[ny, nx]:
                seen[ny, nx] = True
                stack.append((ny, nx))
    return PointResponse((x0 + x1) // 2, (y0 + y1) // 2, value)


def _connected_component_boxes(mask: np.ndarray) -> list[tuple[int, int, int, int]]:
    """Tight bounding boxes of 4-connected components, via row-run union-find."""
    height, width = mask.shape
    parent: list[int] = []

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(a: int, b: int) -> None:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    runs: list[tuple[int, int, int, int]] = []  # (row, start, end, label)
    prev_runs: list[tuple[int, int, int, int]] = []
    for row in range(height):
        cols = np.flatnonzero(mask[row])
        row_runs = []
        if cols.size:
            breaks = np.flatnonzero(np.diff(cols) > 1)
            starts = np.concatenate(([0], breaks + 1))
            ends = np.concatenate((breaks, [cols.size - 1]))
            for s, e in zip(starts, ends):
                label = len(parent)
                parent.append(label)
                run = (row, int(cols[s]), int(cols[e]), label)
                for _, pstart, pend, plabel in prev_runs:
                    if pstart <= run[2] and run[1] <= pend:
                        union(plabel, run[3])
                row_runs.append(run)
                runs.append(run)
        prev_runs = row_runs

    boxes: dict[int, list[int]] = {}
    for row, start, end, label in runs:
        root = find(label)
        box = boxes.get(root)
        if box is None:
            boxes[root] = [start, row, end, row]
        else:
            box[0] = min(box[0], start)
            box[1] = min(box[1], row)
            box[2] = max(box[2], end)
            box[3] = max(box[3], row)
    ordered = [boxes[root] for root in sorted(boxes)]
    return [(x0, y0, x1 - x0 + 1, y1 - y0 + 1) for x0, y0, x1, y1 in ordered]


def extract_detections(heat: HeatMap, theta: float) -> list[Detection]:
    """Detections from thresholding the heat map at ``theta``.

    Pixels with heat >= theta form the active mask (zero-heat pixels are
    always background, so theta = 0 selects the support of the map). Each
    4-connected blob yields one detection: its tight bounding rectangle,
    scored by the mean heat over the rectangle. Sorted by score descending.
    """
    check_nonnegative(theta, "theta")
    mask = (heat.values >= theta) & (heat.values > 0)
    detections = []
    for x, y, w, h in _connected_component_boxes(mask):
        score = float(heat.values[y : y + h, x : x + w].mean())
        detections.append(Detection(heat.class_id, PixelRect(x, y, w, h), score))
    detections.sort(key=lambda d: (-d.score, d.rect.as_tuple()))
    return detections


def sweep_thresholds(heat: HeatMap, thetas: Sequence[float]) -> dict[float, list[Detection]]:
    """Detections at each threshold of a grid, for threshold calibration."""
    return {float(theta): extract_detections(heat, theta) for theta in thetas}


def write_pgm(heat: HeatMap, path) -> None:
    """8-bit max-normalized P5 image for eyeballing a heat map."""
    peak = float(heat.values.max())
    if peak > 0:
        gray = np.floor(heat.values / peak * 255.0 + 0.5).astype(np.uint8)
    else:
        gray = np.zeros_like(heat.values, dtype=np.uint8)
    header = f"P5\n{heat.width} {heat.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + gray.tobytes(order="C"))


def write_heat_raw(heat: HeatMap, path) -> None:
    """Raw float32 dump: HMAP header (magic, version, W, H) then row-major values."""
    header = _HEAT_HEADER.pack(HEAT_MAGIC, HEAT_VERSION, heat.width, heat.height)
    Path(path).write_bytes(header + heat.values.astype("<f4").tobytes(order="C"))


def read_heat_raw(path, class_id: int = 0) -> HeatMap:
    blob = Path(path).read_bytes()
    magic, version, width, height = _HEAT_HEADER.unpack_from(blob)
    if magic != HEAT_MAGIC or version != HEAT_VERSION:
        raise ValueError(f"bad heat file header {magic!r} v{version}")
    values = np.frombuffer(blob, dtype="<f4", offset=_HEAT_HEADER.size)
    if values.size != width * height:
        raise ValueError("heat payload size mismatch")
    return HeatMap(values.astype(np.float64).reshape(height, width), class_id)
