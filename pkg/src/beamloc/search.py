"""Localization search over feature-map sub-grid candidates.

The search tree starts at the full image. A node's children shrink its
local grid box by one cell in width or height (never both); each child is
scored by rebuilding a full-size map from the parent's activations and
asking the head for the target class's score. Beam search keeps the top M
candidates per level, re-extracts features for each survivor's pixel crop,
and descends for a fixed number of levels. Features are extracted only for
survivors, so provider traffic is bounded by 1 + M * depth per image.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DimensionError
from .scoring import ScoringHead, rescore
from .tensors import (
    FeatureMap,
    GridBox,
    PixelRect,
    backproject,
    compose_rect,
    truncate_and_resize,
)
from .validation import check_nonnegative


@dataclass(frozen=True)
class SearchNode:
    """One localization candidate in the search tree."""

    grid_box: GridBox        # box in the parent frame's lattice
    abs_rect: PixelRect      # absolute pixel rectangle in the source image
    level: int
    score: float
    parent: Optional["SearchNode"] = field(default=None, repr=False, compare=False)

    def sort_key(self) -> tuple:
        return (-self.score, self.abs_rect.as_tuple())


@dataclass(frozen=True)
class BeamConfig:
    """Knobs for one localization run."""

    target_class: int
    beam_width: int = 8
    beam_depth: int = 10
    use_rescoring: bool = True
    alpha: float = 0.5
    cooccurrence: object = None

    def __post_init__(self):
        if self.beam_width < 1:
            raise ValueError(f"beam_width must be >= 1, got {self.beam_width}")
        if self.beam_depth < 0:
            raise ValueError(f"beam_depth must be >= 0, got {self.beam_depth}")
        check_nonnegative(self.alpha, "alpha")


def children(box: GridBox) -> list[GridBox]:
    """Boxes one cell narrower or one cell shorter than ``box``, inside it.

    Exactly one of width/height shrinks by 1, which gives two horizontal
    placements for the narrower shape and two vertical placements for the
    shorter one. Ordered largest area first, then by (w, h, x, y).
    """
    out = []
    if box.w >= 2:
        out.append(GridBox(box.x, box.y, box.w - 1, box.h))
        out.append(GridBox(box.x + 1, box.y, box.w - 1, box.h))
    if box.h >= 2:
        out.append(GridBox(box.x, box.y, box.w, box.h - 1))
        out.append(GridBox(box.x, box.y + 1, box.w, box.h - 1))
    out.sort(key=lambda b: (-b.w * b.h, b.w, b.h, b.x, b.y))
    return out


def _make_ranker(head: ScoringHead, cfg: BeamConfig) -> Callable[[FeatureMap], float]:
    """Turn head scores into the scalar used to rank candidates."""
    if cfg.cooccurrence is not None:
        matrix = np.asarray(cfg.cooccurrence, dtype=np.float64)
        if matrix.shape != (head.class_count, head.class_count):
            raise DimensionError(
                f"cooccurrence {matrix.shape} does not match {head.class_count} classes"
            )
    else:
        matrix = None

    target = cfg.target_class
    if not 0 <= target < head.class_count:
        raise ValueError(f"target_class {target} out of range for {head.class_count} classes")

    def rank(fmap: FeatureMap) -> float:
        scores = head.score(fmap)
        if cfg.use_rescoring and matrix is not None:
            scores = rescore(scores, matrix, cfg.alpha)
        return float(scores[target])

    return rank


def _full_grid(grid_size: int) -> GridBox:
    return GridBox(0, 0, grid_size, grid_size)


def beam_localize(
    provider,
    head: ScoringHead,
    image_ref,
    image_w: int,
    image_h: int,
    cfg: BeamConfig,
) -> list[list[SearchNode]]:
    """Run the level-synchronous beam search; returns survivors per level.

    Level 0 holds the root (full image). At each level every survivor's
    local full grid is shrunk via ``children``; children are scored on the
    parent's map, pooled across survivors, deduplicated by absolute rect
    (keeping the higher score), ranked by (score desc, rect asc), and cut
    to the beam width. Survivors then get their own feature map extracted
    for the next level.
    """
    L = provider.grid_size
    root_rect = PixelRect(0, 0, image_w, image_h)
    rank = _make_ranker(head, cfg)

    root_map = provider.extract(image_ref, root_rect)
    root = SearchNode(_full_grid(L), root_rect, 0, rank(root_map))
    levels = [[root]]
    frontier = [(root, root_map)]

    for level in range(1, cfg.beam_depth + 1):
        pooled: dict[tuple, SearchNode] = {}
        for parent, parent_map in frontier:
            for child_box in children(_full_grid(L)):
                local = backproject(child_box, L, parent.abs_rect.w, parent.abs_rect.h)
                abs_rect = compose_rect(parent.abs_rect, local)
                score = rank(truncate_and_resize(parent_map, child_box))
                node = SearchNode(child_box, abs_rect, level, score, parent)
                key = abs_rect.as_tuple()
                kept = pooled.get(key)
                if kept is None or score > kept.score:
                    pooled[key] = node
        if not pooled:
            break
        survivors = sorted(pooled.values(), key=SearchNode.sort_key)[: cfg.beam_width]
        levels.append(survivors)
        if level < cfg.beam_depth:
            frontier = [
                (node, provider.extract(image_ref, node.abs_rect)) for node in survivors
            ]
    return levels


def greedy_localize(
    provider,
    head: ScoringHead,
    image_ref,
    image_w: int,
    image_h: int,
    cfg: BeamConfig,
) -> list[SearchNode]:
    """Single-path variant: the beam with width 1, returned as a root-to-leaf path."""
    narrow = BeamConfig(
        target_class=cfg.target_class,
        beam_width=1,
        beam_depth=cfg.beam_depth,
        use_rescoring=cfg.use_rescoring,
        alpha=cfg.alpha,
        cooccurrence=cfg.cooccurrence,
    )
    levels = beam_localize(provider, head, image_ref, image_w, image_h, narrow)
    return [level[0] for level in levels]


def exhaustive_oracle(
    provider,
    head: ScoringHead,
    image_ref,
    image_w: int,
    image_h: int,
    target_class: int,
    depth: int,
    *,
    use_rescoring: bool = False,
    alpha: float = 0.5,
    cooccurrence=None,
) -> SearchNode:
    """Expand the whole tree to ``depth`` and return the best node.

    Same scoring, re-extraction, and tie-break rules as the beam, but with
    no pruning and no pooling; cost grows as 4^depth, so this is a testing
    baseline for small instances only.
    """
    cfg = BeamConfig(
        target_class=target_class,
        beam_depth=max(depth, 0),
        use_rescoring=use_rescoring,
        alpha=alpha,
        cooccurrence=cooccurrence,
    )
    L = provider.grid_size
    rank = _make_ranker(head, cfg)

    root_rect = PixelRect(0, 0, image_w, image_h)
    root_map = provider.extract(image_ref, root_rect)
    root = SearchNode(_full_grid(L), root_rect, 0, rank(root_map))

    best = root

    def visit(node: SearchNode, node_map: FeatureMap) -> None:
        nonlocal best
        if node.sort_key() < best.sort_key():
            best = node
        if node.level >= depth:
            return
        for child_box in children(_full_grid(L)):
            local = backproject(child_box, L, node.abs_rect.w, node.abs_rect.h)
            abs_rect = compose_rect(node.abs_rect, local)
            score = rank(truncate_and_resize(node_map, child_box))
            child = SearchNode(child_box, abs_rect, node.level + 1, score, node)
            if child.level >= depth:
                if child.sort_key() < best.sort_key():
                    best = child
            else:
                visit(child, provider.extract(image_ref, child.abs_rect))

    visit(root, root_map)
    return best


def best_node(levels: list[list[SearchNode]]) -> SearchNode:
    """Best node across all levels under the beam's tie-break."""
    flat = [node for level in levels for node in level]
    return min(flat, key=SearchNode.sort_key)


def flatten_survivors(levels: list[list[SearchNode]]) -> list[SearchNode]:
    return [node for level in levels for node in level]
