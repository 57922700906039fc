"""Shape-aware cross-modality label matching.

Each reference (IR) ground-truth box defines a search region: the same
box scaled by beta about its own center and rotation. Unclaimed
candidates whose centers fall inside the region compete by IoU; the
highest-IoU candidate is paired and removed from the pool. Pairs require
strictly positive IoU.
"""
from __future__ import annotations

from dataclasses import dataclass

from .filtering import ScoredBox
from .geometry import OrientedBox, iou, point_in_obb


@dataclass(frozen=True)
class SearchRegion:
    region: OrientedBox
    source_id: int


@dataclass(frozen=True)
class MatchResult:
    pairs: tuple[tuple[int, int, float], ...]  # (ir_id, rgb_id, iou)
    unmatched_ir: tuple[int, ...]
    unmatched_rgb: tuple[int, ...]

    @property
    def paired_rgb_ids(self) -> set[int]:
        return {rgb_id for _, rgb_id, _ in self.pairs}

    @property
    def pair_for(self) -> dict[int, tuple[int, float]]:
        return {ir_id: (rgb_id, v) for ir_id, rgb_id, v in self.pairs}


def search_region(ir: OrientedBox, beta: float, source_id: int = -1) -> SearchRegion:
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    region = OrientedBox(ir.cx, ir.cy, beta * ir.w, beta * ir.h, ir.theta)
    return SearchRegion(region, source_id)


def candidates_for(ir: OrientedBox, rgb_pool, paired, beta: float):
    """Unclaimed candidates whose centers lie in the search region (boundary
    inclusive); input order preserved."""
    region = search_region(ir, beta).region
    return [
        c for c in rgb_pool
        if c.source_id not in paired and point_in_obb(c.center, region)
    ]


def match_scene(ir_boxes, rgb_pool, beta: float = 1.0,
                use_search_region: bool = True) -> MatchResult:
    """Greedily pair reference boxes (ascending id) with argmax-IoU candidates.

    With use_search_region=False the center-containment gate is dropped and
    any unclaimed overlapping candidate competes (plain IoU matching).
    """
    ir_ids = [i for i, _ in ir_boxes]
    rgb_ids = [c.source_id for c in rgb_pool]
    if len(set(ir_ids)) != len(ir_ids):
        raise ValueError("duplicate reference ids")
    if len(set(rgb_ids)) != len(rgb_ids):
        raise ValueError("duplicate candidate ids")

    paired: set[int] = set()
    pairs = []
    unmatched_ir = []
    for ir_id, ir_box in sorted(ir_boxes, key=lambda t: t[0]):
        if use_search_region:
            cands = candidates_for(ir_box, rgb_pool, paired, beta)
        else:
            cands = [c for c in rgb_pool if c.source_id not in paired]
        best_id, best_iou = None, 0.0
        for c in cands:
            v = iou(ir_box, c.box)
            if v > best_iou or (v == best_iou and v > 0.0
                                and best_id is not None and c.source_id < best_id):
                best_id, best_iou = c.source_id, v
        if best_id is None:
            unmatched_ir.append(ir_id)
        else:
            paired.add(best_id)
            pairs.append((ir_id, best_id, best_iou))
    unmatched_rgb = [i for i in rgb_ids if i not in paired]
    return MatchResult(tuple(pairs), tuple(unmatched_ir), tuple(unmatched_rgb))
