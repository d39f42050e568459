"""Rectangular subdivision trees for adaptive data selection.

A tree recursively halves the longer side of its root rectangle (ties
split the width). Structure is stored as a depth-first preorder bit
sequence (1 = split, 0 = leaf); the split geometry is deterministic, so
root dimensions plus bits reconstruct the tree exactly. Leaves are
always enumerated in preorder, which fixes the order of leaf payloads
in every serialized payload.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from hivc.bits import BitReader, BitWriter


class SubdivisionError(ValueError):
    pass


def split_children(x: int, y: int, w: int, h: int):
    """Children of a rectangle: halve the longer side, ties halve width."""
    if w < 1 or h < 1:
        raise SubdivisionError(f"degenerate rectangle {w}x{h}")
    if w == 1 and h == 1:
        raise SubdivisionError("cannot split a single pixel")
    if h > w:
        h1 = (h + 1) // 2
        return (x, y, w, h1), (x, y + h1, w, h - h1)
    w1 = (w + 1) // 2
    return (x, y, w1, h), (x + w1, y, w - w1, h)


@dataclass(frozen=True)
class SubdivisionTree:
    x: int
    y: int
    w: int
    h: int
    bits: tuple

    def __post_init__(self):
        object.__setattr__(self, "bits", tuple(int(b) & 1 for b in self.bits))

    @property
    def root(self):
        return (self.x, self.y, self.w, self.h)

    def leaves(self):
        """Leaf rectangles (x, y, w, h) in preorder."""
        out = []
        stack = [self.root]
        for bit in self.bits:
            if not stack:
                raise SubdivisionError("excess bits after tree completed")
            rect = stack.pop()
            if bit:
                first, second = split_children(*rect)
                stack.append(second)
                stack.append(first)
            else:
                out.append(rect)
        if stack:
            raise SubdivisionError("truncated tree bits")
        return out

    @property
    def leaf_count(self):
        return sum(1 for b in self.bits if b == 0)


def subdivide_by_error(
    plane: np.ndarray, target_points: int, error_fn=None, min_error=None
) -> SubdivisionTree:
    """Greedy split of the worst-error leaf until `target_points` leaves exist.

    `error_fn(plane, x, y, w, h)` defaults to the sum of squared
    deviations from the region mean. Ties break deterministically by
    (y, x, creation order). Single-pixel leaves sink to the bottom of
    the queue since they cannot be split. With `min_error` set, splitting
    stops early once the worst leaf error drops to that value or below,
    so exactly representable planes yield small trees.
    """
    h_img, w_img = plane.shape
    if target_points < 1:
        raise SubdivisionError("target_points must be >= 1")
    if target_points > w_img * h_img:
        raise SubdivisionError("target_points exceeds pixel count")
    if error_fn is None:
        error_fn = region_ssd

    def priority(rect, seq):
        x, y, w, h = rect
        err = -1.0 if (w == 1 and h == 1) else float(error_fn(plane, x, y, w, h))
        return (-err, y, x, seq)

    # nodes: rect -> (first_rect, second_rect) for internal nodes
    children = {}
    root = (0, 0, w_img, h_img)
    seq = 0
    heap = [(*priority(root, seq), root)]
    n_leaves = 1
    while n_leaves < target_points:
        neg_err, *_, rect = heapq.heappop(heap)
        if min_error is not None and -neg_err <= min_error:
            break
        first, second = split_children(*rect)
        children[rect] = (first, second)
        seq += 1
        heapq.heappush(heap, (*priority(first, seq), first))
        seq += 1
        heapq.heappush(heap, (*priority(second, seq), second))
        n_leaves += 1

    bits = []
    stack = [root]
    while stack:
        rect = stack.pop()
        kids = children.get(rect)
        if kids is None:
            bits.append(0)
        else:
            bits.append(1)
            stack.append(kids[1])
            stack.append(kids[0])
    return SubdivisionTree(0, 0, w_img, h_img, tuple(bits))


def region_ssd(plane: np.ndarray, x: int, y: int, w: int, h: int) -> float:
    region = plane[y : y + h, x : x + w]
    return float(np.sum((region - region.mean()) ** 2))


def joint_ssd_error(planes):
    """Error function summing region SSD over several planes (chroma rule)."""

    def fn(_plane, x, y, w, h):
        return sum(region_ssd(p, x, y, w, h) for p in planes)

    return fn


def mask_from_tree(tree: SubdivisionTree) -> np.ndarray:
    """Boolean mask with one point at the floor midpoint of each leaf."""
    mask = np.zeros((tree.h, tree.w), dtype=bool)
    for x, y, w, h in tree.leaves():
        mask[y + h // 2, x + w // 2] = True
    return mask


def leaf_means(tree: SubdivisionTree, plane: np.ndarray) -> np.ndarray:
    """Mean of `plane` over each leaf, preorder."""
    return np.array(
        [plane[y : y + h, x : x + w].mean() for x, y, w, h in tree.leaves()], dtype=np.float64
    )


def paint_leaf_values(tree: SubdivisionTree, values) -> np.ndarray:
    """Plane that is constant on each leaf, from preorder leaf values."""
    out = np.empty((tree.h, tree.w), dtype=np.float64)
    rects = tree.leaves()
    if len(values) != len(rects):
        raise SubdivisionError("leaf value count mismatch")
    for (x, y, w, h), v in zip(rects, values):
        out[y : y + h, x : x + w] = v
    return out


def piecewise_constant_from_tree(tree: SubdivisionTree, plane: np.ndarray) -> np.ndarray:
    """Region-average approximation of `plane` on the tree's leaves."""
    return paint_leaf_values(tree, leaf_means(tree, plane))


def serialize_tree(tree: SubdivisionTree, writer: BitWriter):
    for b in tree.bits:
        writer.write_bit(b)


def deserialize_tree(reader: BitReader, x: int, y: int, w: int, h: int) -> SubdivisionTree:
    """Parse preorder bits; validates that every split is geometrically legal."""
    bits = []
    stack = [(x, y, w, h)]
    while stack:
        rect = stack.pop()
        bit = reader.read_bit()
        bits.append(bit)
        if bit:
            first, second = split_children(*rect)
            stack.append(second)
            stack.append(first)
    return SubdivisionTree(x, y, w, h, tuple(bits))


def parse_mask(reader: BitReader, width: int, height: int) -> np.ndarray:
    """Leaf mask of a serialized tree, parsed without building tree nodes.

    Equivalent to mask_from_tree(deserialize_tree(...)) minus the
    validation; decode hot path.
    """
    mask = np.zeros((height, width), dtype=bool)
    read_bit = reader.read_bit
    stack = [(0, 0, width, height)]
    while stack:
        x, y, w, h = stack.pop()
        if read_bit():
            if w == 1 and h == 1:
                raise SubdivisionError("split of a single pixel")
            if h > w:
                half = (h + 1) // 2
                stack.append((x, y + half, w, h - half))
                stack.append((x, y, w, half))
            else:
                half = (w + 1) // 2
                stack.append((x + half, y, w - half, h))
                stack.append((x, y, half, h))
        else:
            mask[y + h // 2, x + w // 2] = True
    return mask
