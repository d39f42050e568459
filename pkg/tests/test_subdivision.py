import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hivc.bits import BitReader, BitWriter
from hivc.subdivision import (
    SubdivisionError,
    deserialize_tree,
    mask_from_tree,
    parse_mask,
    piecewise_constant_from_tree,
    serialize_tree,
    split_children,
    subdivide_by_error,
)


def _leaf_areas(tree):
    return [w * h for (_, _, w, h) in tree.leaves()]


def test_split_halves_longer_side_ties_go_to_width():
    # Tall rectangle splits vertically, wide splits horizontally,
    # square ties split along width.
    (a, b) = split_children(0, 0, 4, 8)
    assert a == (0, 0, 4, 4) and b == (0, 4, 4, 4)
    (a, b) = split_children(0, 0, 8, 4)
    assert a == (0, 0, 4, 4) and b == (4, 0, 4, 4)
    (a, b) = split_children(0, 0, 6, 6)
    assert a[2] == 3 and b[2] == 3


def test_split_ceiling_halving_for_odd_sides():
    (a, b) = split_children(0, 0, 5, 2)
    assert a == (0, 0, 3, 2) and b == (3, 0, 2, 2)


def test_constant_plane_single_leaf():
    tree = subdivide_by_error(np.full((8, 8), 3.0), 1)
    assert len(tree.leaves()) == 1


def test_constant_plane_deterministic_ties():
    plane = np.full((16, 16), 9.0)
    a = subdivide_by_error(plane, 4)
    b = subdivide_by_error(plane, 4)
    assert len(a.leaves()) == 4
    assert a.leaves() == b.leaves()


def test_step_edge_first_split_isolates_halves():
    plane = np.zeros((16, 16))
    plane[:, 8:] = 255.0
    tree = subdivide_by_error(plane, 2)
    leaves = sorted(tree.leaves())
    assert leaves == [(0, 0, 8, 16), (8, 0, 8, 16)]
    rec = piecewise_constant_from_tree(tree, plane)
    assert np.array_equal(rec, plane)


def test_target_exceeding_pixels_rejected():
    with pytest.raises(SubdivisionError):
        subdivide_by_error(np.zeros((2, 2)), 5)


def test_mask_point_is_floor_midpoint():
    tree = subdivide_by_error(np.zeros((8, 8)), 1)
    mask = mask_from_tree(tree)
    ys, xs = np.nonzero(mask)
    assert (ys.tolist(), xs.tolist()) == ([4], [4])


def test_mask_popcount_matches_leaf_count():
    rng = np.random.default_rng(0)
    plane = rng.uniform(0, 255, (23, 17))
    for k in (1, 5, 12, 40):
        tree = subdivide_by_error(plane, k)
        assert int(mask_from_tree(tree).sum()) == k


def test_leaves_tile_root():
    rng = np.random.default_rng(1)
    plane = rng.uniform(0, 255, (19, 31))
    tree = subdivide_by_error(plane, 25)
    cover = np.zeros((19, 31), dtype=np.int32)
    for (x, y, w, h) in tree.leaves():
        cover[y : y + h, x : x + w] += 1
    assert np.array_equal(cover, np.ones_like(cover))


def test_piecewise_constant_uses_region_means():
    rng = np.random.default_rng(2)
    plane = rng.uniform(0, 255, (12, 12))
    tree = subdivide_by_error(plane, 1)
    rec = piecewise_constant_from_tree(tree, plane)
    assert np.allclose(rec, plane.mean())


def test_budget_monotonicity_of_approximation_error():
    rng = np.random.default_rng(3)
    plane = rng.uniform(0, 255, (32, 32))
    errs = []
    for k in (1, 4, 16, 64):
        rec = piecewise_constant_from_tree(subdivide_by_error(plane, k), plane)
        errs.append(float(((rec - plane) ** 2).sum()))
    assert errs == sorted(errs, reverse=True)


def test_serialize_known_bit_patterns():
    plane = np.zeros((8, 8))
    w = BitWriter()
    serialize_tree(subdivide_by_error(plane, 1), w)
    assert w.getvalue() == bytes([0])
    plane[:, 4:] = 255.0
    w = BitWriter()
    serialize_tree(subdivide_by_error(plane, 2), w)
    # Preorder: split root, then two leaves -> bits 1,0,0.
    assert w.getvalue()[0] >> 5 == 0b100


def _random_tree(rng, w, h, splits):
    plane = rng.uniform(0, 255, (h, w))
    target = min(splits, w * h)
    return subdivide_by_error(plane, target)


def test_serialize_round_trip_random_trees():
    rng = np.random.default_rng(4)
    for _ in range(60):
        w = int(rng.integers(1, 40))
        h = int(rng.integers(1, 40))
        tree = _random_tree(rng, w, h, int(rng.integers(1, 50)))
        wr = BitWriter()
        serialize_tree(tree, wr)
        rd = BitReader(wr.getvalue())
        back = deserialize_tree(rd, 0, 0, w, h)
        assert back.leaves() == tree.leaves()


def test_parse_mask_matches_tree_path():
    rng = np.random.default_rng(5)
    for _ in range(120):
        w = int(rng.integers(1, 33))
        h = int(rng.integers(1, 33))
        tree = _random_tree(rng, w, h, int(rng.integers(1, 64)))
        wr = BitWriter()
        serialize_tree(tree, wr)
        fast = parse_mask(BitReader(wr.getvalue()), w, h)
        slow = mask_from_tree(deserialize_tree(BitReader(wr.getvalue()), 0, 0, w, h))
        assert np.array_equal(fast, slow)


@settings(max_examples=40, deadline=None)
@given(
    st.integers(1, 24),
    st.integers(1, 24),
    st.integers(1, 60),
    st.integers(0, 2**32 - 1),
)
def test_subdivision_invariants_property(w, h, target, seed):
    rng = np.random.default_rng(seed)
    plane = rng.uniform(0, 255, (h, w))
    target = min(target, w * h)
    tree = subdivide_by_error(plane, target)
    leaves = tree.leaves()
    assert len(leaves) == target
    assert sum(lw * lh for (_, _, lw, lh) in leaves) == w * h
    wr = BitWriter()
    serialize_tree(tree, wr)
    assert deserialize_tree(BitReader(wr.getvalue()), 0, 0, w, h).leaves() == leaves
