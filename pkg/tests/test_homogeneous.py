import numpy as np
import pytest

from hivc.homogeneous import (
    COARSEST_SIZE,
    ConvergenceError,
    InpaintingError,
    apply_inpainting_operator,
    build_pyramid,
    dense_laplacian,
    laplacian,
    solve_dense,
    solve_homogeneous,
)


def test_laplacian_annihilates_constants():
    assert np.allclose(laplacian(np.full((9, 7), 42.0)), 0.0)


def test_laplacian_matches_dense_matrix():
    rng = np.random.default_rng(0)
    for (h, w) in ((1, 1), (1, 5), (4, 1), (3, 3), (5, 7)):
        u = rng.standard_normal((h, w))
        dense = dense_laplacian(w, h)
        assert np.allclose(laplacian(u).ravel(), dense @ u.ravel(), atol=1e-12)


def test_dense_laplacian_row_sums_zero():
    dense = dense_laplacian(6, 4)
    assert np.allclose(dense.sum(axis=1), 0.0)
    assert np.allclose(dense, dense.T)


def test_operator_residual_zero_for_constant():
    f = np.full((5, 5), 3.0)
    mask = np.zeros((5, 5), dtype=bool)
    mask[2, 3] = True
    r = apply_inpainting_operator(f, mask, f)
    assert np.allclose(r, 0.0)


def test_operator_full_mask_is_difference():
    rng = np.random.default_rng(1)
    u = rng.standard_normal((4, 6))
    f = rng.standard_normal((4, 6))
    mask = np.ones((4, 6), dtype=bool)
    assert np.allclose(apply_inpainting_operator(u, mask, f), u - f)


def test_operator_impulse_matches_dense_assembly():
    # Center pixel masked, u = f = impulse at center: the mask row gives
    # u - f = 0 there, the off-mask rows give (L u).
    u = np.zeros((3, 3))
    u[1, 1] = 1.0
    mask = np.zeros((3, 3), dtype=bool)
    mask[1, 1] = True
    r = apply_inpainting_operator(u, mask, u)
    dense_l = dense_laplacian(3, 3)
    m = mask.ravel().astype(np.float64)
    oracle = m * (u.ravel() - u.ravel()) + (1.0 - m) * (dense_l @ u.ravel())
    assert np.allclose(r.ravel(), oracle, atol=1e-12)


def test_operator_rejects_empty_mask():
    f = np.zeros((3, 3))
    with pytest.raises(InpaintingError):
        apply_inpainting_operator(f, np.zeros((3, 3), dtype=bool), f)


def test_solve_full_mask_is_copy():
    rng = np.random.default_rng(2)
    f = rng.uniform(0, 255, (10, 10))
    u = solve_homogeneous(f, np.ones((10, 10), dtype=bool))
    assert np.array_equal(u, f)


def test_solve_single_point_gives_constant():
    f = np.zeros((12, 9))
    f[5, 4] = 77.0
    mask = np.zeros((12, 9), dtype=bool)
    mask[5, 4] = True
    u = solve_homogeneous(f, mask)
    assert np.allclose(u, 77.0, atol=1e-3)


def test_solve_two_corners_matches_dense():
    f = np.zeros((8, 8))
    f[7, 7] = 255.0
    mask = np.zeros((8, 8), dtype=bool)
    mask[0, 0] = True
    mask[7, 7] = True
    u = solve_homogeneous(f, mask, tol=1e-8)
    ref = solve_dense(f, mask)
    rms = float(np.sqrt(np.mean((u - ref) ** 2)))
    assert rms <= 1e-6


def test_interpolation_and_maximum_principle():
    rng = np.random.default_rng(3)
    f = rng.uniform(0, 255, (24, 31))
    mask = rng.uniform(size=(24, 31)) < 0.08
    mask[0, 0] = True
    tol = 1e-6
    u = solve_homogeneous(f, mask, tol=tol)
    assert np.max(np.abs(u[mask] - f[mask])) <= 10 * tol * np.abs(f).max()
    eps = 1e-3
    assert u.min() >= f[mask].min() - eps
    assert u.max() <= f[mask].max() + eps


def test_solve_reports_non_convergence():
    rng = np.random.default_rng(4)
    f = rng.uniform(0, 255, (64, 64))
    mask = rng.uniform(size=(64, 64)) < 0.05
    mask[0, 0] = True
    with pytest.raises(ConvergenceError):
        solve_homogeneous(f, mask, tol=1e-14, max_iter=1, strict=True)


def test_pyramid_level_shapes():
    f = np.zeros((32, 32))
    mask = np.zeros((32, 32), dtype=bool)
    mask[0, 0] = True
    levels = build_pyramid(f, mask)
    assert [lvl[0].shape for lvl in levels] == [(32, 32), (16, 16)]
    single = build_pyramid(np.zeros((16, 16)), np.ones((16, 16), dtype=bool))
    assert len(single) == 1


def test_pyramid_preserves_constants_and_masks():
    f = np.full((40, 28), 5.0)
    rng = np.random.default_rng(5)
    mask = rng.uniform(size=(40, 28)) < 0.1
    mask[3, 3] = True
    for plane, coarse_mask in build_pyramid(f, mask):
        assert np.allclose(plane[coarse_mask], 5.0)
        assert coarse_mask.any()
        assert max(plane.shape) >= 1


def test_pyramid_mask_any_child_rule():
    mask = np.zeros((4, 4), dtype=bool)
    mask[1, 0] = True  # one child of coarse pixel (0, 0)
    f = np.zeros((4, 4))
    f[1, 0] = 8.0
    levels = build_pyramid(f, mask)
    # 4x4 stays a single level below the coarsest threshold.
    assert len(levels) == 1 or levels[-1][1][0, 0]


def test_cascadic_matches_dense_sampled_sizes():
    rng = np.random.default_rng(6)
    for (h, w) in ((2, 2), (5, 3), (7, 7), (12, 11), (9, 12)):
        for _ in range(8):
            f = rng.uniform(0, 255, (h, w))
            mask = rng.uniform(size=(h, w)) < 0.3
            mask[rng.integers(h), rng.integers(w)] = True
            u = solve_homogeneous(f, mask, tol=1e-9)
            ref = solve_dense(f, mask)
            assert np.sqrt(np.mean((u - ref) ** 2)) <= 1e-5


def test_coarsest_size_constant():
    assert COARSEST_SIZE == 16
