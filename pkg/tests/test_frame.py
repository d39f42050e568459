import math

import numpy as np
import pytest

from hivc.frame import Frame, FrameError, clip_plane, psnr, rct_forward, rct_inverse


def _frame1(r, g, b):
    one = lambda v: np.full((1, 1), v, dtype=np.int32)
    return Frame((one(r), one(g), one(b)), colorspace="rgb")


def test_frame_rejects_bad_plane_count():
    p = np.zeros((2, 2), dtype=np.int32)
    with pytest.raises(FrameError):
        Frame((p, p))


def test_frame_rejects_shape_mismatch():
    with pytest.raises(FrameError):
        Frame((np.zeros((2, 2), dtype=np.int32), np.zeros((2, 3), dtype=np.int32), np.zeros((2, 2), dtype=np.int32)))


def test_frame_planes_read_only():
    f = _frame1(1, 2, 3)
    with pytest.raises(ValueError):
        f.planes[0][0, 0] = 9


@pytest.mark.parametrize(
    "rgb,yuv",
    [
        ((0, 0, 0), (0, 0, 0)),
        ((255, 255, 255), (255, 0, 0)),
        ((100, 50, 200), (100, 150, 50)),
    ],
)
def test_rct_forward_known_values(rgb, yuv):
    out = rct_forward(_frame1(*rgb))
    assert tuple(int(p[0, 0]) for p in out.planes) == yuv
    assert out.colorspace == "yuv"


def test_rct_inverse_known_value():
    y = Frame(
        (np.full((1, 1), 100, np.int32), np.full((1, 1), 150, np.int32), np.full((1, 1), 50, np.int32)),
        colorspace="yuv",
    )
    out = rct_inverse(y)
    assert tuple(int(p[0, 0]) for p in out.planes) == (100, 50, 200)


def test_rct_round_trip_random():
    rng = np.random.default_rng(3)
    planes = tuple(rng.integers(0, 256, size=(37, 53)).astype(np.int32) for _ in range(3))
    f = Frame(planes, colorspace="rgb")
    back = rct_inverse(rct_forward(f))
    for a, b in zip(f.planes, back.planes):
        assert np.array_equal(a, b)


def test_rct_range_invariants():
    rng = np.random.default_rng(4)
    planes = tuple(rng.integers(0, 256, size=(16, 16)).astype(np.int32) for _ in range(3))
    yuv = rct_forward(Frame(planes, colorspace="rgb"))
    y, u, v = yuv.planes
    assert y.min() >= 0 and y.max() <= 255
    assert abs(u).max() <= 255 and abs(v).max() <= 255


def test_rct_requires_three_channels():
    g = Frame((np.zeros((2, 2), dtype=np.int32),), colorspace="gray")
    with pytest.raises(FrameError):
        rct_forward(g)


def test_rct_inverse_rejects_out_of_range():
    bad = Frame(
        (np.full((1, 1), 300, np.int32), np.zeros((1, 1), np.int32), np.zeros((1, 1), np.int32)),
        colorspace="yuv",
    )
    with pytest.raises(FrameError):
        rct_inverse(bad)


def test_psnr_identical_is_infinite():
    f = _frame1(10, 20, 30)
    assert math.isinf(psnr(f, f))


def test_psnr_maximal_error_is_zero_db():
    a = Frame(tuple(np.zeros((4, 4), np.int32) for _ in range(3)), colorspace="rgb")
    b = Frame(tuple(np.full((4, 4), 255, np.int32) for _ in range(3)), colorspace="rgb")
    assert psnr(a, b) == pytest.approx(0.0, abs=1e-12)


def test_psnr_off_by_one_everywhere():
    a = Frame(tuple(np.full((4, 4), 7, np.int32) for _ in range(3)), colorspace="rgb")
    b = Frame(tuple(np.full((4, 4), 8, np.int32) for _ in range(3)), colorspace="rgb")
    assert psnr(a, b) == pytest.approx(20 * math.log10(255.0), abs=1e-9)


def test_psnr_symmetry():
    rng = np.random.default_rng(5)
    a = Frame(tuple(rng.integers(0, 256, (8, 8)).astype(np.int32) for _ in range(3)))
    b = Frame(tuple(rng.integers(0, 256, (8, 8)).astype(np.int32) for _ in range(3)))
    assert psnr(a, b) == psnr(b, a)


def test_psnr_dimension_mismatch():
    a = Frame((np.zeros((2, 2), np.int32),), colorspace="gray")
    b = Frame((np.zeros((2, 3), np.int32),), colorspace="gray")
    with pytest.raises(FrameError):
        psnr(a, b)


def test_clip_plane_ranges():
    vals = np.array([[-300.4, 0.5, 400.0]])
    assert clip_plane(vals, 0, "yuv").tolist() == [[0, 0, 255]]
    assert clip_plane(vals, 1, "yuv").tolist() == [[-255, 0, 255]]
    assert clip_plane(vals, 0, "rgb").tolist() == [[0, 0, 255]]
