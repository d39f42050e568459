import numpy as np
import pytest

from conftest import moving_clip
from hivc.frame import Frame
from hivc.video_io import (
    VideoIOError,
    read_frames,
    read_pnm,
    read_y4m,
    write_pnm,
    write_y4m,
)


def test_ppm_round_trip(tmp_path):
    f = moving_clip(1, 20, 30, seed=1)[0]
    path = tmp_path / "frame.ppm"
    write_pnm(path, f)
    assert read_pnm(path) == f


def test_pgm_round_trip(tmp_path):
    f = moving_clip(1, 20, 30, seed=2)[0]
    gray = Frame((f.planes[0],), colorspace="gray")
    path = tmp_path / "frame.pgm"
    write_pnm(path, gray)
    assert read_pnm(path) == gray


def test_pnm_header_comments(tmp_path):
    path = tmp_path / "c.pgm"
    path.write_bytes(b"P5\n# a comment\n2 2\n# another\n255\n\x01\x02\x03\x04")
    f = read_pnm(path)
    assert f.planes[0].tolist() == [[1, 2], [3, 4]]


def test_pnm_rejects_garbage(tmp_path):
    path = tmp_path / "bad.ppm"
    path.write_bytes(b"JUNK")
    with pytest.raises(VideoIOError):
        read_pnm(path)


def test_pnm_rejects_truncated_pixels(tmp_path):
    path = tmp_path / "short.pgm"
    path.write_bytes(b"P5\n4 4\n255\n\x00\x01")
    with pytest.raises(VideoIOError):
        read_pnm(path)


def test_y4m_round_trip_color(tmp_path):
    clip = moving_clip(3, 24, 32, seed=3)
    path = tmp_path / "clip.y4m"
    write_y4m(path, clip, fps=(30, 1))
    frames, fps = read_y4m(path)
    assert fps == (30, 1)
    assert len(frames) == 3
    assert all(a == b for a, b in zip(frames, clip))


def test_y4m_round_trip_gray(tmp_path):
    clip = [Frame((f.planes[0],), colorspace="gray") for f in moving_clip(2, 16, 16, seed=4)]
    path = tmp_path / "gray.y4m"
    write_y4m(path, clip)
    frames, _ = read_y4m(path)
    assert all(a == b for a, b in zip(frames, clip))


def test_y4m_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.y4m"
    path.write_bytes(b"NOTY4M stuff\n")
    with pytest.raises(VideoIOError):
        read_y4m(path)


def test_read_frames_from_directory(tmp_path):
    clip = moving_clip(3, 12, 14, seed=5)
    for i, f in enumerate(clip):
        write_pnm(tmp_path / f"f{i:03d}.ppm", f)
    frames, fps = read_frames(str(tmp_path))
    assert len(frames) == 3
    assert all(a == b for a, b in zip(frames, clip))
    assert fps[0] >= 1


def test_read_frames_from_glob(tmp_path):
    clip = moving_clip(2, 12, 14, seed=6)
    for i, f in enumerate(clip):
        write_pnm(tmp_path / f"g{i}.ppm", f)
    frames, _ = read_frames(str(tmp_path / "g*.ppm"))
    assert len(frames) == 2


def test_read_frames_single_pnm(tmp_path):
    f = moving_clip(1, 10, 10, seed=7)[0]
    p = tmp_path / "one.ppm"
    write_pnm(p, f)
    frames, _ = read_frames(str(p))
    assert frames == [f]


def test_read_frames_missing_path(tmp_path):
    with pytest.raises((VideoIOError, OSError)):
        read_frames(str(tmp_path / "nope.y4m"))
