import pytest

from hivc.bitstream import (
    HEADER_SIZE,
    BadMagic,
    BitstreamError,
    LengthMismatch,
    StreamHeader,
    Truncated,
    UnsupportedVersion,
    read_stream,
    unpack_header,
    write_stream,
)


def _header(**kw):
    base = dict(
        width=64,
        height=48,
        frame_count=8,
        fps_num=25,
        fps_den=1,
        gop_size=4,
        channels=3,
        intra_levels=256,
        flow_levels=256,
        residual_levels=63,
    )
    base.update(kw)
    return StreamHeader(**base)


def test_header_pack_round_trip():
    h = _header()
    assert unpack_header(h.pack()) == h
    assert len(h.pack()) == HEADER_SIZE


def test_header_validation():
    with pytest.raises(BitstreamError):
        _header(width=0)
    with pytest.raises(BitstreamError):
        _header(channels=2)
    with pytest.raises(BitstreamError):
        _header(residual_levels=64)
    with pytest.raises(BitstreamError):
        _header(gop_size=0)


def test_empty_video_header_only_round_trip():
    h = _header(frame_count=0)
    data = write_stream(h, [])
    assert len(data) == HEADER_SIZE
    header, gops = read_stream(data)
    assert header == h
    assert gops == []


def test_one_gop_byte_round_trip():
    h = _header(frame_count=3, gop_size=4)
    payload = b"\x01\x02\x03\x04\x05"
    data = write_stream(h, [payload])
    assert write_stream(*read_stream(data)) == data
    _, gops = read_stream(data)
    assert gops == [payload]


def test_bad_magic_is_distinct_error():
    data = bytearray(write_stream(_header(frame_count=0), []))
    data[0] = ord("X")
    with pytest.raises(BadMagic):
        read_stream(bytes(data))


def test_unsupported_version_is_distinct_error():
    data = bytearray(write_stream(_header(frame_count=0), []))
    data[4] = 99
    with pytest.raises(UnsupportedVersion):
        read_stream(bytes(data))


def test_truncation_is_distinct_error():
    h = _header(frame_count=3, gop_size=4)
    data = write_stream(h, [b"abcdef"])
    with pytest.raises(Truncated):
        read_stream(data[:-1])
    with pytest.raises(Truncated):
        read_stream(data[: HEADER_SIZE - 2])


def test_gop_count_mismatch_is_distinct_error():
    h = _header(frame_count=8, gop_size=4)  # expects 2 groups
    data = write_stream(h, [b"abc"])
    with pytest.raises(LengthMismatch):
        read_stream(data)


def test_gops_skippable_without_parsing():
    h = _header(frame_count=8, gop_size=4)
    a, b = b"A" * 17, b"B" * 5
    _, gops = read_stream(write_stream(h, [a, b]))
    assert gops == [a, b]
