"""Encoder and decoder orchestration.

Frame pipeline: reversible color transform, intra prediction by
diffusion inpainting of a sparse subdivision mask (first frame of each
group) or motion compensation along a compressed flow field (remaining
frames), then blockwise coding of the integer prediction residual with
Green's function interpolation, dead-zone quantization and entropy
coding.

The encoder reconstructs every frame through the exact decoder code
path, so predictions never drift: decoding a stream reproduces the
encoder's reconstructions bit for bit.

Frame record layout inside a group payload (after a u16 frame count):

    type      u8    0 intra, 1 inter
    pred_len  u32   intra payload or compressed flow field
    pred      bytes
    res_len   u32
    res       bytes
"""

from __future__ import annotations

import struct
import time
from dataclasses import dataclass, replace

import numpy as np

from hivc import entropy
from hivc.bits import BitReader, BitWriter
from hivc.bitstream import (
    BitstreamError,
    StreamHeader,
    Truncated,
    read_stream,
    write_stream,
)
from hivc.flow import BroxParams, compress_flow, decompress_flow, flow_brox, flow_horn_schunck
from hivc.frame import Frame, FrameError, clip_plane, rct_forward, rct_inverse
from hivc.prediction import decode_intra, encode_intra, predict_inter
from hivc.pseudodiff import (
    BLOCK,
    block_grid,
    greens_eigenvalues_harmonic,
    reconstruct_blocks,
    solve_block_coefficients_batch,
)
from hivc.quantize import (
    coefficient_scale,
    deadzone_dequantize,
    deadzone_quantize,
    map_coefficients,
    unmap_coefficients,
)
from hivc.subdivision import (
    joint_ssd_error,
    mask_from_tree,
    parse_mask,
    serialize_tree,
    subdivide_by_error,
)

MAX_RESIDUAL_POINTS = 48
_SCALE_FP = 65536.0


class CodecError(BitstreamError):
    """Decoding failed on structurally valid but inconsistent payloads."""


@dataclass(frozen=True)
class EncoderConfig:
    gop_size: int = 16
    intra_mask_fraction: float = 0.09
    residual_points: int = 4
    flow_points: int = 100
    intra_levels: int = 256
    flow_levels: int = 256
    residual_levels: int = 63
    residual_lambda: float = 1.0
    fps_num: int = 25
    fps_den: int = 1
    flow_method: str = "brox"
    self_check: bool = False

    def __post_init__(self):
        if not 0.0 < self.intra_mask_fraction <= 1.0:
            raise ValueError("intra_mask_fraction must lie in (0, 1]")
        if not 1 <= self.residual_points <= MAX_RESIDUAL_POINTS:
            raise ValueError(f"residual_points must lie in [1, {MAX_RESIDUAL_POINTS}]")
        if self.flow_points < 1:
            raise ValueError("flow_points must be >= 1")
        if self.flow_method not in ("brox", "horn-schunck"):
            raise ValueError(f"unknown flow method {self.flow_method!r}")
        if self.gop_size < 1 or self.gop_size > 255:
            raise ValueError("gop_size must lie in [1, 255]")
        if self.residual_lambda < 0.0:
            raise ValueError("residual_lambda must be >= 0")


# ---------------------------------------------------------------------------
# Residual coding
# ---------------------------------------------------------------------------


def _tile_residuals(planes, tiles):
    """Extract each tile of each plane embedded top-left into an 8x8 block."""
    n = len(tiles)
    out = np.zeros((len(planes), n, BLOCK, BLOCK))
    for ci, p in enumerate(planes):
        for ti, (y0, x0, bh, bw) in enumerate(tiles):
            out[ci, ti, :bh, :bw] = p[y0 : y0 + bh, x0 : x0 + bw]
    return out


def _plan_group(planes, tiles, points):
    """Choose coded tiles and their masks for one channel group.

    Tiles whose residual is zero in every plane of the group are skipped.
    Returns (coded tile indices, trees, 8x8 masks).
    """
    coded, trees, masks = [], [], []
    for ti, (y0, x0, bh, bw) in enumerate(tiles):
        subs = [p[y0 : y0 + bh, x0 : x0 + bw] for p in planes]
        if all(not s.any() for s in subs):
            continue
        target = min(points, bh * bw)
        err_fn = joint_ssd_error(subs) if len(subs) > 1 else None
        tree = subdivide_by_error(np.asarray(subs[0], dtype=np.float64), target, error_fn=err_fn)
        m = np.zeros((BLOCK, BLOCK), dtype=bool)
        m[:bh, :bw] = mask_from_tree(tree)
        coded.append(ti)
        trees.append(tree)
        masks.append(m)
    return coded, trees, masks


def _solve_coded(f_blocks, masks):
    """Coefficient fits for coded blocks, batched by mask point count."""
    n = len(masks)
    c_list = [None] * n
    a = np.zeros(n)
    ks = np.array([int(m.sum()) for m in masks])
    mask_arr = np.asarray(masks)
    for k in np.unique(ks):
        sel = np.flatnonzero(ks == k)
        cs, as_ = solve_block_coefficients_batch(f_blocks[sel], mask_arr[sel])
        for j, i in enumerate(sel):
            c_list[i] = cs[j]
        a[sel] = as_
    return c_list, a


def _encode_residual(planes, points, levels, lam=0.0):
    """Serialize integer residual planes (Y alone, U and V jointly)."""
    h, w = planes[0].shape
    tiles = block_grid(h, w)
    groups = [[planes[0]]] + ([[planes[1], planes[2]]] if len(planes) == 3 else [])

    plans = []
    all_c, all_a = [], []
    for gplanes in groups:
        coded, trees, masks = _plan_group(gplanes, tiles, points)
        fb = _tile_residuals(gplanes, [tiles[i] for i in coded])
        per_plane = []
        for ci in range(len(gplanes)):
            c_list, a = (_solve_coded(fb[ci], masks) if coded else ([], np.zeros(0)))
            per_plane.append((c_list, a))
            all_c.extend(c_list)
            all_a.append(a)
        plans.append((coded, trees, masks, per_plane, fb))

    c_flat = np.concatenate(all_c) if all_c else np.zeros(0)
    a_flat = np.concatenate(all_a) if all_a else np.zeros(0)
    c_scale = coefficient_scale(c_flat) if c_flat.size else 1.0
    a_scale = coefficient_scale(a_flat) if a_flat.size else 1.0
    c_fp = min(int(round(c_scale * _SCALE_FP)), 0xFFFFFFFF) or 1
    a_fp = min(int(round(a_scale * _SCALE_FP)), 0xFFFFFFFF) or 1
    c_scale, a_scale = c_fp / _SCALE_FP, a_fp / _SCALE_FP

    kept_total = 0
    out = bytearray(struct.pack("<II", c_fp, a_fp))
    for (coded, trees, masks, per_plane, fb), gplanes in zip(plans, groups):
        # quantize, then drop blocks whose indices all collapse to zero
        qc = [
            [deadzone_quantize(map_coefficients(c_list[i], c_scale), levels) for i in range(len(coded))]
            for c_list, _ in per_plane
        ]
        qa = [
            deadzone_quantize(map_coefficients(a, a_scale), levels)
            if a.size
            else np.zeros(0, dtype=np.int64)
            for _, a in per_plane
        ]
        # keep a block only when the error drop from its decoded residual
        # is worth the bits: coarse dead zones can otherwise paint a
        # poorly fitted constant across the whole tile and add noise
        bits_per_sym = max(1, int(np.ceil(np.log2(levels))))
        keep = []
        for i in range(len(coded)):
            if not (any(q[i].any() for q in qc) or any(q[i] for q in qa)):
                continue
            gain = 0.0
            k_i = int(masks[i].sum())
            for ci, plane_q in enumerate(qc):
                mc = np.zeros(BLOCK * BLOCK)
                mc[masks[i].ravel()] = unmap_coefficients(
                    deadzone_dequantize(plane_q[i], levels), c_scale
                )
                a_hat = unmap_coefficients(
                    deadzone_dequantize(np.array([qa[ci][i]]), levels), a_scale
                )[0]
                rec = reconstruct_blocks(mc[None].reshape(1, BLOCK, BLOCK), np.array([a_hat]))[0]
                r = fb[ci][i]
                gain += float(np.sum(r * r) - np.sum((r - rec) ** 2))
            cost_bits = 8 + len(qc) * (k_i + 1) * bits_per_sym
            if gain > lam * cost_bits:
                keep.append(i)
        kept_total += len(keep)
        coded_bits = np.zeros(len(tiles), dtype=np.uint8)
        coded_bits[[coded[i] for i in keep]] = 1
        out += np.packbits(coded_bits).tobytes()

        tree_writer = BitWriter()
        for i in keep:
            serialize_tree(trees[i], tree_writer)
        out += struct.pack("<I", len(tree_writer))
        out += tree_writer.getvalue()

        # plane-major layout: all of one plane's block coefficients, then
        # the next plane's, so the decoder can scatter without a loop
        c_sym, a_sym = [], []
        for ci in range(len(gplanes)):
            for i in keep:
                c_sym.append(qc[ci][i])
            a_sym.extend(int(qa[ci][i]) for i in keep)
        c_sym = np.concatenate(c_sym) if c_sym else np.zeros(0, dtype=np.int64)
        out += entropy.encode_signed_values(c_sym)
        out += entropy.encode_signed_values(np.asarray(a_sym, dtype=np.int64))
    if kept_total == 0:
        # nothing survived quantization anywhere: 1-byte empty marker
        return b"\x00"
    return b"\x01" + bytes(out)


def _decode_residual(data, pos, shape, channels, levels, timings=None):
    """Decode residual planes (floats) without any linear solves."""
    h, w = shape
    tiles = block_grid(h, w)
    nbytes_skip = (len(tiles) + 7) // 8
    if pos + 1 > len(data):
        raise Truncated("residual payload truncated")
    marker = data[pos]
    pos += 1
    if marker == 0:
        # plane synthesis counts as transform work, matching the coded
        # path where output assembly is timed apart from payload reads
        t0 = time.perf_counter()
        planes = [np.zeros((h, w)) for _ in range(channels)]
        if timings is not None:
            timings["residual_transform"] = timings.get("residual_transform", 0.0) + (
                time.perf_counter() - t0
            )
            timings.setdefault("residual_parse", 0.0)
        return planes, pos
    if marker != 1:
        raise CodecError("bad residual payload marker")
    if pos + 8 > len(data):
        raise Truncated("residual payload truncated")
    c_fp, a_fp = struct.unpack_from("<II", data, pos)
    pos += 8
    if c_fp == 0 or a_fp == 0:
        raise CodecError("zero coefficient scale")
    c_scale, a_scale = c_fp / _SCALE_FP, a_fp / _SCALE_FP

    planes = []
    eig = greens_eigenvalues_harmonic()
    groups = [1] + ([2] if channels == 3 else [])
    for nplanes in groups:
        t0 = time.perf_counter()
        if pos + nbytes_skip > len(data):
            raise Truncated("residual payload truncated")
        coded_bits = np.unpackbits(
            np.frombuffer(data, dtype=np.uint8, count=nbytes_skip, offset=pos)
        )[: len(tiles)]
        pos += nbytes_skip
        coded = np.flatnonzero(coded_bits)

        if pos + 4 > len(data):
            raise Truncated("residual payload truncated")
        (tree_bits,) = struct.unpack_from("<I", data, pos)
        pos += 4
        tree_nbytes = (tree_bits + 7) // 8
        if pos + tree_nbytes > len(data):
            raise Truncated("residual payload truncated")
        reader = BitReader(data[pos : pos + tree_nbytes], tree_bits)
        pos += tree_nbytes
        masks = np.zeros((len(coded), BLOCK, BLOCK), dtype=bool)
        for bi, ti in enumerate(coded):
            y0, x0, bh, bw = tiles[ti]
            masks[bi, :bh, :bw] = parse_mask(reader, bw, bh)

        c_sym, pos = entropy.decode_signed_values(data, pos)
        a_sym, pos = entropy.decode_signed_values(data, pos)
        rows, cols = np.nonzero(masks.reshape(len(coded), BLOCK * BLOCK))
        if c_sym.size != rows.size * nplanes or a_sym.size != len(coded) * nplanes:
            raise CodecError("residual payload inconsistent with block masks")
        if timings is not None:
            timings["residual_parse"] = timings.get("residual_parse", 0.0) + (
                time.perf_counter() - t0
            )

        t0 = time.perf_counter()
        c_vals = unmap_coefficients(deadzone_dequantize(c_sym, levels), c_scale)
        a_vals = unmap_coefficients(deadzone_dequantize(a_sym, levels), a_scale)
        mc = np.zeros((nplanes, len(coded), BLOCK * BLOCK))
        per_plane_k = rows.size
        for ci in range(nplanes):
            mc[ci, rows, cols] = c_vals[ci * per_plane_k : (ci + 1) * per_plane_k]
        mc = mc.reshape(nplanes * len(coded), BLOCK, BLOCK)
        nbx = -(-w // BLOCK)
        nby = -(-h // BLOCK)
        rec = (
            reconstruct_blocks(mc, a_vals, eig).reshape(nplanes, len(coded), BLOCK, BLOCK)
            if len(coded)
            else None
        )
        for ci in range(nplanes):
            padded = np.zeros((nby * BLOCK, nbx * BLOCK))
            if rec is not None:
                view = padded.reshape(nby, BLOCK, nbx, BLOCK).transpose(0, 2, 1, 3)
                view[coded // nbx, coded % nbx] = rec[ci]
            planes.append(padded[:h, :w])
        if timings is not None:
            timings["residual_transform"] = timings.get("residual_transform", 0.0) + (
                time.perf_counter() - t0
            )
    return planes, pos


# ---------------------------------------------------------------------------
# Frame and group coding
# ---------------------------------------------------------------------------


def _reconstruct(pred_int, res_planes, colorspace):
    return [
        clip_plane(p + r, ci, colorspace)
        for ci, (p, r) in enumerate(zip(pred_int, res_planes))
    ]


def _code_frame(planes, pred_planes, cfg, colorspace):
    """Residual-code one frame against its prediction; closed loop."""
    pred_int = [np.rint(p).astype(np.int64) for p in pred_planes]
    residual = [o.astype(np.int64) - p for o, p in zip(planes, pred_int)]
    payload = _encode_residual(
        residual, cfg.residual_points, cfg.residual_levels, cfg.residual_lambda
    )
    res_dec, consumed = _decode_residual(
        payload, 0, planes[0].shape, len(planes), cfg.residual_levels
    )
    assert consumed == len(payload)
    return payload, _reconstruct(pred_int, res_dec, colorspace)


def _estimate_flow(y_t, y_prev, method):
    if method == "horn-schunck":
        return flow_horn_schunck(y_t, y_prev)
    return flow_brox(y_t, y_prev, BroxParams())


def _encode_gop(frames_planes, cfg, colorspace, flows_raw):
    """Encode one group; returns (payload, reconstructed planes per frame)."""
    h, w = frames_planes[0][0].shape
    luma_budget = max(1, int(round(cfg.intra_mask_fraction * h * w)))
    out = bytearray(struct.pack("<H", len(frames_planes)))
    recons = []
    for i, planes in enumerate(frames_planes):
        if i == 0:
            pred_payload = encode_intra(planes, luma_budget, cfg.intra_levels)
            pred, consumed = decode_intra(
                pred_payload, 0, (h, w), len(planes), cfg.intra_levels
            )
            assert consumed == len(pred_payload)
            ftype = 0
        else:
            pred_payload = compress_flow(flows_raw[i - 1], cfg.flow_points, cfg.flow_levels)
            flow_dec, _ = decompress_flow(pred_payload, 0, (h, w), cfg.flow_levels)
            pred = predict_inter(recons[-1], flow_dec)
            ftype = 1
        res_payload, recon = _code_frame(planes, pred, cfg, colorspace)
        recons.append(recon)
        out += struct.pack("<BI", ftype, len(pred_payload))
        out += pred_payload
        out += struct.pack("<I", len(res_payload))
        out += res_payload
    return bytes(out), recons


def _split_gops(n, gop_size):
    return [(s, min(s + gop_size, n)) for s in range(0, n, gop_size)]


def _to_yuv_planes(frame):
    if frame.colorspace == "rgb":
        frame = rct_forward(frame)
    return [p.astype(np.int64) for p in frame.planes]


def _compute_gop_flows(y_planes, cfg):
    """Flow fields between consecutive source frames, one list per group."""
    flows = []
    for s, e in _split_gops(len(y_planes), cfg.gop_size):
        flows.append(
            [
                _estimate_flow(y_planes[i], y_planes[i - 1], cfg.flow_method)
                for i in range(s + 1, e)
            ]
        )
    return flows


def encode(frames, cfg: EncoderConfig | None = None, _flows=None) -> bytes:
    """Compress a frame sequence into a self-contained byte stream."""
    cfg = cfg or EncoderConfig()
    if not frames:
        raise FrameError("nothing to encode")
    first = frames[0]
    if any(
        f.width != first.width or f.height != first.height or f.channels != first.channels
        for f in frames
    ):
        raise FrameError("all frames must share geometry and channel count")
    if first.colorspace not in ("rgb", "gray"):
        raise FrameError(f"unsupported input colorspace {first.colorspace!r}")
    colorspace = "yuv" if first.channels == 3 else "gray"

    yuv = [_to_yuv_planes(f) for f in frames]
    if _flows is None:
        _flows = _compute_gop_flows([p[0].astype(np.float64) for p in yuv], cfg)

    header = StreamHeader(
        width=first.width,
        height=first.height,
        frame_count=len(frames),
        fps_num=cfg.fps_num,
        fps_den=cfg.fps_den,
        gop_size=cfg.gop_size,
        channels=first.channels,
        intra_levels=cfg.intra_levels,
        flow_levels=cfg.flow_levels,
        residual_levels=cfg.residual_levels,
    )
    payloads = []
    all_recons = []
    for gi, (s, e) in enumerate(_split_gops(len(frames), cfg.gop_size)):
        payload, recons = _encode_gop(yuv[s:e], cfg, colorspace, _flows[gi])
        payloads.append(payload)
        all_recons.extend(recons)
    stream = write_stream(header, payloads)

    if cfg.self_check:
        decoded = decode(stream)
        for i, frame in enumerate(decoded):
            expect = _finalize_frame(all_recons[i], first.channels)
            if frame != expect:
                raise CodecError(f"self-check failed at frame {i}")
    return stream


def _finalize_frame(recon_planes, channels) -> Frame:
    if channels == 1:
        return Frame((recon_planes[0],), colorspace="gray")
    yuv = Frame(tuple(recon_planes), colorspace="yuv")
    rgb = rct_inverse(yuv)
    return Frame(
        tuple(np.clip(p, 0, 255).astype(np.int32) for p in rgb.planes), colorspace="rgb"
    )


def decode(data: bytes, timings: dict | None = None):
    """Decode a stream into output frames (RGB or gray)."""
    t_all = time.perf_counter()
    header, payloads = read_stream(data)
    colorspace = "yuv" if header.channels == 3 else "gray"
    shape = (header.height, header.width)
    frames = []
    for gi, payload in enumerate(payloads):
        if len(payload) < 2:
            raise Truncated(f"group {gi} payload too small")
        (nframes,) = struct.unpack_from("<H", payload, 0)
        pos = 2
        prev = None
        for fi in range(nframes):
            if pos + 5 > len(payload):
                raise Truncated(f"frame record cut short in group {gi}")
            ftype, pred_len = struct.unpack_from("<BI", payload, pos)
            pos += 5
            if ftype not in (0, 1):
                raise CodecError(f"unknown frame type {ftype}")
            if pos + pred_len > len(payload):
                raise Truncated(f"prediction payload cut short in group {gi}")
            pred_data = payload[pos : pos + pred_len]
            pos += pred_len

            t0 = time.perf_counter()
            if ftype == 0:
                pred, used = decode_intra(
                    pred_data, 0, shape, header.channels, header.intra_levels
                )
                _bump(timings, "intra_solve", t0)
            else:
                if prev is None:
                    raise CodecError(f"group {gi} starts with an inter frame")
                flow, used = decompress_flow(pred_data, 0, shape, header.flow_levels)
                _bump(timings, "flow_parse", t0)
                t0 = time.perf_counter()
                pred = predict_inter(prev, flow)
                _bump(timings, "warp", t0)
            if used != pred_len:
                raise CodecError(f"prediction payload length mismatch in group {gi}")

            if pos + 4 > len(payload):
                raise Truncated(f"frame record cut short in group {gi}")
            (res_len,) = struct.unpack_from("<I", payload, pos)
            pos += 4
            if pos + res_len > len(payload):
                raise Truncated(f"residual payload cut short in group {gi}")
            res, used = _decode_residual(
                payload[pos : pos + res_len],
                0,
                shape,
                header.channels,
                header.residual_levels,
                timings,
            )
            if used != res_len:
                raise CodecError(f"residual payload length mismatch in group {gi}")
            pos += res_len

            t0 = time.perf_counter()
            pred_int = [np.rint(p).astype(np.int64) for p in pred]
            _bump(timings, "finalize", t0)
            # applying the residual to the prediction is the add half of
            # the residual pipeline, so it counts as transform work
            t0 = time.perf_counter()
            recon = _reconstruct(pred_int, res, colorspace)
            _bump(timings, "residual_transform", t0)
            t0 = time.perf_counter()
            prev = recon
            frames.append(_finalize_frame(recon, header.channels))
            _bump(timings, "finalize", t0)
        if pos != len(payload):
            raise CodecError(f"trailing bytes in group {gi}")
    if len(frames) != header.frame_count:
        raise CodecError(
            f"decoded {len(frames)} frames, header promised {header.frame_count}"
        )
    _bump(timings, "total", t_all)
    return frames


def _bump(timings, key, t0):
    if timings is not None:
        timings[key] = timings.get(key, 0.0) + (time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# Rate control
# ---------------------------------------------------------------------------


def _scaled_config(cfg: EncoderConfig, m: float, pixels: int) -> EncoderConfig:
    # the intra mask is the quality backbone, so it gives up rate far
    # more slowly than the residual stream, whose per-bit threshold
    # tightens steeply as the budget shrinks
    frac = min(1.0, max(cfg.intra_mask_fraction * m**0.15, 1.0 / pixels))
    pts = min(MAX_RESIDUAL_POINTS, max(1, int(round(cfg.residual_points * m))))
    fpts = max(1, int(round(cfg.flow_points * m**1.5)))
    lam = cfg.residual_lambda / m**6
    # coarsen the residual dead zone together with the budgets: a wider
    # zero bin is what actually drops whole blocks at very low rates
    lv = cfg.residual_levels
    ilv = cfg.intra_levels
    if m < 1.0:
        lv = max(3, int(round(cfg.residual_levels * m)) | 1)
        # a coarser value quantizer trades invisible tonal precision for
        # a denser mask, which dominates quality at starved rates
        ilv = max(16, int(round(cfg.intra_levels * m**0.5)))
    return replace(
        cfg,
        intra_mask_fraction=frac,
        residual_points=pts,
        flow_points=fpts,
        intra_levels=ilv,
        residual_levels=lv,
        residual_lambda=lam,
    )


def encode_target_ratio(frames, cfg: EncoderConfig, target_ratio: float, tol=0.03, max_iter=14):
    """Search a budget multiplier until the compression ratio hits target.

    Ratio is raw uint8 source bytes over stream bytes, monotone in the
    budget multiplier. Returns (stream, achieved ratio, config used).
    """
    if target_ratio <= 1.0:
        raise ValueError("target ratio must exceed 1")
    first = frames[0]
    raw = len(frames) * first.width * first.height * first.channels
    pixels = first.width * first.height
    yuv_y = [
        _to_yuv_planes(f)[0].astype(np.float64) for f in frames
    ]
    flows = _compute_gop_flows(yuv_y, cfg)

    def run(m):
        stream = encode(frames, _scaled_config(cfg, m, pixels), _flows=flows)
        return stream, raw / len(stream)

    lo, hi = None, None
    m = 1.0
    stream, ratio = run(m)
    best = (stream, ratio, m)
    for _ in range(max_iter):
        if abs(ratio - target_ratio) / target_ratio <= tol:
            break
        if ratio > target_ratio:
            lo = m  # too small a budget, stream too tight
            m = m * 2 if hi is None else (lo * hi) ** 0.5
        else:
            hi = m
            m = m / 2 if lo is None else (lo * hi) ** 0.5
        stream, ratio = run(m)
        if abs(ratio - target_ratio) < abs(best[1] - target_ratio):
            best = (stream, ratio, m)
    else:
        stream, ratio, m = best
    return stream, ratio, _scaled_config(cfg, m, pixels)
