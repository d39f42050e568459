"""Per-frame prediction signals.

Intra frames: sparse mask values picked by rectangular subdivision,
uniformly quantized, reconstructed by global homogeneous diffusion
inpainting. Chroma channels share one mask with half the luma budget.
Inter frames: backward warping of the previous reconstruction along a
decoded flow field.

The intra payload is decoded by encoder and decoder through the same
routine, so predictions are closed-loop by construction.
"""

from __future__ import annotations

import struct

import numpy as np
import scipy.sparse as sparse
from scipy.sparse.linalg import LinearOperator, lsqr, splu

from hivc import entropy, runtime
from hivc.bits import BitReader, BitWriter, TruncatedStream
from hivc.flow import FlowField, warp_planes
from hivc.homogeneous import solve_homogeneous
from hivc.quantize import uniform_dequantize, uniform_quantize
from hivc.subdivision import (
    joint_ssd_error,
    mask_from_tree,
    parse_mask,
    serialize_tree,
    subdivide_by_error,
)

# fixed iteration budget keeps decode deterministic and time-bounded
INTRA_SOLVE_ITERS = 160
INTRA_SOLVE_TOL = 1e-4

# least-squares refinement of the transmitted mask values converges in
# a handful of iterations and plateaus well before 20
TONAL_ITERS = 12


def _sparse_inpainting_system(mask: np.ndarray):
    """Sparse inpainting system matrix: identity rows on the mask,
    reflecting-boundary 5-point Laplacian rows elsewhere."""
    h, w = mask.shape
    n = h * w
    idx = np.arange(n).reshape(h, w)
    rows, cols, vals = [], [], []
    for a, b in (
        (idx[:-1, :].ravel(), idx[1:, :].ravel()),
        (idx[:, :-1].ravel(), idx[:, 1:].ravel()),
    ):
        one = np.ones(a.size)
        rows += [a, b, a, b]
        cols += [b, a, a, b]
        vals += [one, one, -one, -one]
    lap = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsr()
    d = mask.ravel().astype(np.float64)
    return (sparse.diags(d) + sparse.diags(1.0 - d) @ lap).tocsc()


def optimize_mask_values(planes, mask: np.ndarray):
    """Refine the stored mask values so the inpainted result, not the
    point samples, is closest to each source plane in least squares.

    The transmitted payload format is unchanged: this only picks better
    values. A full mask is returned verbatim to keep pure-quantization
    configurations exact.
    """
    pts = _mask_points(mask)
    samples = [np.asarray(p, dtype=np.float64).ravel()[pts] for p in planes]
    if mask.all():
        return samples
    n = mask.size
    lu = splu(_sparse_inpainting_system(mask))

    def matvec(v):
        f = np.zeros(n)
        f[pts] = v
        return lu.solve(f)

    def rmatvec(w):
        return lu.solve(w, trans="T")[pts]

    op = LinearOperator((n, pts.size), matvec=matvec, rmatvec=rmatvec)
    out = []
    for plane, x0 in zip(planes, samples):
        target = np.asarray(plane, dtype=np.float64).ravel()
        v = lsqr(op, target, iter_lim=TONAL_ITERS, x0=x0.copy())[0]
        # box projection keeps the quantizer span tight and the
        # reconstruction within the source dynamic range
        out.append(np.clip(v, target.min(), target.max()))
    return out


def chroma_budget(luma_budget: int, plane_size: int) -> int:
    """Chroma channels share one mask with half the luma point count.

    A full luma mask implies a full chroma mask: halving only expresses
    rate allocation between sparse masks, and the degenerate full-mask
    setting must reduce to pure value quantization on every channel.
    """
    if luma_budget >= plane_size:
        return plane_size
    return (luma_budget + 1) // 2


def chroma_levels(levels: int) -> int:
    """Chroma planes span twice the dynamic range after the color
    transform; doubling the level count keeps the quantizer step equal."""
    return 2 * levels - 1


def _mask_points(mask: np.ndarray):
    """Mask point coordinates in raster order (fixed payload order)."""
    return np.flatnonzero(mask.ravel())


def _encode_plane_values(values: np.ndarray, levels: int, out: bytearray):
    values = np.asarray(values, dtype=np.float64)
    lo = int(np.floor(values.min()))
    hi = int(np.ceil(values.max()))
    if hi <= lo:
        hi = lo + 1
    idx = uniform_quantize(values, float(lo), float(hi), levels)
    out += struct.pack("<hh", lo, hi)
    out += entropy.encode_symbols(idx)


def _decode_plane_values(data: bytes, pos: int, levels: int):
    if pos + 4 > len(data):
        raise TruncatedStream("intra payload truncated")
    lo, hi = struct.unpack_from("<hh", data, pos)
    pos += 4
    idx, pos = entropy.decode_symbols(data, pos)
    return uniform_dequantize(idx, float(lo), float(hi), levels), pos


def _write_tree(tree, out: bytearray):
    writer = BitWriter()
    serialize_tree(tree, writer)
    out += struct.pack("<I", len(writer))
    out += writer.getvalue()


def _read_tree(data: bytes, pos: int, width: int, height: int):
    if pos + 4 > len(data):
        raise TruncatedStream("intra payload truncated")
    (nbits,) = struct.unpack_from("<I", data, pos)
    pos += 4
    nbytes = (nbits + 7) // 8
    if pos + nbytes > len(data):
        raise TruncatedStream("intra payload truncated")
    reader = BitReader(data[pos : pos + nbytes], nbits)
    mask = parse_mask(reader, width, height)
    return mask, pos + nbytes


def encode_intra(planes, luma_budget: int, levels: int) -> bytes:
    """Build subdivision masks, quantize mask values, serialize the payload."""
    if luma_budget < 1:
        raise ValueError("luma mask budget must be >= 1")
    y = np.asarray(planes[0], dtype=np.float64)
    out = bytearray()
    tree_y = subdivide_by_error(y, min(luma_budget, y.size))
    _write_tree(tree_y, out)
    (vals_y,) = optimize_mask_values([y], mask_from_tree(tree_y))
    _encode_plane_values(vals_y, levels, out)
    if len(planes) == 3:
        u = np.asarray(planes[1], dtype=np.float64)
        v = np.asarray(planes[2], dtype=np.float64)
        tree_c = subdivide_by_error(
            u, chroma_budget(min(luma_budget, y.size), u.size), error_fn=joint_ssd_error([u, v])
        )
        _write_tree(tree_c, out)
        vals_u, vals_v = optimize_mask_values([u, v], mask_from_tree(tree_c))
        _encode_plane_values(vals_u, chroma_levels(levels), out)
        _encode_plane_values(vals_v, chroma_levels(levels), out)
    return bytes(out)


def decode_intra(data: bytes, pos: int, shape, channels: int, levels: int):
    """Decode an intra payload into float prediction planes.

    Returns (planes, next position). Used by encoder and decoder alike.
    """
    h, w = shape
    mask_y, pos = _read_tree(data, pos, w, h)
    vals_y, pos = _decode_plane_values(data, pos, levels)
    jobs = [(mask_y, vals_y)]
    if channels == 3:
        mask_c, pos = _read_tree(data, pos, w, h)
        for _ in range(2):
            vals, pos = _decode_plane_values(data, pos, chroma_levels(levels))
            jobs.append((mask_c, vals))
    planes = runtime.map_tasks(lambda j: _inpaint_from_values(*j), jobs)
    return planes, pos


def _inpaint_from_values(mask: np.ndarray, values: np.ndarray) -> np.ndarray:
    f = np.zeros(mask.shape)
    f.ravel()[_mask_points(mask)] = values
    return solve_homogeneous(
        f, mask, tol=INTRA_SOLVE_TOL, max_iter=INTRA_SOLVE_ITERS, strict=False
    )


def predict_intra(planes, luma_budget: int, levels: int):
    """Closed-loop intra prediction: encode, then decode our own payload."""
    payload = encode_intra(planes, luma_budget, levels)
    shape = np.asarray(planes[0]).shape
    pred, consumed = decode_intra(payload, 0, shape, len(planes), levels)
    assert consumed == len(payload)
    return pred, payload


def predict_inter(prev_planes, flow: FlowField):
    """Motion-compensated prediction: sample the previous reconstruction
    at (x + u, y + v) per channel, bilinear with border clamping."""
    return warp_planes([np.asarray(p, dtype=np.float64) for p in prev_planes], flow.u, flow.v)
