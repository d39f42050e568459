"""Dense backward optic flow estimation and compression.

The primary estimator is a coarse-to-fine warping variational method
with Charbonnier-robustified brightness and gradient constancy data
terms and a robust smoothness term (the design of Brox-style flow).
A classical Horn-Schunck solver is kept as the comparison baseline.

A flow field here is backward: it points from the current frame to the
previous one, so prediction(x) = previous(x + w(x)). Compression uses
rectangular subdivision with region averages since backward fields are
piecewise smooth with large near-constant regions.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.ndimage import gaussian_filter, median_filter

from hivc import entropy
from hivc.bits import BitReader, BitWriter, TruncatedStream
from hivc.quantize import uniform_dequantize, uniform_quantize
from hivc.subdivision import (
    SubdivisionTree,
    deserialize_tree,
    leaf_means,
    paint_leaf_values,
    serialize_tree,
    subdivide_by_error,
)


class FlowError(ValueError):
    pass


@dataclass(frozen=True)
class FlowField:
    u: np.ndarray  # horizontal displacement, pixels
    v: np.ndarray  # vertical displacement, pixels

    def __post_init__(self):
        if self.u.shape != self.v.shape:
            raise FlowError("flow component shape mismatch")
        if not (np.isfinite(self.u).all() and np.isfinite(self.v).all()):
            raise FlowError("non-finite flow values")

    @property
    def shape(self):
        return self.u.shape


@dataclass(frozen=True)
class BroxParams:
    alpha: float = 40.0  # smoothness weight
    gamma: float = 40.0  # gradient constancy weight
    pyramid_scale: float = 0.5
    min_size: int = 16
    warps: int = 3  # warp relinearizations per level
    fixed_point_iters: int = 5  # lagged-nonlinearity iterations
    solver_iters: int = 30  # coupled Jacobi sweeps per fixed point step
    eps: float = 1e-3
    presmooth_sigma: float = 0.8


def bilinear_resize(img: np.ndarray, shape) -> np.ndarray:
    """Bilinear resample to `shape`, pixel-center aligned."""
    h, w = shape
    ih, iw = img.shape
    if (ih, iw) == (h, w):
        return img.copy()
    ys = np.clip((np.arange(h) + 0.5) * (ih / h) - 0.5, 0, ih - 1)
    xs = np.clip((np.arange(w) + 0.5) * (iw / w) - 0.5, 0, iw - 1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, ih - 1)
    x1 = np.minimum(x0 + 1, iw - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    return (
        (1 - wy) * ((1 - wx) * img[np.ix_(y0, x0)] + wx * img[np.ix_(y0, x1)])
        + wy * ((1 - wx) * img[np.ix_(y1, x0)] + wx * img[np.ix_(y1, x1)])
    )


@lru_cache(maxsize=8)
def _grid(h, w):
    return np.mgrid[0:h, 0:w]


def warp_planes(planes, u: np.ndarray, v: np.ndarray):
    """Sample each plane at (x + u, y + v), bilinear with border clamping.

    The sampling coordinates are shared across planes, so passing all
    channels at once avoids recomputing them.
    """
    h, w = planes[0].shape
    yy, xx = _grid(h, w)
    xs = np.clip(xx + u, 0, w - 1)
    ys = np.clip(yy + v, 0, h - 1)
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xs - x0
    fy = ys - y0
    w00 = (1 - fy) * (1 - fx)
    w01 = (1 - fy) * fx
    w10 = fy * (1 - fx)
    w11 = fy * fx
    i00 = y0 * w + x0
    i01 = y0 * w + x1
    i10 = y1 * w + x0
    i11 = y1 * w + x1
    out = []
    for p in planes:
        flat = np.ascontiguousarray(p).ravel()
        out.append(
            w00 * np.take(flat, i00)
            + w01 * np.take(flat, i01)
            + w10 * np.take(flat, i10)
            + w11 * np.take(flat, i11)
        )
    return out


def bilinear_warp(plane: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Sample plane at (x + u, y + v) with bilinear interpolation, clamped."""
    return warp_planes([plane], u, v)[0]


def _dx(a):
    g = np.empty_like(a)
    g[:, 1:-1] = 0.5 * (a[:, 2:] - a[:, :-2])
    g[:, 0] = a[:, 1] - a[:, 0]
    g[:, -1] = a[:, -1] - a[:, -2]
    return g


def _dy(a):
    g = np.empty_like(a)
    g[1:-1, :] = 0.5 * (a[2:, :] - a[:-2, :])
    g[0, :] = a[1, :] - a[0, :]
    g[-1, :] = a[-1, :] - a[-2, :]
    return g


def _pyramid_shapes(h, w, scale, min_size):
    shapes = [(h, w)]
    while min(shapes[-1]) > min_size:
        nh = max(int(round(shapes[-1][0] * scale)), min_size)
        nw = max(int(round(shapes[-1][1] * scale)), min_size)
        if (nh, nw) == shapes[-1]:
            break
        shapes.append((nh, nw))
    return shapes


def _neighbor_sums(field, weights_n, weights_s, weights_w, weights_e):
    """Sum of w_nb * field_nb over the 4-neighborhood (reflecting edges)."""
    p = np.pad(field, 1, mode="edge")
    return (
        weights_n * p[:-2, 1:-1]
        + weights_s * p[2:, 1:-1]
        + weights_w * p[1:-1, :-2]
        + weights_e * p[1:-1, 2:]
    )


def _half_point_weights(psi):
    p = np.pad(psi, 1, mode="edge")
    wn = 0.5 * (psi + p[:-2, 1:-1])
    ws = 0.5 * (psi + p[2:, 1:-1])
    ww = 0.5 * (psi + p[1:-1, :-2])
    we = 0.5 * (psi + p[1:-1, 2:])
    # no flux across the image border
    wn[0, :] = 0.0
    ws[-1, :] = 0.0
    ww[:, 0] = 0.0
    we[:, -1] = 0.0
    return wn, ws, ww, we


def flow_brox(frame_t: np.ndarray, frame_prev: np.ndarray, params: BroxParams | None = None) -> FlowField:
    """Backward flow from frame_t to frame_prev, coarse-to-fine with warping."""
    if params is None:
        params = BroxParams()
    f1 = np.asarray(frame_t, dtype=np.float64)
    f0 = np.asarray(frame_prev, dtype=np.float64)
    if f1.shape != f0.shape:
        raise FlowError("frame shape mismatch")
    if not (np.isfinite(f1).all() and np.isfinite(f0).all()):
        raise FlowError("non-finite input planes")
    if params.presmooth_sigma > 0:
        f1 = gaussian_filter(f1, params.presmooth_sigma)
        f0 = gaussian_filter(f0, params.presmooth_sigma)

    shapes = _pyramid_shapes(*f1.shape, params.pyramid_scale, params.min_size)
    # recursive pyramid: each level smooths the previous one before resampling
    refs = [f1]
    tgts = [f0]
    anti_alias = 0.5 / params.pyramid_scale
    for h, w in shapes[1:]:
        refs.append(bilinear_resize(gaussian_filter(refs[-1], anti_alias), (h, w)))
        tgts.append(bilinear_resize(gaussian_filter(tgts[-1], anti_alias), (h, w)))
    eps2 = params.eps * params.eps
    u = v = None
    for lvl in range(len(shapes) - 1, -1, -1):
        h, w = shapes[lvl]
        ref = refs[lvl]
        tgt = tgts[lvl]
        if u is None:
            u = np.zeros((h, w))
            v = np.zeros((h, w))
        else:
            u = bilinear_resize(u, (h, w)) * (w / shapes[lvl + 1][1])
            v = bilinear_resize(v, (h, w)) * (h / shapes[lvl + 1][0])

        for _ in range(params.warps):
            warped = bilinear_warp(tgt, u, v)
            ix = 0.5 * (_dx(warped) + _dx(ref))
            iy = 0.5 * (_dy(warped) + _dy(ref))
            iz = warped - ref
            ixx = _dx(ix)
            ixy = _dy(ix)
            iyy = _dy(iy)
            ixz = _dx(warped) - _dx(ref)
            iyz = _dy(warped) - _dy(ref)
            du = np.zeros_like(u)
            dv = np.zeros_like(v)
            for _ in range(params.fixed_point_iters):
                r_b = iz + ix * du + iy * dv
                psi_d = 1.0 / np.sqrt(r_b * r_b + eps2)
                r_gx = ixz + ixx * du + ixy * dv
                r_gy = iyz + ixy * du + iyy * dv
                psi_g = params.gamma / np.sqrt(r_gx * r_gx + r_gy * r_gy + eps2)
                ut = u + du
                vt = v + dv
                grad2 = _dx(ut) ** 2 + _dy(ut) ** 2 + _dx(vt) ** 2 + _dy(vt) ** 2
                # diffusivity floor prevents the TV outlier spiral where a
                # single pixel decouples from its neighborhood
                psi_s = np.maximum(1.0 / np.sqrt(grad2 + eps2), 0.05)
                wn, ws, ww, we = _half_point_weights(psi_s)
                wsum = wn + ws + ww + we

                a11 = psi_d * ix * ix + psi_g * (ixx * ixx + ixy * ixy) + params.alpha * wsum
                a12 = psi_d * ix * iy + psi_g * (ixx * ixy + ixy * iyy)
                a22 = psi_d * iy * iy + psi_g * (ixy * ixy + iyy * iyy) + params.alpha * wsum
                b1_fix = -psi_d * ix * iz - psi_g * (ixx * ixz + ixy * iyz)
                b2_fix = -psi_d * iy * iz - psi_g * (ixy * ixz + iyy * iyz)
                su = _neighbor_sums(u, wn, ws, ww, we) - wsum * u
                sv = _neighbor_sums(v, wn, ws, ww, we) - wsum * v

                det_guard = 1e-12
                for _ in range(params.solver_iters):
                    b1 = b1_fix + params.alpha * (su + _neighbor_sums(du, wn, ws, ww, we))
                    b2 = b2_fix + params.alpha * (sv + _neighbor_sums(dv, wn, ws, ww, we))
                    det = a11 * a22 - a12 * a12
                    det = np.where(np.abs(det) < det_guard, det_guard, det)
                    du_new = (a22 * b1 - a12 * b2) / det
                    dv_new = (a11 * b2 - a12 * b1) / det
                    du = 0.5 * du + 0.5 * du_new  # damped Jacobi
                    dv = 0.5 * dv + 0.5 * dv_new
                # the linearized data terms are only valid near the
                # expansion point; keep increments inside that range
                np.clip(du, -1.0, 1.0, out=du)
                np.clip(dv, -1.0, 1.0, out=dv)
            u = u + du
            v = v + dv
            # median filtering after each warp removes isolated outliers
            # while preserving motion discontinuities
            u = median_filter(u, size=3, mode="nearest")
            v = median_filter(v, size=3, mode="nearest")
    bound = float(max(f1.shape))
    return FlowField(np.clip(u, -bound, bound), np.clip(v, -bound, bound))


def flow_horn_schunck(
    frame_t: np.ndarray, frame_prev: np.ndarray, alpha: float = 15.0, iterations: int = 400
) -> FlowField:
    """Classical quadratic-penalty flow, Jacobi iterations on the
    Euler-Lagrange equations. Baseline only."""
    im1 = np.asarray(frame_t, dtype=np.float64)
    im2 = np.asarray(frame_prev, dtype=np.float64)
    if im1.shape != im2.shape:
        raise FlowError("frame shape mismatch")
    if not (np.isfinite(im1).all() and np.isfinite(im2).all()):
        raise FlowError("non-finite input planes")
    fx = 0.5 * (_dx(im1) + _dx(im2))
    fy = 0.5 * (_dy(im1) + _dy(im2))
    ft = im2 - im1
    u = np.zeros_like(im1)
    v = np.zeros_like(im1)
    kernel_avg = np.array([[1 / 12, 1 / 6, 1 / 12], [1 / 6, 0, 1 / 6], [1 / 12, 1 / 6, 1 / 12]])

    def local_avg(a):
        p = np.pad(a, 1, mode="edge")
        out = np.zeros_like(a)
        for dy in range(3):
            for dx in range(3):
                k = kernel_avg[dy, dx]
                if k:
                    out += k * p[dy : dy + a.shape[0], dx : dx + a.shape[1]]
        return out

    denom = alpha * alpha + fx * fx + fy * fy
    for _ in range(iterations):
        ua = local_avg(u)
        va = local_avg(v)
        common = (fx * ua + fy * va + ft) / denom
        u = ua - fx * common
        v = va - fy * common
    return FlowField(u, v)


# ---------------------------------------------------------------------------
# Flow compression: subdivision trees with quantized region averages
# ---------------------------------------------------------------------------


def _compress_plane(plane: np.ndarray, budget: int, levels: int) -> bytes:
    # min_error=0 stops the subdivision early on exactly representable
    # regions, so a zero flow costs a single-leaf tree at any budget
    tree = subdivide_by_error(plane, budget, min_error=0.0)
    means = leaf_means(tree, plane)
    lo = float(means.min())
    hi = float(means.max())
    if hi <= lo:
        hi = lo + 1e-6
    idx = uniform_quantize(means, lo, hi, levels)
    writer = BitWriter()
    serialize_tree(tree, writer)
    tree_bytes = writer.getvalue()
    out = bytearray(struct.pack("<ffI", lo, hi, len(writer)))
    out += tree_bytes
    out += entropy.encode_symbols(idx, table_log=8)
    return bytes(out)


def _decompress_plane(data: bytes, pos: int, shape, levels: int):
    if pos + 12 > len(data):
        raise TruncatedStream("flow payload truncated")
    lo, hi, nbits = struct.unpack_from("<ffI", data, pos)
    pos += 12
    nbytes = (nbits + 7) // 8
    if pos + nbytes > len(data):
        raise TruncatedStream("flow payload truncated")
    reader = BitReader(data[pos : pos + nbytes], nbits)
    tree = deserialize_tree(reader, 0, 0, shape[1], shape[0])
    pos += nbytes
    idx, pos = entropy.decode_symbols(data, pos)
    values = uniform_dequantize(idx, float(lo), float(hi), levels)
    return paint_leaf_values(tree, values), pos


def compress_flow(flow: FlowField, points_budget: int, quant_levels: int) -> bytes:
    """Encode u and v independently: tree bits + quantized leaf averages."""
    if points_budget < 1:
        raise FlowError("points budget must be >= 1")
    return _compress_plane(flow.u, points_budget, quant_levels) + _compress_plane(
        flow.v, points_budget, quant_levels
    )


def decompress_flow(data: bytes, pos: int, shape, quant_levels: int):
    """Decode a compressed flow payload; returns (FlowField, next position)."""
    u, pos = _decompress_plane(data, pos, shape, quant_levels)
    v, pos = _decompress_plane(data, pos, shape, quant_levels)
    return FlowField(u, v), pos


def flow_to_color(flow: FlowField) -> np.ndarray:
    """Color-coded flow visualization (hue = direction, saturation = magnitude).

    Returns an (h, w, 3) uint8 RGB image for debugging dumps.
    """
    mag = np.hypot(flow.u, flow.v)
    ang = np.arctan2(-flow.v, -flow.u) / np.pi  # [-1, 1]
    vmax = max(float(mag.max()), 1e-9)
    hue = (ang + 1.0) / 2.0
    sat = np.clip(mag / vmax, 0, 1)
    i = np.floor(hue * 6).astype(int) % 6
    f = hue * 6 - np.floor(hue * 6)
    p = 1 - sat
    q = 1 - f * sat
    t = 1 - (1 - f) * sat
    one = np.ones_like(sat)
    r = np.choose(i, [one, q, p, p, t, one])
    g = np.choose(i, [t, one, one, q, p, p])
    b = np.choose(i, [p, p, t, one, one, q])
    return (np.stack([r, g, b], axis=-1) * 255).astype(np.uint8)
