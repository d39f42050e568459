"""Global homogeneous diffusion inpainting.

Reconstructs a plane from sparse known pixels by solving the discrete
inpainting problem with the 5-point Laplacian under reflecting boundary
conditions: known pixels keep their values, all others satisfy the
discrete Laplace equation. The solver is a cascadic coarse-to-fine
conjugate gradient scheme: solve on a subsampled pyramid level, prolong
bilinearly, refine on the next finer level.
"""

from __future__ import annotations

import numpy as np

COARSEST_SIZE = 16
LEVEL_TOL = 1e-4  # relative residual at intermediate pyramid levels


class InpaintingError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    """Solver failed to reach the requested tolerance within max_iter."""


def laplacian(u: np.ndarray) -> np.ndarray:
    """5-point discrete Laplacian with reflecting boundaries.

    Reflected neighbors equal the boundary pixel itself, so boundary
    terms drop out; equivalently only in-bounds neighbors contribute
    (u_nb - u). Row sums of the implied matrix are zero.
    """
    out = u * -4.0
    out[1:, :] += u[:-1, :]
    out[0, :] += u[0, :]
    out[:-1, :] += u[1:, :]
    out[-1, :] += u[-1, :]
    out[:, 1:] += u[:, :-1]
    out[:, 0] += u[:, 0]
    out[:, :-1] += u[:, 1:]
    out[:, -1] += u[:, -1]
    return out


def apply_inpainting_operator(u: np.ndarray, mask: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Residual of the inpainting equation: u - f on the mask, Laplacian off it."""
    if u.shape != f.shape or u.shape != mask.shape:
        raise InpaintingError("plane/mask shape mismatch")
    if not mask.any():
        raise InpaintingError("empty inpainting mask")
    return np.where(mask, u - f, laplacian(u))


def _masked_cg(f, mask, x0, tol, max_iter, denom=None):
    """CG on the interior (non-mask) unknowns with Dirichlet mask values.

    Eliminating the known pixels leaves the SPD system
    (-L)_II w = (L u_D)_I with u_D = f on the mask and 0 elsewhere.
    Returns (solution plane, iterations used).
    """
    # full-plane arithmetic with zeros held at mask pixels avoids the
    # gather/scatter of interior unknowns on every iteration
    interior = (~mask).astype(np.float64)
    u_d = np.where(mask, f, 0.0)
    b = laplacian(u_d) * interior

    def matvec(w_full):
        return -laplacian(w_full) * interior

    x = x0 * interior
    r = b - matvec(x)
    b_norm = float(np.linalg.norm(b)) if denom is None else denom
    if b_norm == 0.0:
        return u_d + x, 0
    p = r.copy()
    rs = float(np.vdot(r, r))
    it = 0
    for it in range(1, max_iter + 1):
        ap = matvec(p)
        denom = float(np.vdot(p, ap))
        if denom <= 0.0 or rs < 1e-300:
            break
        alpha = rs / denom
        x += alpha * p
        r -= alpha * ap
        rs_new = float(np.vdot(r, r))
        if np.sqrt(rs_new) <= tol * b_norm:
            rs = rs_new
            break
        p = r + (rs_new / rs) * p
        rs = rs_new
    return u_d + x, it


def _restrict(values: np.ndarray) -> np.ndarray:
    """2x2 block average with ceiling halving (odd trailing blocks shrink)."""
    h, w = values.shape
    idx_r = np.arange(0, h, 2)
    idx_c = np.arange(0, w, 2)
    sums = np.add.reduceat(np.add.reduceat(values, idx_r, axis=0), idx_c, axis=1)
    ones = np.ones_like(values)
    counts = np.add.reduceat(np.add.reduceat(ones, idx_r, axis=0), idx_c, axis=1)
    return sums / counts


def build_pyramid(f: np.ndarray, mask: np.ndarray):
    """Coarse-to-fine pyramid of (plane, mask) pairs, finest first.

    Dimensions halve (ceiling) until max(w, h) <= 16. A coarse mask
    pixel is set iff any of its 2x2 children is set; its value is the
    mean of the set children, other pixels are plain block averages.
    """
    levels = [(np.asarray(f, dtype=np.float64), np.asarray(mask, dtype=bool))]
    while max(levels[-1][0].shape) > COARSEST_SIZE:
        fv, mv = levels[-1]
        h, w = fv.shape
        idx_r = np.arange(0, h, 2)
        idx_c = np.arange(0, w, 2)

        def block_sum(a):
            return np.add.reduceat(np.add.reduceat(a, idx_r, axis=0), idx_c, axis=1)

        set_cnt = block_sum(mv.astype(np.float64))
        set_sum = block_sum(np.where(mv, fv, 0.0))
        avg_all = _restrict(fv)
        coarse_mask = set_cnt > 0
        coarse_f = np.where(coarse_mask, set_sum / np.maximum(set_cnt, 1.0), avg_all)
        levels.append((coarse_f, coarse_mask))
    return levels


def _prolong(coarse: np.ndarray, shape) -> np.ndarray:
    """Bilinear interpolation of a coarse plane to the given fine shape."""
    h, w = shape
    ch, cw = coarse.shape
    if (ch, cw) == (h, w):
        return coarse.copy()
    # fine pixel centers mapped into coarse pixel-center coordinates
    ys = (np.arange(h) + 0.5) * (ch / h) - 0.5
    xs = (np.arange(w) + 0.5) * (cw / w) - 0.5
    ys = np.clip(ys, 0, ch - 1)
    xs = np.clip(xs, 0, cw - 1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, ch - 1)
    x1 = np.minimum(x0 + 1, cw - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    c00 = coarse[np.ix_(y0, x0)]
    c01 = coarse[np.ix_(y0, x1)]
    c10 = coarse[np.ix_(y1, x0)]
    c11 = coarse[np.ix_(y1, x1)]
    return (1 - wy) * ((1 - wx) * c00 + wx * c01) + wy * ((1 - wx) * c10 + wx * c11)


def solve_homogeneous(
    f: np.ndarray,
    mask: np.ndarray,
    tol: float = 1e-6,
    max_iter: int = 10000,
    strict: bool = True,
    stats: dict | None = None,
):
    """Cascadic coarse-to-fine CG solve of homogeneous diffusion inpainting.

    Returns u with the relative residual of the inpainting equation
    (L2, against ||f restricted to mask||) at most `tol`. With
    strict=False the iteration budget is simply exhausted without a
    convergence check, which makes decode-side work deterministic and
    time-bounded. `stats`, if given, collects per-level iteration counts.
    """
    f = np.asarray(f, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if f.shape != mask.shape:
        raise InpaintingError("plane/mask shape mismatch")
    if not mask.any():
        raise InpaintingError("empty inpainting mask")
    if strict and tol <= 0:
        raise InpaintingError("tol must be positive")

    levels = build_pyramid(f, mask)
    u = None
    iters = []
    for lvl in range(len(levels) - 1, -1, -1):
        fv, mv = levels[lvl]
        if u is None:
            x0 = np.full_like(fv, float(fv[mv].mean()))
        else:
            x0 = _prolong(u, fv.shape)
        if mv.all():
            u = fv.copy()
            iters.append((fv.size, 0))
            continue
        level_tol = tol if lvl == 0 else max(LEVEL_TOL, tol)
        # The finest level stops against the contract denominator
        # ||f restricted to mask|| rather than the CG right-hand side.
        denom = float(np.linalg.norm(fv[mv])) if lvl == 0 else None
        if denom == 0.0:
            denom = None
        u, it = _masked_cg(fv, mv, x0, level_tol, max_iter, denom=denom)
        iters.append((fv.size, it))
    if stats is not None:
        stats["level_iterations"] = iters

    if strict:
        res = apply_inpainting_operator(u, mask, f)
        denom = float(np.linalg.norm(f[mask]))
        rel = float(np.linalg.norm(res)) / denom if denom > 0 else float(np.linalg.norm(res))
        if denom > 0 and rel > tol:
            raise ConvergenceError(f"relative residual {rel:.3e} > tol {tol:.3e}")
    return u


def solve_dense(f: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Direct dense solve of the inpainting system (oracle, small planes only)."""
    f = np.asarray(f, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    h, w = f.shape
    n = h * w
    if n > 64 * 64:
        raise InpaintingError("dense solve limited to small planes")
    lap = dense_laplacian(w, h)
    m = mask.ravel().astype(np.float64)
    # M(u - f) - (I - M) A u = 0 with A = -L  =>  (M + (I - M) L) u = M f
    system = np.diag(m) + (np.eye(n) - np.diag(m)) @ lap
    rhs = m * f.ravel()
    u = np.linalg.solve(system, rhs)
    return u.reshape(h, w)


def dense_laplacian(width: int, height: int) -> np.ndarray:
    """Dense 5-point reflecting-boundary Laplacian matrix (row-major pixels)."""
    n = width * height
    lap = np.zeros((n, n))
    for yy in range(height):
        for xx in range(width):
            i = yy * width + xx
            for dy, dx in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                ny, nx = yy + dy, xx + dx
                if 0 <= ny < height and 0 <= nx < width:
                    lap[i, ny * width + nx] += 1.0
                    lap[i, i] -= 1.0
    return lap
