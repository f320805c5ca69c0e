"""Compiled inner loops for plane-hypothesis cost evaluation and sweeps.

Everything here operates on packed arrays (no Python objects) so numba can
compile it; the public API in ``patchmatch`` builds the packs.  Conventions
shared with the rest of the package:

* Hypothesis state lives in float32 arrays (depth (H,W), normal (H,W,3),
  cost (H,W)); candidates are cast to float32 *before* evaluation so the
  stored state is exactly the state that was scored.
* Per-target pack: ``A = K_t R_rel``, ``bvec = K_t t_rel``, ``c_rel`` the
  target center in the reference camera frame; the plane homography is
  ``(A + bvec n^T / dist) K_ref^-1`` with ``dist = depth * (n . ray)``.
* A per-view cost is 1 - ZNCC in [0, 2]; zero-variance windows score
  ``undef``, any warped sample outside the target scores ``cap``; the
  aggregated cost is the mean over targets.

The propagation sweep is sequential by definition (left/top neighbors must
already hold their updated planes when a pixel is visited), so this module
is also the performance-critical path.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# absolute variance floor below which a window counts as constant: float32
# images quantized to 1/255 have per-window variance >= ~1e-5 when textured,
# while accumulation noise on a truly constant window stays below ~1e-12
VAR_EPS = 1e-11


@njit(cache=True, nogil=True)
def _bilinear(img, h, w, x, y):
    """Sample img at (x, y); returns (value, ok). ok=False outside [0,w-1]x[0,h-1]."""
    if x < 0.0 or y < 0.0 or x > w - 1.0 or y > h - 1.0:
        return 0.0, False
    x0 = int(np.floor(x))
    y0 = int(np.floor(y))
    if x0 > w - 2:
        x0 = w - 2
    if y0 > h - 2:
        y0 = h - 2
    fx = x - x0
    fy = y - y0
    v00 = img[y0, x0]
    v10 = img[y0, x0 + 1]
    v01 = img[y0 + 1, x0]
    v11 = img[y0 + 1, x0 + 1]
    top = v00 * (1.0 - fx) + v10 * fx
    bot = v01 * (1.0 - fx) + v11 * fx
    return top * (1.0 - fy) + bot * fy, True


@njit(cache=True, nogil=True)
def hyp_cost(
    px,
    py,
    depth,
    nx,
    ny,
    nz,
    ref_img,
    tgt_imgs,
    tgt_h,
    tgt_w,
    A,
    bvec,
    c_rel,
    Krinv,
    w,
    cap,
    undef,
):
    """Aggregated matching cost of one plane hypothesis at pixel (px, py).

    The reference window is clamped at image borders (replicated samples),
    and the *clamped* coordinates are warped, so border pixels remain
    matchable instead of automatically leaving the target image.
    """
    height, width = ref_img.shape
    n_targets = tgt_imgs.shape[0]

    # viewing ray with unit z
    fpx = float(px)
    fpy = float(py)
    rx = Krinv[0, 0] * fpx + Krinv[0, 1] * fpy + Krinv[0, 2]
    ry = Krinv[1, 1] * fpy + Krinv[1, 2]
    ndotr = nx * rx + ny * ry + nz
    dist = depth * ndotr
    scale = depth if depth > 1.0 else 1.0
    if np.abs(dist) < 1e-12 * scale:
        return cap  # plane (numerically) through the reference center

    total = 0.0
    for ti in range(n_targets):
        # plane through the target center: homography undefined
        cdot = (
            nx * c_rel[ti, 0] + ny * c_rel[ti, 1] + nz * c_rel[ti, 2] - dist
        )
        lim = np.abs(dist) if np.abs(dist) > 1.0 else 1.0
        if np.abs(cdot) <= 1e-12 * lim:
            total += cap
            continue

        # H = (A + bvec n^T / dist) @ Krinv
        h00 = A[ti, 0, 0] + bvec[ti, 0] * nx / dist
        h01 = A[ti, 0, 1] + bvec[ti, 0] * ny / dist
        h02 = A[ti, 0, 2] + bvec[ti, 0] * nz / dist
        h10 = A[ti, 1, 0] + bvec[ti, 1] * nx / dist
        h11 = A[ti, 1, 1] + bvec[ti, 1] * ny / dist
        h12 = A[ti, 1, 2] + bvec[ti, 1] * nz / dist
        h20 = A[ti, 2, 0] + bvec[ti, 2] * nx / dist
        h21 = A[ti, 2, 1] + bvec[ti, 2] * ny / dist
        h22 = A[ti, 2, 2] + bvec[ti, 2] * nz / dist
        g00 = h00 * Krinv[0, 0]
        g01 = h00 * Krinv[0, 1] + h01 * Krinv[1, 1]
        g02 = h00 * Krinv[0, 2] + h01 * Krinv[1, 2] + h02
        g10 = h10 * Krinv[0, 0]
        g11 = h10 * Krinv[0, 1] + h11 * Krinv[1, 1]
        g12 = h10 * Krinv[0, 2] + h11 * Krinv[1, 2] + h12
        g20 = h20 * Krinv[0, 0]
        g21 = h20 * Krinv[0, 1] + h21 * Krinv[1, 1]
        g22 = h20 * Krinv[0, 2] + h21 * Krinv[1, 2] + h22

        th = tgt_h[ti]
        tw = tgt_w[ti]
        img = tgt_imgs[ti]

        sa = 0.0
        sb = 0.0
        saa = 0.0
        sbb = 0.0
        sab = 0.0
        count = 0.0
        ok = True
        for dy in range(-w, w + 1):
            if not ok:
                break
            qy = py + dy
            if qy < 0:
                qy = 0
            elif qy > height - 1:
                qy = height - 1
            for dx in range(-w, w + 1):
                qx = px + dx
                if qx < 0:
                    qx = 0
                elif qx > width - 1:
                    qx = width - 1
                # promote before accumulating so a*a rounds like b*b does
                a = np.float64(ref_img[qy, qx])
                wz = g20 * qx + g21 * qy + g22
                if np.abs(wz) < 1e-15:
                    ok = False
                    break
                wx = (g00 * qx + g01 * qy + g02) / wz
                wy = (g10 * qx + g11 * qy + g12) / wz
                b, inside = _bilinear(img, th, tw, wx, wy)
                if not inside:
                    ok = False
                    break
                sa += a
                sb += b
                saa += a * a
                sbb += b * b
                sab += a * b
                count += 1.0
        if not ok:
            total += cap
            continue
        mean_a = sa / count
        mean_b = sb / count
        var_a = saa / count - mean_a * mean_a
        var_b = sbb / count - mean_b * mean_b
        if var_a <= VAR_EPS or var_b <= VAR_EPS:
            total += undef
            continue
        z = (sab / count - mean_a * mean_b) / np.sqrt(var_a * var_b)
        if z > 1.0:
            z = 1.0
        elif z < -1.0:
            z = -1.0
        total += 1.0 - z
    return total / n_targets


@njit(cache=True, nogil=True)
def eval_all(
    depth, normal, cost, ref_img, tgt_imgs, tgt_h, tgt_w, A, bvec, c_rel, Krinv,
    w, cap, undef,
):
    """Score every pixel's stored hypothesis into the cost plane."""
    height, width = ref_img.shape
    for py in range(height):
        for px in range(width):
            cost[py, px] = np.float32(
                hyp_cost(
                    px,
                    py,
                    float(depth[py, px]),
                    float(normal[py, px, 0]),
                    float(normal[py, px, 1]),
                    float(normal[py, px, 2]),
                    ref_img,
                    tgt_imgs,
                    tgt_h,
                    tgt_w,
                    A,
                    bvec,
                    c_rel,
                    Krinv,
                    w,
                    cap,
                    undef,
                )
            )


@njit(cache=True, nogil=True)
def _try_adopt(
    px, py, cand_d, cand_nx, cand_ny, cand_nz,
    depth, normal, cost,
    ref_img, tgt_imgs, tgt_h, tgt_w, A, bvec, c_rel, Krinv, w, cap, undef,
):
    """Evaluate a float32-cast candidate; adopt on strictly lower cost."""
    c = hyp_cost(
        px, py,
        float(cand_d), float(cand_nx), float(cand_ny), float(cand_nz),
        ref_img, tgt_imgs, tgt_h, tgt_w, A, bvec, c_rel, Krinv, w, cap, undef,
    )
    c32 = np.float32(c)
    if c32 < cost[py, px]:
        depth[py, px] = cand_d
        normal[py, px, 0] = cand_nx
        normal[py, px, 1] = cand_ny
        normal[py, px, 2] = cand_nz
        cost[py, px] = c32


@njit(cache=True, nogil=True)
def sweep(
    depth,
    normal,
    cost,
    ref_img,
    tgt_imgs,
    tgt_h,
    tgt_w,
    A,
    bvec,
    c_rel,
    Krinv,
    w,
    cap,
    undef,
    d_min,
    d_max,
    reverse,
    depth_draws,
    mag_draws,
    dir_draws,
    fronto_only,
):
    """One propagation+refinement pass over the whole depth map, in place.

    ``reverse`` False: row-major top-left to bottom-right, candidates from
    the left and top neighbors.  ``reverse`` True: mirrored traversal with
    right and bottom neighbors.  A neighbor's *plane* is the candidate: its
    depth at this pixel is re-derived from the plane equation, and planes
    that leave [d_min, d_max] here or face away from this pixel's ray are
    skipped.  Refinement then tries ``depth_draws.shape[2]`` perturbed
    hypotheses with halving depth radii and normal angles.
    """
    height, width = ref_img.shape
    samples = depth_draws.shape[2]
    step = -1 if reverse else 1
    y_start = height - 1 if reverse else 0
    x_start = width - 1 if reverse else 0

    for py in range(y_start, height - 1 - y_start + step, step):
        for px in range(x_start, width - 1 - x_start + step, step):
            rx = Krinv[0, 0] * px + Krinv[0, 1] * py + Krinv[0, 2]
            ry = Krinv[1, 1] * py + Krinv[1, 2]

            # -- spatial propagation from the two causal neighbors
            for k in range(2):
                if k == 0:
                    qx, qy = px - step, py
                else:
                    qx, qy = px, py - step
                if qx < 0 or qx >= width or qy < 0 or qy >= height:
                    continue
                nd = float(depth[qy, qx])
                if nd <= 0.0:
                    continue
                nnx = float(normal[qy, qx, 0])
                nny = float(normal[qy, qx, 1])
                nnz = float(normal[qy, qx, 2])
                # neighbor plane evaluated on this pixel's ray
                nrx = Krinv[0, 0] * qx + Krinv[0, 1] * qy + Krinv[0, 2]
                nry = Krinv[1, 1] * qy + Krinv[1, 2]
                dist_n = nd * (nnx * nrx + nny * nry + nnz)
                denom = nnx * rx + nny * ry + nnz
                if denom >= -1e-15:
                    continue  # plane faces away along this ray
                lam = dist_n / denom
                if lam < d_min or lam > d_max:
                    continue
                _try_adopt(
                    px, py, np.float32(lam), np.float32(nnx), np.float32(nny),
                    np.float32(nnz), depth, normal, cost, ref_img, tgt_imgs,
                    tgt_h, tgt_w, A, bvec, c_rel, Krinv, w, cap, undef,
                )

            # -- random refinement with geometrically shrinking radii
            radius = 0.5 * (d_max - d_min)
            angle = np.pi / 4.0
            for s in range(samples):
                cur_d = float(depth[py, px])
                cx = float(normal[py, px, 0])
                cy = float(normal[py, px, 1])
                cz = float(normal[py, px, 2])
                cand = cur_d + radius * depth_draws[py, px, s]
                if cand < d_min:
                    cand = d_min
                elif cand > d_max:
                    cand = d_max
                if fronto_only:
                    nnx, nny, nnz = cx, cy, cz
                else:
                    # rotate the normal by angle*mag toward a random tangent
                    gx = dir_draws[py, px, s, 0]
                    gy = dir_draws[py, px, s, 1]
                    gz = dir_draws[py, px, s, 2]
                    dot = gx * cx + gy * cy + gz * cz
                    tx = gx - dot * cx
                    ty = gy - dot * cy
                    tz = gz - dot * cz
                    tn = np.sqrt(tx * tx + ty * ty + tz * tz)
                    if tn < 1e-12:
                        nnx, nny, nnz = cx, cy, cz
                    else:
                        t = np.tan(angle * mag_draws[py, px, s]) / tn
                        nnx = cx + tx * t
                        nny = cy + ty * t
                        nnz = cz + tz * t
                        nn = np.sqrt(nnx * nnx + nny * nny + nnz * nnz)
                        nnx /= nn
                        nny /= nn
                        nnz /= nn
                    if nnx * rx + nny * ry + nnz >= 0.0:
                        nnx, nny, nnz = -nnx, -nny, -nnz
                    if nnx * rx + nny * ry + nnz >= 0.0:
                        nnx, nny, nnz = cx, cy, cz  # ray-orthogonal: keep
                _try_adopt(
                    px, py, np.float32(cand), np.float32(nnx), np.float32(nny),
                    np.float32(nnz), depth, normal, cost, ref_img, tgt_imgs,
                    tgt_h, tgt_w, A, bvec, c_rel, Krinv, w, cap, undef,
                )
                radius *= 0.5
                angle *= 0.5
