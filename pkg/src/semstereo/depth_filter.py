"""Geometric consistency filtering of per-view depth maps.

A depth estimate survives only when enough neighboring views independently
confirm it: the pixel backprojected to 3D must land, in each confirming
neighbor, on a valid estimate whose own depth agrees to a relative
tolerance.  Checks always run against the *unfiltered* neighbor maps, so
filtering a whole scene is order-independent: filter every map against the
originals, then swap the results in.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import ray_grid
from .scene_io import DepthMap, View

__all__ = [
    "FilterParams",
    "filter_depth_map",
    "neighbor_agreement",
    "confirmation_counts",
]


@dataclass(frozen=True)
class FilterParams:
    """Consistency thresholds: how many neighbors must agree, and how closely."""

    k: int = 2  # minimum number of confirming neighbors
    tau: float = 0.01  # relative depth agreement tolerance

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if not self.tau > 0.0:
            raise ValueError(f"tau must be positive, got {self.tau}")


def _check_shape(dm: DepthMap, view: View, role: str) -> None:
    if dm.depth.shape != (view.height, view.width):
        raise ValueError(
            f"{role} depth map shape {dm.depth.shape} does not match "
            f"view {view.id} size ({view.height}, {view.width})"
        )


def neighbor_agreement(
    ref_dm: DepthMap,
    ref_view: View,
    n_view: View,
    n_dm: DepthMap,
    tau: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-pixel agreement of the reference map with one neighbor.

    Every valid reference pixel is backprojected and reprojected into the
    neighbor; it is *confirmed* when it lands inside the neighbor image on
    a valid depth that matches the reprojected depth within ``tau``
    (relative to the neighbor's value).

    Returns ``(confirmed, pu, pv)``: a boolean (H, W) mask plus the nearest
    neighbor pixel each reference pixel landed on.  ``pu``/``pv`` are only
    meaningful where ``confirmed`` is set; elsewhere they are clamped
    placeholders.
    """
    _check_shape(ref_dm, ref_view, "reference")
    _check_shape(n_dm, n_view, "neighbor")

    rays = ray_grid(ref_view.intrinsics, ref_view.width, ref_view.height)
    X_cam = ref_dm.depth.astype(np.float64)[..., None] * rays
    # R.T @ X per pixel, written as a stacked right-multiplication
    X_world = X_cam @ ref_view.pose.R + ref_view.pose.C

    d = (X_world - n_view.pose.C) @ n_view.pose.R.T
    z = d[..., 2]
    in_front = z > 0.0
    safe_z = np.where(in_front, z, 1.0)

    # same expression as geometry.project (K @ X_cam, then divide) so both
    # paths round identically at pixel-boundary landings
    K = n_view.intrinsics
    u = (K.fx * d[..., 0] + K.skew * d[..., 1] + K.cx * z) / safe_z
    v = (K.fy * d[..., 1] + K.cy * z) / safe_z
    pu = np.floor(u + 0.5).astype(np.int64)
    pv = np.floor(v + 0.5).astype(np.int64)
    inside = (
        in_front
        & (pu >= 0)
        & (pu < n_view.width)
        & (pv >= 0)
        & (pv < n_view.height)
    )

    pu_c = np.clip(pu, 0, n_view.width - 1)
    pv_c = np.clip(pv, 0, n_view.height - 1)
    lam_n = n_dm.depth[pv_c, pu_c].astype(np.float64)
    confirmed = (
        ref_dm.valid_mask
        & inside
        & (lam_n > 0.0)
        & (np.abs(z - lam_n) <= tau * lam_n)
    )
    return confirmed, pu_c, pv_c


def confirmation_counts(
    ref_dm: DepthMap,
    ref_view: View,
    neighbors: list[tuple[View, DepthMap]],
    tau: float,
) -> np.ndarray:
    """Number of neighbors confirming each pixel, as an (H, W) int array."""
    counts = np.zeros(ref_dm.depth.shape, dtype=np.int64)
    for n_view, n_dm in neighbors:
        confirmed, _, _ = neighbor_agreement(ref_dm, ref_view, n_view, n_dm, tau)
        counts += confirmed
    return counts


def filter_depth_map(
    ref_dm: DepthMap,
    ref_view: View,
    neighbors: list[tuple[View, DepthMap]],
    params: FilterParams | None = None,
) -> DepthMap:
    """Copy of ``ref_dm`` keeping only pixels confirmed by >= k neighbors.

    Rejected pixels get zero depth and normal; their cost is kept for
    diagnostics.  Already-invalid pixels stay invalid.
    """
    params = params or FilterParams()
    _check_shape(ref_dm, ref_view, "reference")
    counts = confirmation_counts(ref_dm, ref_view, neighbors, params.tau)
    out = ref_dm.copy()
    out.invalidate(ref_dm.valid_mask & (counts < params.k))
    return out
