"""Pinhole camera geometry: back/forward projection, view angles, plane homographies.

Conventions used throughout the package:

* World frame: arbitrary right-handed metric frame (the SfM frame).
* Camera frame: x right, y down, z forward along the optical axis.
* A pose stores R (world-to-camera rotation) and C (camera center in world
  units), so ``X_cam = R @ (X_world - C)``.
* Depth is the z-coordinate in the camera frame, not the Euclidean ray
  length.  Back-projection scales ``K^-1 p`` to unit z before multiplying
  by the depth, which keeps depth-map comparisons linear in z.
* All geometry runs in 64-bit floats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BehindCameraError, DegenerateHomographyError

ROTATION_TOL = 1e-9


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole intrinsics in pixels; K is upper-triangular with unit scale."""

    fx: float
    fy: float
    cx: float
    cy: float
    skew: float = 0.0

    def __post_init__(self) -> None:
        if not (self.fx > 0.0 and self.fy > 0.0):
            raise ValueError(
                f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}"
            )

    @property
    def K(self) -> np.ndarray:
        return np.array(
            [
                [self.fx, self.skew, self.cx],
                [0.0, self.fy, self.cy],
                [0.0, 0.0, 1.0],
            ]
        )

    @property
    def K_inv(self) -> np.ndarray:
        # Closed form for the upper-triangular K; exacter than a generic inverse.
        fx, fy, s = self.fx, self.fy, self.skew
        return np.array(
            [
                [1.0 / fx, -s / (fx * fy), (s * self.cy - self.cx * fy) / (fx * fy)],
                [0.0, 1.0 / fy, -self.cy / fy],
                [0.0, 0.0, 1.0],
            ]
        )


@dataclass(frozen=True)
class Pose:
    """World-to-camera rotation R and camera center C (world units)."""

    R: np.ndarray
    C: np.ndarray

    def __post_init__(self) -> None:
        R = np.ascontiguousarray(self.R, dtype=np.float64)
        C = np.ascontiguousarray(self.C, dtype=np.float64).reshape(3)
        if R.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got shape {R.shape}")
        if np.abs(R @ R.T - np.eye(3)).max() > ROTATION_TOL:
            raise ValueError("rotation is not orthonormal within 1e-9")
        if abs(np.linalg.det(R) - 1.0) > ROTATION_TOL:
            raise ValueError("rotation determinant is not +1 within 1e-9")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "C", C)

    @property
    def principal_axis(self) -> np.ndarray:
        """Viewing direction of the optical axis in world coordinates."""
        return self.R[2]

    def world_to_cam(self, X: np.ndarray) -> np.ndarray:
        return self.R @ (np.asarray(X, dtype=np.float64) - self.C)

    def cam_to_world(self, X: np.ndarray) -> np.ndarray:
        return self.R.T @ np.asarray(X, dtype=np.float64) + self.C


@dataclass(frozen=True)
class PlaneHypothesis:
    """Slanted support plane at a pixel: z-depth plus a unit normal (camera frame).

    The normal must face the camera at the pixel the hypothesis is bound to,
    i.e. ``normal . ray < 0`` for the viewing ray through that pixel; that
    binding is checked by the operations that take a pixel.
    """

    depth: float
    normal: np.ndarray

    def __post_init__(self) -> None:
        if not self.depth > 0.0:
            raise ValueError(f"plane depth must be positive, got {self.depth}")
        n = np.ascontiguousarray(self.normal, dtype=np.float64).reshape(3)
        if abs(np.linalg.norm(n) - 1.0) > 1e-9:
            raise ValueError("plane normal must be unit length within 1e-9")
        object.__setattr__(self, "normal", n)


def pixel_ray(p, K: Intrinsics) -> np.ndarray:
    """Viewing-ray direction ``K^-1 p`` scaled to unit z (camera frame)."""
    u, v = float(p[0]), float(p[1])
    d = K.K_inv @ np.array([u, v, 1.0])
    return d / d[2]


def backproject_cam(p, depth: float, K: Intrinsics) -> np.ndarray:
    """3D point in the camera frame for pixel ``p`` at z-depth ``depth``."""
    if not depth > 0.0:
        raise ValueError(f"depth must be positive, got {depth}")
    return depth * pixel_ray(p, K)


def backproject_world(p, depth: float, K: Intrinsics, pose: Pose) -> np.ndarray:
    """3D point in the world frame: ``R^T (depth * K^-1 p) + C``."""
    return pose.cam_to_world(backproject_cam(p, depth, K))


def project(X, K: Intrinsics, pose: Pose) -> tuple[np.ndarray, float]:
    """Project a world point; returns the pixel (u, v) and its z-depth.

    Raises:
        BehindCameraError: if the point is at or behind the camera plane.
    """
    X_cam = pose.world_to_cam(X)
    z = X_cam[2]
    if not z > 0.0:
        raise BehindCameraError(f"point has non-positive depth {z}")
    q = K.K @ X_cam
    return q[:2] / z, float(z)


def view_angle(pose_i: Pose, pose_j: Pose) -> float:
    """Angle in degrees between the two cameras' principal viewing directions.

    Uses atan2(|a x b|, a . b), which is exact for parallel and antiparallel
    axes (0 and 180 degrees) and well conditioned for small angles, unlike
    acos of the dot product.
    """
    a = pose_i.principal_axis
    b = pose_j.principal_axis
    cross = float(np.linalg.norm(np.cross(a, b)))
    dot = float(np.dot(a, b))
    return math.degrees(math.atan2(cross, dot))


def ray_grid(K: Intrinsics, width: int, height: int) -> np.ndarray:
    """(H, W, 3) viewing rays through every pixel center, scaled to unit z.

    Multiplying a ray by a pixel's z-depth gives the camera-frame point, so
    dense backprojection is a single broadcast instead of a per-pixel call.
    """
    K_inv = K.K_inv
    us, vs = np.meshgrid(
        np.arange(width, dtype=np.float64),
        np.arange(height, dtype=np.float64),
    )
    rx = K_inv[0, 0] * us + K_inv[0, 1] * vs + K_inv[0, 2]
    ry = K_inv[1, 1] * vs + K_inv[1, 2]
    return np.stack([rx, ry, np.ones_like(rx)], axis=-1)


def plane_homography(
    ref: tuple[Intrinsics, Pose],
    src: tuple[Intrinsics, Pose],
    pixel,
    hyp: PlaneHypothesis,
) -> np.ndarray:
    """Homography (up to scale) mapping reference pixels on the support plane
    into the source view.

    The plane is anchored at ``pixel`` backprojected to ``hyp.depth`` with
    normal ``hyp.normal``, all in the reference camera frame.

    Raises:
        DegenerateHomographyError: if the plane passes through either camera
            center (no finite homography exists).
    """
    K_ref, pose_ref = ref
    K_src, pose_src = src
    d = pixel_ray(pixel, K_ref)
    n = hyp.normal
    # Plane equation in the reference camera frame: n . X = dist.
    dist = hyp.depth * float(n @ d)
    if abs(dist) < 1e-12 * hyp.depth:
        raise DegenerateHomographyError(
            "support plane passes through the reference camera center"
        )
    C_src_ref = pose_ref.world_to_cam(pose_src.C)
    if abs(float(n @ C_src_ref) - dist) <= 1e-12 * max(1.0, abs(dist)):
        raise DegenerateHomographyError(
            "support plane passes through the source camera center"
        )
    R_rel = pose_src.R @ pose_ref.R.T
    t_rel = pose_src.R @ (pose_ref.C - pose_src.C)
    return K_src.K @ (R_rel + np.outer(t_rel, n) / dist) @ K_ref.K_inv
