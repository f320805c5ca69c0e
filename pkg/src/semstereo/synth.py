"""Synthetic scene generator with analytically known depth and labels.

Scenes are built from textured axis-aligned rectangles ray-cast from a toed-in
camera arc.  Every view gets an intensity image, a pixel-aligned label map and
a ground-truth z-depth map, so downstream stages can be checked against exact
expected values instead of visual inspection.

Textures are procedural and hash-based (no stored assets, bit-reproducible):

* ``checker``: each period-sized cell gets an independent pseudo-random
  intensity.  Unlike a two-tone checkerboard this has no repeating period,
  so window matching cannot lock onto the wrong lobe.
* ``noise``: smooth value noise (bilinear interpolation of hashed lattice
  values).
* ``flat``: a constant intensity; deliberately unmatchable (zero variance)
  for exercising undefined-correlation paths, e.g. an untextured sky.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyViewError, SceneFormatError
from .geometry import Intrinsics, Pose, backproject_world, project
from .scene_io import (
    UNLABELED,
    ClassTable,
    DepthMap,
    Scene,
    SparsePoint,
    View,
    write_depthmap,
    write_pgm,
)

# in-plane coordinate axes for each rectangle normal axis
_PLANE_AXES = {"x": (1, 2), "y": (0, 2), "z": (0, 1)}


def _hash01(ix: np.ndarray, iy: np.ndarray, seed: int) -> np.ndarray:
    """Deterministic [0, 1) value per integer lattice cell (splitmix-style).

    uint64 wraparound is the point of the mixing, so overflow warnings are
    suppressed locally.
    """
    with np.errstate(over="ignore"):
        h = ix.astype(np.int64).astype(np.uint64) * np.uint64(0x9E3779B97F4A7C15)
        h ^= iy.astype(np.int64).astype(np.uint64) * np.uint64(0xC2B2AE3D27D4EB4F)
        h ^= np.uint64(seed & 0xFFFFFFFFFFFFFFFF) * np.uint64(0xD6E8FEB86659FD93)
        h ^= h >> np.uint64(33)
        h *= np.uint64(0xFF51AFD7ED558CCD)
        h ^= h >> np.uint64(33)
        h *= np.uint64(0xC4CEB9FE1A85EC53)
        h ^= h >> np.uint64(33)
    return h.astype(np.float64) / float(2**64)


@dataclass(frozen=True)
class Texture:
    """Procedural surface intensity; ``period`` is in world units."""

    kind: str = "checker"  # checker | noise | flat
    period: float = 1.0
    seed: int = 0
    level: float = 0.5  # intensity of the flat kind

    def __post_init__(self) -> None:
        if self.kind not in ("checker", "noise", "flat"):
            raise SceneFormatError(f"unknown texture kind {self.kind!r}")
        if self.kind != "flat" and self.period <= 0:
            raise SceneFormatError(f"texture period must be positive: {self.period}")

    def sample(self, p: np.ndarray, q: np.ndarray) -> np.ndarray:
        """Intensity in [0, 1] at in-plane world coordinates (p, q)."""
        if self.kind == "flat":
            return np.full_like(p, self.level, dtype=np.float64)
        gp = p / self.period
        gq = q / self.period
        if self.kind == "checker":
            v = _hash01(np.floor(gp), np.floor(gq), self.seed)
            return 0.1 + 0.8 * v
        # value noise: smoothstep-weighted bilinear blend of lattice hashes
        i0, j0 = np.floor(gp), np.floor(gq)
        fp, fq = gp - i0, gq - j0
        wp = fp * fp * (3.0 - 2.0 * fp)
        wq = fq * fq * (3.0 - 2.0 * fq)
        v00 = _hash01(i0, j0, self.seed)
        v10 = _hash01(i0 + 1, j0, self.seed)
        v01 = _hash01(i0, j0 + 1, self.seed)
        v11 = _hash01(i0 + 1, j0 + 1, self.seed)
        top = v00 * (1 - wp) + v10 * wp
        bot = v01 * (1 - wp) + v11 * wp
        return 0.1 + 0.8 * (top * (1 - wq) + bot * wq)


@dataclass(frozen=True)
class Rect:
    """Axis-aligned textured rectangle: the plane ``coord[axis] = offset``.

    ``holes`` lists in-plane ((u_lo, u_hi), (v_lo, v_hi)) cutouts that rays
    pass through, e.g. a wall opening in front of an inset window.
    """

    axis: str
    offset: float
    u_range: tuple[float, float]
    v_range: tuple[float, float]
    class_id: int
    texture: Texture = field(default_factory=Texture)
    holes: tuple = ()

    def __post_init__(self) -> None:
        if self.axis not in _PLANE_AXES:
            raise SceneFormatError(f"rect axis must be x, y or z, got {self.axis!r}")
        if not (self.u_range[0] < self.u_range[1] and self.v_range[0] < self.v_range[1]):
            raise SceneFormatError(
                f"degenerate rect extents u={self.u_range} v={self.v_range}"
            )

    def covers(self, p: np.ndarray, q: np.ndarray) -> np.ndarray:
        inside = (
            (p >= self.u_range[0])
            & (p <= self.u_range[1])
            & (q >= self.v_range[0])
            & (q <= self.v_range[1])
        )
        for (ulo, uhi), (vlo, vhi) in self.holes:
            inside &= ~((p >= ulo) & (p <= uhi) & (q >= vlo) & (q <= vhi))
        return inside


@dataclass(frozen=True)
class CameraArc:
    """Toed-in cameras on a circular arc around ``look_at`` (in the y=0 plane
    of the look-at point).  ``span_deg`` is the full angular spread; the arc
    is centered at ``center_deg`` (0 = straight down the -z approach)."""

    count: int
    radius: float
    look_at: tuple[float, float, float]
    focal: float
    width: int
    height: int
    span_deg: float = 24.0
    center_deg: float = 0.0

    def __post_init__(self) -> None:
        if self.count < 1:
            raise SceneFormatError(f"camera count must be >= 1, got {self.count}")
        if self.radius <= 0 or self.focal <= 0:
            raise SceneFormatError("camera radius and focal must be positive")
        if self.width < 8 or self.height < 8:
            raise SceneFormatError("image size must be at least 8x8")

    def angles_deg(self) -> list[float]:
        if self.count == 1:
            return [self.center_deg]
        return [
            self.center_deg + self.span_deg * (i / (self.count - 1) - 0.5)
            for i in range(self.count)
        ]

    def cameras(self) -> list[tuple[Intrinsics, Pose]]:
        intr = Intrinsics(
            fx=self.focal,
            fy=self.focal,
            cx=(self.width - 1) / 2.0,
            cy=(self.height - 1) / 2.0,
        )
        target = np.asarray(self.look_at, dtype=np.float64)
        out = []
        for deg in self.angles_deg():
            phi = math.radians(deg)
            C = target + self.radius * np.array(
                [math.sin(phi), 0.0, -math.cos(phi)]
            )
            forward = target - C
            forward /= np.linalg.norm(forward)
            right = np.cross([0.0, 1.0, 0.0], forward)
            right /= np.linalg.norm(right)
            down = np.cross(forward, right)
            out.append((intr, Pose(np.stack([right, down, forward]), C)))
        return out


@dataclass(frozen=True)
class SynthSpec:
    arc: CameraArc
    rects: tuple[Rect, ...]
    sparse_count: int = 40
    seed: int = 0
    classes: ClassTable = field(default_factory=ClassTable.default)

    def validate(self, window_px: int = 7) -> None:
        """Reject layouts that would make matching vacuous.

        Procedural textures must land in [2, window] projected pixels so the
        correlation window always straddles intensity changes; ``flat`` is
        exempt (its whole point is zero variance).
        """
        if not self.rects:
            raise SceneFormatError("layout has no rectangles")
        for i, rect in enumerate(self.rects):
            if rect.class_id != UNLABELED and rect.class_id not in self.classes:
                raise SceneFormatError(
                    f"rect {i}: class id {rect.class_id} not in the class table"
                )
            tex = rect.texture
            if tex.kind == "flat":
                continue
            period_px = tex.period * self.arc.focal / self.arc.radius
            if not 2.0 <= period_px <= float(window_px):
                raise SceneFormatError(
                    f"rect {i}: texture period projects to {period_px:.2f} px, "
                    f"outside [2, {window_px}]"
                )


def render_view(
    intr: Intrinsics, pose: Pose, width: int, height: int, rects
) -> tuple[np.ndarray, np.ndarray, DepthMap]:
    """Ray-cast one camera against the layout (nearest hit per pixel).

    Returns (image float32 [0,1], labels uint8, ground-truth DepthMap).
    Depth is the z-coordinate in the camera frame; the ground-truth normal
    is the rectangle's camera-facing normal rotated into the camera frame;
    ground-truth cost is 0.
    """
    us, vs = np.meshgrid(
        np.arange(width, dtype=np.float64), np.arange(height, dtype=np.float64)
    )
    K_inv = intr.K_inv
    # ray directions with unit z in the camera frame -> world frame
    dx = K_inv[0, 0] * us + K_inv[0, 1] * vs + K_inv[0, 2]
    dy = K_inv[1, 1] * vs + K_inv[1, 2]
    dirs_cam = np.stack([dx, dy, np.ones_like(dx)], axis=-1)
    dirs_world = dirs_cam @ pose.R  # row vectors times R == R^T applied

    best_t = np.full((height, width), np.inf)
    best_rect = np.full((height, width), -1, dtype=np.int32)
    for ri, rect in enumerate(rects):
        ax = "xyz".index(rect.axis)
        denom = dirs_world[:, :, ax]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (rect.offset - pose.C[ax]) / denom
        pu, qv = _PLANE_AXES[rect.axis]
        p = pose.C[pu] + t * dirs_world[:, :, pu]
        q = pose.C[qv] + t * dirs_world[:, :, qv]
        hit = np.isfinite(t) & (t > 1e-9) & rect.covers(p, q)
        closer = hit & (t < best_t)
        best_t[closer] = t[closer]
        best_rect[closer] = ri

    image = np.zeros((height, width), dtype=np.float32)
    labels = np.full((height, width), UNLABELED, dtype=np.uint8)
    depth = np.zeros((height, width), dtype=np.float32)
    normal = np.zeros((height, width, 3), dtype=np.float32)
    for ri, rect in enumerate(rects):
        mask = best_rect == ri
        if not mask.any():
            continue
        ax = "xyz".index(rect.axis)
        pu, qv = _PLANE_AXES[rect.axis]
        t = best_t[mask]
        p = pose.C[pu] + t * dirs_world[:, :, pu][mask]
        q = pose.C[qv] + t * dirs_world[:, :, qv][mask]
        image[mask] = rect.texture.sample(p, q).astype(np.float32)
        labels[mask] = rect.class_id
        depth[mask] = t.astype(np.float32)
        n_world = np.zeros(3)
        n_world[ax] = -math.copysign(1.0, rect.offset - pose.C[ax])
        normal[mask] = (pose.R @ n_world).astype(np.float32)

    return image, labels, DepthMap(depth, normal, np.zeros((height, width), np.float32))


def _sparse_points(spec: SynthSpec, rendered: list, cameras) -> list[dict]:
    """Jittered-grid surface samples visible (unoccluded) in >= 2 views."""
    width, height = spec.arc.width, spec.arc.height
    step = max(8, min(width, height) // 6)
    accepted: list[dict] = []
    seen: set[tuple] = set()
    for vid, (_, _, gt) in enumerate(rendered):
        intr, pose = cameras[vid]
        for gy in range(step // 2, height, step):
            for gx in range(step // 2, width, step):
                jx = _hash01(np.int64(gx), np.int64(gy), spec.seed + vid)[()]
                jy = _hash01(np.int64(gy), np.int64(gx), spec.seed * 2 + vid + 1)[()]
                px = min(width - 1, gx + int(jx * step) - step // 2)
                py = min(height - 1, gy + int(jy * step) - step // 2)
                d = float(gt.depth[py, px])
                if d <= 0.0:
                    continue
                X = backproject_world((float(px), float(py)), d, intr, pose)
                vis = []
                for wid, (_, _, gt_w) in enumerate(rendered):
                    intr_w, pose_w = cameras[wid]
                    try:
                        (u, v), lam = project(X, intr_w, pose_w)
                    except ValueError:
                        continue
                    # the continuous projection must itself be in bounds, not
                    # just its rounding: the manifest validator checks it too
                    if not (0.0 <= u < width and 0.0 <= v < height):
                        continue
                    iu, iv = int(math.floor(u + 0.5)), int(math.floor(v + 0.5))
                    iu, iv = min(iu, width - 1), min(iv, height - 1)
                    d_w = float(gt_w.depth[iv, iu])
                    if d_w > 0.0 and abs(lam - d_w) / d_w <= 0.02:
                        vis.append(wid)
                if len(vis) < 2:
                    continue
                key = tuple(np.round(X, 4))
                if key in seen:
                    continue
                seen.add(key)
                accepted.append({"xyz": [float(x) for x in X], "views": vis})
                if len(accepted) >= spec.sparse_count:
                    return accepted
    return accepted


def generate_scene(spec: SynthSpec, out_dir) -> Path:
    """Render all views, write rasters, ground truth and the manifest.

    Returns the manifest path.  Raises if any camera sees no geometry at all.
    """
    spec.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cameras = spec.arc.cameras()

    rendered = []
    for vid, (intr, pose) in enumerate(cameras):
        image, labels, gt = render_view(
            intr, pose, spec.arc.width, spec.arc.height, spec.rects
        )
        if not gt.valid_mask.any():
            raise EmptyViewError(f"camera {vid} sees none of the layout")
        rendered.append((image, labels, gt))

    view_entries = []
    for vid, (intr, pose) in enumerate(cameras):
        image, labels, gt = rendered[vid]
        write_pgm(out_dir / f"im_{vid}.pgm", image)
        write_pgm(out_dir / f"labels_{vid}.pgm", labels)
        write_depthmap(out_dir / f"gt_{vid}.dmap", gt)
        view_entries.append(
            {
                "id": vid,
                "image": f"im_{vid}.pgm",
                "labels": f"labels_{vid}.pgm",
                "width": spec.arc.width,
                "height": spec.arc.height,
                "fx": intr.fx,
                "fy": intr.fy,
                "cx": intr.cx,
                "cy": intr.cy,
                "skew": 0.0,
                "R": [float(x) for x in pose.R.ravel()],
                "C": [float(x) for x in pose.C],
            }
        )

    manifest = {
        "views": view_entries,
        "points": _sparse_points(spec, rendered, cameras),
        "classes": [
            {"id": e.id, "name": e.name, "rgb": list(e.rgb)} for e in spec.classes
        ],
    }
    path = out_dir / "scene.json"
    path.write_text(json.dumps(manifest, indent=1))
    return path


def ground_truth_depthmaps(scene_dir, scene: Scene) -> dict[int, DepthMap]:
    """Load the gt_<id>.dmap files the generator wrote next to the manifest."""
    from .scene_io import read_depthmap

    return {
        v.id: read_depthmap(Path(scene_dir) / f"gt_{v.id}.dmap") for v in scene.views
    }


# ---------------------------------------------------------------------------
# JSON spec mirror (CLI `synth --spec file.json`)


def spec_from_json(data: dict) -> SynthSpec:
    try:
        arc = CameraArc(
            count=int(data["arc"]["count"]),
            radius=float(data["arc"]["radius"]),
            look_at=tuple(float(x) for x in data["arc"]["look_at"]),
            focal=float(data["arc"]["focal"]),
            width=int(data["arc"]["width"]),
            height=int(data["arc"]["height"]),
            span_deg=float(data["arc"].get("span_deg", 24.0)),
            center_deg=float(data["arc"].get("center_deg", 0.0)),
        )
        rects = []
        for r in data["rects"]:
            tex = r.get("texture", {})
            rects.append(
                Rect(
                    axis=str(r["axis"]),
                    offset=float(r["offset"]),
                    u_range=tuple(float(x) for x in r["u_range"]),
                    v_range=tuple(float(x) for x in r["v_range"]),
                    class_id=int(r["class_id"]),
                    texture=Texture(
                        kind=str(tex.get("kind", "checker")),
                        period=float(tex.get("period", 1.0)),
                        seed=int(tex.get("seed", 0)),
                        level=float(tex.get("level", 0.5)),
                    ),
                    holes=tuple(
                        (tuple(map(float, h[0])), tuple(map(float, h[1])))
                        for h in r.get("holes", [])
                    ),
                )
            )
        classes = (
            ClassTable(
                [(int(c["id"]), str(c["name"]), tuple(c["rgb"])) for c in data["classes"]]
            )
            if data.get("classes")
            else ClassTable.default()
        )
        return SynthSpec(
            arc=arc,
            rects=tuple(rects),
            sparse_count=int(data.get("sparse_count", 40)),
            seed=int(data.get("seed", 0)),
            classes=classes,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SceneFormatError(f"bad layout spec: {exc}") from exc


def load_spec(path) -> SynthSpec:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"layout spec not found: {path}")
    try:
        return spec_from_json(json.loads(path.read_text()))
    except json.JSONDecodeError as exc:
        raise SceneFormatError(f"{path}: invalid JSON ({exc})") from exc
