"""Scene manifest, raster, depth-map and point-cloud input/output.

File formats:

* Images: binary PGM (P5) and PPM (P6), 8-bit, maxval 255.  Gray values are
  normalized into [0, 1]; label maps keep the raw byte (pixel value = class
  id, 255 = unlabeled).
* Depth maps: magic ``DMAP``, then width, height and a reserved word as
  unsigned 32-bit little-endian, then five row-major float32 little-endian
  planes: depth (0.0 = invalid), normal_x, normal_y, normal_z, cost.
* Point clouds: binary little-endian PLY with per-vertex x y z (float32),
  red green blue (uint8), label (uint8) and support (uint8, clamped at 255).
* Scene manifest: a single JSON file, see ``load_scene``.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import SceneFormatError
from .geometry import Intrinsics, Pose, project

logger = logging.getLogger(__name__)

UNLABELED = 255

# Default class catalog for facade scenes; display colors follow the usual
# labeling convention (building blue, sky yellow, obstacle red, window green).
DEFAULT_CLASSES = (
    (0, "building", (0, 0, 255)),
    (1, "sky", (255, 255, 0)),
    (2, "obstacle", (255, 0, 0)),
    (3, "window", (0, 255, 0)),
    (4, "door", (255, 0, 255)),
)


@dataclass(frozen=True)
class ClassEntry:
    id: int
    name: str
    rgb: tuple[int, int, int]


class ClassTable:
    """Catalog of semantic classes with unique ids and names."""

    def __init__(self, entries) -> None:
        self.entries = [
            e if isinstance(e, ClassEntry) else ClassEntry(e[0], e[1], tuple(e[2]))
            for e in entries
        ]
        ids = [e.id for e in self.entries]
        names = [e.name for e in self.entries]
        if len(set(ids)) != len(ids):
            raise SceneFormatError("class table has duplicate ids")
        if len(set(names)) != len(names):
            raise SceneFormatError("class table has duplicate names")
        for e in self.entries:
            if not 0 <= e.id < UNLABELED:
                raise SceneFormatError(
                    f"class id {e.id} out of range (255 is reserved as unlabeled)"
                )
        self._by_id = {e.id: e for e in self.entries}
        self._by_name = {e.name: e for e in self.entries}

    @classmethod
    def default(cls) -> "ClassTable":
        return cls(DEFAULT_CLASSES)

    @property
    def ids(self) -> set[int]:
        return set(self._by_id)

    def __contains__(self, class_id: int) -> bool:
        return class_id in self._by_id

    def __iter__(self):
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def by_id(self, class_id: int) -> ClassEntry:
        return self._by_id[class_id]

    def id_of(self, name: str) -> int:
        if name not in self._by_name:
            raise KeyError(f"unknown class name {name!r}")
        return self._by_name[name].id


@dataclass
class View:
    """A calibrated, posed image with a pixel-aligned label map."""

    id: int
    width: int
    height: int
    intrinsics: Intrinsics
    pose: Pose
    image: np.ndarray  # (H, W) float32 in [0, 1]
    labels: np.ndarray  # (H, W) uint8
    color: np.ndarray | None = None  # (H, W, 3) float32 in [0, 1]

    def __post_init__(self) -> None:
        if self.id < 0:
            raise SceneFormatError(f"view id must be non-negative, got {self.id}")
        shape = (self.height, self.width)
        if self.image.shape != shape:
            raise SceneFormatError(
                f"view {self.id}: image raster {self.image.shape} does not match "
                f"declared size {shape}"
            )
        if self.labels.shape != shape:
            raise SceneFormatError(
                f"view {self.id}: label raster {self.labels.shape} does not match "
                f"image {shape}"
            )
        if self.color is not None and self.color.shape != shape + (3,):
            raise SceneFormatError(
                f"view {self.id}: color raster {self.color.shape} does not match "
                f"image {shape}"
            )
        self.image = np.ascontiguousarray(self.image, dtype=np.float32)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.uint8)
        if self.color is not None:
            self.color = np.ascontiguousarray(self.color, dtype=np.float32)


@dataclass(frozen=True)
class SparsePoint:
    """An SfM tie point with the views it was triangulated from."""

    xyz: np.ndarray
    visible_in: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "xyz", np.ascontiguousarray(self.xyz, dtype=np.float64).reshape(3)
        )
        object.__setattr__(self, "visible_in", tuple(self.visible_in))


@dataclass
class Scene:
    """Views, sparse points and the class catalog; immutable once built."""

    views: list[View]
    points: list[SparsePoint]
    classes: ClassTable

    def __post_init__(self) -> None:
        ids = [v.id for v in self.views]
        if len(set(ids)) != len(ids):
            raise SceneFormatError("duplicate view ids in scene")
        self._by_id = {v.id: v for v in self.views}

    def view(self, view_id: int) -> View:
        return self._by_id[view_id]

    @property
    def view_ids(self) -> list[int]:
        return sorted(self._by_id)


@dataclass
class DepthMap:
    """Per-pixel plane hypotheses with aggregated matching cost.

    Stored in float32, identical to the on-disk layout, so a write/read
    round trip is bit exact.  Depth 0.0 marks an invalid pixel.
    """

    depth: np.ndarray  # (H, W) float32
    normal: np.ndarray  # (H, W, 3) float32
    cost: np.ndarray  # (H, W) float32

    def __post_init__(self) -> None:
        self.depth = np.ascontiguousarray(self.depth, dtype=np.float32)
        self.normal = np.ascontiguousarray(self.normal, dtype=np.float32)
        self.cost = np.ascontiguousarray(self.cost, dtype=np.float32)
        h, w = self.depth.shape
        if self.normal.shape != (h, w, 3) or self.cost.shape != (h, w):
            raise ValueError(
                f"inconsistent depth-map planes: depth {self.depth.shape}, "
                f"normal {self.normal.shape}, cost {self.cost.shape}"
            )

    @property
    def width(self) -> int:
        return self.depth.shape[1]

    @property
    def height(self) -> int:
        return self.depth.shape[0]

    @property
    def valid_mask(self) -> np.ndarray:
        return self.depth > 0.0

    def copy(self) -> "DepthMap":
        return DepthMap(self.depth.copy(), self.normal.copy(), self.cost.copy())

    def invalidate(self, mask: np.ndarray) -> None:
        """Mark pixels invalid in place; keeps their cost for diagnostics."""
        self.depth[mask] = 0.0
        self.normal[mask] = 0.0


# ---------------------------------------------------------------------------
# PGM / PPM


def _read_pnm(path, expected_magic: str) -> np.ndarray:
    """Raw 8-bit PNM payload as uint8, shape (H, W) for P5 or (H, W, 3) for P6."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"raster not found: {path}")
    data = path.read_bytes()
    if len(data) < 2 or data[:2] not in (b"P5", b"P6"):
        raise SceneFormatError(f"{path}: not a binary PGM/PPM (bad magic)")
    magic = data[:2].decode()
    if magic != expected_magic:
        raise SceneFormatError(f"{path}: expected {expected_magic}, found {magic}")

    # Header tokens are separated by whitespace; '#' starts a comment line.
    pos = 2
    tokens: list[int] = []
    while len(tokens) < 3:
        if pos >= len(data):
            raise SceneFormatError(f"{path}: truncated header")
        c = data[pos]
        if c in b"#":
            while pos < len(data) and data[pos] not in b"\r\n":
                pos += 1
        elif c in b" \t\r\n":
            pos += 1
        else:
            start = pos
            while pos < len(data) and data[pos] not in b" \t\r\n#":
                pos += 1
            try:
                tokens.append(int(data[start:pos]))
            except ValueError:
                raise SceneFormatError(
                    f"{path}: malformed header token {data[start:pos]!r}"
                ) from None
    width, height, maxval = tokens
    if maxval != 255:
        raise SceneFormatError(f"{path}: maxval must be 255, got {maxval}")
    if width <= 0 or height <= 0:
        raise SceneFormatError(f"{path}: bad dimensions {width}x{height}")
    pos += 1  # single whitespace byte between header and payload
    channels = 1 if magic == "P5" else 3
    count = width * height * channels
    payload = data[pos : pos + count]
    if len(payload) < count:
        raise SceneFormatError(
            f"{path}: truncated payload ({len(payload)} of {count} bytes)"
        )
    raster = np.frombuffer(payload, dtype=np.uint8, count=count)
    if channels == 1:
        return raster.reshape(height, width)
    return raster.reshape(height, width, 3)


def load_pgm(path) -> np.ndarray:
    """Grayscale raster as float32 in [0, 1]."""
    return _read_pnm(path, "P5").astype(np.float32) / 255.0


def load_ppm(path) -> np.ndarray:
    """RGB raster as float32 in [0, 1], shape (H, W, 3)."""
    return _read_pnm(path, "P6").astype(np.float32) / 255.0


def load_label_map(path) -> np.ndarray:
    """Label raster as raw uint8 class ids (255 = unlabeled)."""
    return _read_pnm(path, "P5").copy()


def write_pgm(path, raster: np.ndarray) -> None:
    """Write a uint8 (or [0,1] float, rounded) grayscale raster as binary P5."""
    a = np.asarray(raster)
    if a.dtype != np.uint8:
        a = np.rint(np.clip(a, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = a.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode())
        f.write(np.ascontiguousarray(a).tobytes())


def write_ppm(path, raster: np.ndarray) -> None:
    """Write a uint8 (or [0,1] float, rounded) RGB raster as binary P6."""
    a = np.asarray(raster)
    if a.dtype != np.uint8:
        a = np.rint(np.clip(a, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w, _ = a.shape
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode())
        f.write(np.ascontiguousarray(a).tobytes())


# ---------------------------------------------------------------------------
# Depth maps

_DMAP_MAGIC = b"DMAP"


def write_depthmap(path, dmap: DepthMap) -> None:
    planes = np.stack(
        [
            dmap.depth,
            dmap.normal[:, :, 0],
            dmap.normal[:, :, 1],
            dmap.normal[:, :, 2],
            dmap.cost,
        ]
    ).astype("<f4")
    with open(path, "wb") as f:
        f.write(_DMAP_MAGIC)
        f.write(struct.pack("<III", dmap.width, dmap.height, 0))
        f.write(planes.tobytes())


def read_depthmap(path) -> DepthMap:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"depth map not found: {path}")
    data = path.read_bytes()
    if len(data) < 16 or data[:4] != _DMAP_MAGIC:
        raise SceneFormatError(f"{path}: bad depth-map magic")
    width, height, _reserved = struct.unpack("<III", data[4:16])
    count = 5 * width * height
    if len(data) != 16 + count * 4:
        raise SceneFormatError(
            f"{path}: size mismatch, expected {16 + count * 4} bytes for "
            f"{width}x{height}, got {len(data)}"
        )
    planes = np.frombuffer(data, dtype="<f4", offset=16).reshape(5, height, width)
    normal = np.moveaxis(planes[1:4], 0, -1)
    return DepthMap(planes[0].copy(), normal.copy(), planes[4].copy())


# ---------------------------------------------------------------------------
# PLY

_PLY_PROPS = (
    "property float x",
    "property float y",
    "property float z",
    "property uchar red",
    "property uchar green",
    "property uchar blue",
    "property uchar label",
    "property uchar support",
)

_PLY_DTYPE = np.dtype(
    [
        ("x", "<f4"),
        ("y", "<f4"),
        ("z", "<f4"),
        ("red", "u1"),
        ("green", "u1"),
        ("blue", "u1"),
        ("label", "u1"),
        ("support", "u1"),
    ]
)


def write_ply(path, cloud) -> None:
    """Write a fused cloud as binary little-endian PLY (17 bytes per vertex)."""
    n = len(cloud.labels)
    header = "ply\nformat binary_little_endian 1.0\n"
    header += f"element vertex {n}\n"
    header += "\n".join(_PLY_PROPS) + "\nend_header\n"
    rec = np.empty(n, dtype=_PLY_DTYPE)
    pos = np.asarray(cloud.positions, dtype=np.float64).reshape(n, 3)
    rec["x"] = pos[:, 0].astype("<f4")
    rec["y"] = pos[:, 1].astype("<f4")
    rec["z"] = pos[:, 2].astype("<f4")
    colors = np.asarray(cloud.colors, dtype=np.uint8).reshape(n, 3)
    rec["red"], rec["green"], rec["blue"] = colors[:, 0], colors[:, 1], colors[:, 2]
    rec["label"] = np.asarray(cloud.labels, dtype=np.uint8)
    rec["support"] = np.minimum(np.asarray(cloud.supports), 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        f.write(rec.tobytes())


def read_ply(path) -> np.ndarray:
    """Read back a PLY written by ``write_ply`` as a structured array."""
    path = Path(path)
    data = path.read_bytes()
    end = data.find(b"end_header\n")
    if not data.startswith(b"ply\n") or end < 0:
        raise SceneFormatError(f"{path}: not a PLY file written by this package")
    header = data[:end].decode("ascii").splitlines()
    n = None
    for line in header:
        if line.startswith("element vertex"):
            n = int(line.split()[-1])
    if n is None:
        raise SceneFormatError(f"{path}: missing vertex element")
    payload = data[end + len(b"end_header\n") :]
    if len(payload) != n * _PLY_DTYPE.itemsize:
        raise SceneFormatError(
            f"{path}: payload size {len(payload)} does not match {n} vertices"
        )
    return np.frombuffer(payload, dtype=_PLY_DTYPE, count=n)


# ---------------------------------------------------------------------------
# Scene manifest


def _require(entry: dict, key: str, context: str):
    if key not in entry:
        raise SceneFormatError(f"{context}: missing field {key!r}")
    return entry[key]


def load_scene(manifest_path) -> Scene:
    """Load and fully validate a scene from a JSON manifest.

    The manifest lists ``views`` (id, image, labels, optional color, width,
    height, fx, fy, cx, cy, skew, R as 9 row-major floats world-to-camera,
    C as 3 floats), ``points`` (xyz plus the ids of the views that see them)
    and ``classes`` (id, name, rgb).  Raster paths are relative to the
    manifest's directory.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise FileNotFoundError(f"scene manifest not found: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise SceneFormatError(f"{manifest_path}: invalid JSON ({exc})") from exc
    base = manifest_path.parent

    classes = ClassTable(
        [
            ClassEntry(
                int(_require(c, "id", "class entry")),
                str(_require(c, "name", "class entry")),
                tuple(int(x) for x in _require(c, "rgb", "class entry")),
            )
            for c in manifest.get("classes", [])
        ]
    )

    views = []
    for entry in manifest.get("views", []):
        vid = int(_require(entry, "id", "view entry"))
        ctx = f"view {vid}"
        width = int(_require(entry, "width", ctx))
        height = int(_require(entry, "height", ctx))
        R = np.array(_require(entry, "R", ctx), dtype=np.float64).reshape(3, 3)
        C = np.array(_require(entry, "C", ctx), dtype=np.float64)
        try:
            pose = Pose(R, C)
        except ValueError as exc:
            raise SceneFormatError(f"{ctx}: invalid rotation ({exc})") from exc
        try:
            intr = Intrinsics(
                fx=float(_require(entry, "fx", ctx)),
                fy=float(_require(entry, "fy", ctx)),
                cx=float(_require(entry, "cx", ctx)),
                cy=float(_require(entry, "cy", ctx)),
                skew=float(entry.get("skew", 0.0)),
            )
        except ValueError as exc:
            raise SceneFormatError(f"{ctx}: invalid intrinsics ({exc})") from exc
        image = load_pgm(base / _require(entry, "image", ctx))
        labels = load_label_map(base / _require(entry, "labels", ctx))
        color = load_ppm(base / entry["color"]) if entry.get("color") else None
        try:
            view = View(vid, width, height, intr, pose, image, labels, color)
        except SceneFormatError:
            raise
        unknown = set(np.unique(labels)) - classes.ids - {UNLABELED}
        if unknown:
            raise SceneFormatError(
                f"{ctx}: label raster contains unknown class ids {sorted(unknown)}"
            )
        views.append(view)

    if len(views) < 2:
        raise SceneFormatError(
            f"{manifest_path}: scene needs at least 2 views, found {len(views)}"
        )

    scene = Scene(views, [], classes)

    points = []
    for idx, entry in enumerate(manifest.get("points", [])):
        ctx = f"sparse point {idx}"
        xyz = np.array(_require(entry, "xyz", ctx), dtype=np.float64)
        vis = tuple(int(i) for i in _require(entry, "views", ctx))
        if not vis:
            raise SceneFormatError(f"{ctx}: empty visibility list")
        for vid in vis:
            if vid not in {v.id for v in views}:
                raise SceneFormatError(f"{ctx}: references unknown view {vid}")
            view = scene.view(vid)
            try:
                (u, v), _ = project(xyz, view.intrinsics, view.pose)
            except ValueError as exc:
                raise SceneFormatError(
                    f"{ctx}: behind camera in view {vid} ({exc})"
                ) from exc
            if not (0 <= u < view.width and 0 <= v < view.height):
                raise SceneFormatError(
                    f"{ctx}: projects outside view {vid} bounds at ({u:.1f}, {v:.1f})"
                )
        points.append(SparsePoint(xyz, vis))
    scene.points = points
    return scene
