"""Raster / depth-map / PLY format tests and scene-manifest validation.

Format facts asserted here come straight from the definitions:

* P5/P6 payload bytes divide by 255 into [0, 1].
* Depth-map file = 4 magic + 3 * u32 + five W*H float32 planes
  -> 16 + 5*W*H*4 bytes.
* PLY vertex record = 3 float32 + 5 uint8 = 17 bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import pytest

from semstereo.errors import SceneFormatError
from semstereo.scene_io import (
    ClassTable,
    DepthMap,
    load_label_map,
    load_pgm,
    load_ppm,
    load_scene,
    read_depthmap,
    read_ply,
    write_depthmap,
    write_pgm,
    write_ply,
    write_ppm,
)

# ── Helpers ──────────────────────────────────────────────────────────────


@dataclass
class _StubCloud:
    positions: np.ndarray
    colors: np.ndarray
    labels: np.ndarray
    supports: np.ndarray


def _empty_cloud() -> _StubCloud:
    return _StubCloud(
        positions=np.zeros((0, 3)),
        colors=np.zeros((0, 3), dtype=np.uint8),
        labels=np.zeros(0, dtype=np.uint8),
        supports=np.zeros(0, dtype=np.int64),
    )


def _view_entry(vid, image, labels, C, R=None, size=8):
    return {
        "id": vid,
        "image": image,
        "labels": labels,
        "width": size,
        "height": size,
        "fx": 8.0,
        "fy": 8.0,
        "cx": 3.5,
        "cy": 3.5,
        "skew": 0.0,
        "R": list(np.asarray(R if R is not None else np.eye(3)).ravel()),
        "C": list(C),
    }


def _write_minimal_scene(tmp_path, *, label_shape=(8, 8), R1=None):
    """Two fronto-parallel views 1 apart on x, one shared sparse point."""
    rng = np.random.default_rng(5)
    for vid in (0, 1):
        write_pgm(tmp_path / f"im{vid}.pgm", rng.random((8, 8)).astype(np.float32))
    write_pgm(tmp_path / "lab0.pgm", np.zeros((8, 8), dtype=np.uint8))
    shape = label_shape
    write_pgm(tmp_path / "lab1.pgm", np.zeros(shape, dtype=np.uint8))
    manifest = {
        "views": [
            _view_entry(0, "im0.pgm", "lab0.pgm", [0.0, 0.0, 0.0]),
            _view_entry(1, "im1.pgm", "lab1.pgm", [1.0, 0.0, 0.0], R=R1),
        ],
        "points": [{"xyz": [0.5, 0.0, 10.0], "views": [0, 1]}],
        "classes": [{"id": 0, "name": "building", "rgb": [0, 0, 255]}],
    }
    path = tmp_path / "scene.json"
    path.write_text(json.dumps(manifest))
    return path


# ── PGM / PPM ────────────────────────────────────────────────────────────


class TestPnm:
    def test_p5_values_normalized(self, tmp_path):
        p = tmp_path / "a.pgm"
        p.write_bytes(b"P5\n2 2\n255\n" + bytes([0, 128, 255, 64]))
        raster = load_pgm(p)
        assert raster.dtype == np.float32
        np.testing.assert_allclose(
            raster, [[0.0, 128 / 255], [1.0, 64 / 255]], rtol=1e-7
        )

    def test_p6_refused_by_pgm_loader(self, tmp_path):
        p = tmp_path / "c.ppm"
        p.write_bytes(b"P6\n1 1\n255\n" + bytes([1, 2, 3]))
        with pytest.raises(SceneFormatError, match="expected P5"):
            load_pgm(p)
        np.testing.assert_allclose(load_ppm(p), [[[1 / 255, 2 / 255, 3 / 255]]])

    def test_truncated_payload(self, tmp_path):
        p = tmp_path / "t.pgm"
        p.write_bytes(b"P5\n4 4\n255\n" + bytes(7))  # needs 16
        with pytest.raises(SceneFormatError, match="truncated"):
            load_pgm(p)

    def test_maxval_must_be_255(self, tmp_path):
        p = tmp_path / "m.pgm"
        p.write_bytes(b"P5\n1 1\n65535\n\x00\x00")
        with pytest.raises(SceneFormatError, match="maxval"):
            load_pgm(p)

    def test_comment_lines_skipped(self, tmp_path):
        p = tmp_path / "k.pgm"
        p.write_bytes(b"P5\n# made by hand\n2 1\n255\n\x10\x20")
        np.testing.assert_allclose(load_pgm(p), [[16 / 255, 32 / 255]], rtol=1e-7)

    def test_label_map_keeps_raw_bytes(self, tmp_path):
        p = tmp_path / "l.pgm"
        p.write_bytes(b"P5\n2 1\n255\n" + bytes([3, 255]))
        labels = load_label_map(p)
        assert labels.dtype == np.uint8
        assert labels.tolist() == [[3, 255]]

    def test_write_read_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        gray = rng.integers(0, 256, size=(5, 7), dtype=np.uint8)
        write_pgm(tmp_path / "g.pgm", gray)
        assert np.array_equal(load_label_map(tmp_path / "g.pgm"), gray)
        rgb = rng.integers(0, 256, size=(4, 3, 3), dtype=np.uint8)
        write_ppm(tmp_path / "c.ppm", rgb)
        back = np.rint(load_ppm(tmp_path / "c.ppm") * 255).astype(np.uint8)
        assert np.array_equal(back, rgb)

    def test_fuzz_random_bytes_only_error(self, tmp_path):
        rng = np.random.default_rng(99)
        p = tmp_path / "fuzz.bin"
        for i in range(50):
            p.write_bytes(rng.bytes(int(rng.integers(0, 200))))
            with pytest.raises((SceneFormatError, FileNotFoundError)):
                load_pgm(p)


# ── Depth maps ───────────────────────────────────────────────────────────


class TestDepthmapFile:
    def _random_dmap(self, h, w, seed=3) -> DepthMap:
        rng = np.random.default_rng(seed)
        return DepthMap(
            depth=rng.random((h, w)).astype(np.float32) * 10,
            normal=rng.standard_normal((h, w, 3)).astype(np.float32),
            cost=rng.random((h, w)).astype(np.float32),
        )

    def test_round_trip_bitwise(self, tmp_path):
        dmap = self._random_dmap(6, 4)
        write_depthmap(tmp_path / "d.dmap", dmap)
        back = read_depthmap(tmp_path / "d.dmap")
        assert np.array_equal(
            dmap.depth.view(np.uint32), back.depth.view(np.uint32)
        )
        assert np.array_equal(
            dmap.normal.view(np.uint32), back.normal.view(np.uint32)
        )
        assert np.array_equal(dmap.cost.view(np.uint32), back.cost.view(np.uint32))

    def test_file_size_3x2(self, tmp_path):
        write_depthmap(tmp_path / "d.dmap", self._random_dmap(2, 3))  # W=3, H=2
        assert (tmp_path / "d.dmap").stat().st_size == 16 + 3 * 2 * 4 * 5

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "x.dmap"
        p.write_bytes(b"XXXX" + bytes(12))
        with pytest.raises(SceneFormatError, match="magic"):
            read_depthmap(p)

    def test_size_mismatch(self, tmp_path):
        p = tmp_path / "s.dmap"
        p.write_bytes(b"DMAP" + np.array([2, 2, 0], dtype="<u4").tobytes() + bytes(8))
        with pytest.raises(SceneFormatError, match="size"):
            read_depthmap(p)

    def test_invalid_marker_is_zero_depth(self):
        dmap = self._random_dmap(2, 2)
        dmap.invalidate(np.array([[True, False], [False, False]]))
        assert dmap.depth[0, 0] == 0.0
        assert not dmap.valid_mask[0, 0]
        assert dmap.valid_mask[1, 1]


# ── PLY ──────────────────────────────────────────────────────────────────


class TestPly:
    def test_empty_cloud(self, tmp_path):
        write_ply(tmp_path / "e.ply", _empty_cloud())
        data = (tmp_path / "e.ply").read_bytes()
        assert b"element vertex 0\n" in data
        assert data.startswith(b"ply\nformat binary_little_endian 1.0\n")
        assert len(read_ply(tmp_path / "e.ply")) == 0

    def test_header_property_order(self, tmp_path):
        cloud = _StubCloud(
            positions=np.array([[1.0, 2.0, 3.0]]),
            colors=np.array([[10, 20, 30]], dtype=np.uint8),
            labels=np.array([4], dtype=np.uint8),
            supports=np.array([3]),
        )
        write_ply(tmp_path / "one.ply", cloud)
        header = (tmp_path / "one.ply").read_bytes().split(b"end_header\n")[0]
        props = [l for l in header.decode().splitlines() if l.startswith("property")]
        assert props == [
            "property float x",
            "property float y",
            "property float z",
            "property uchar red",
            "property uchar green",
            "property uchar blue",
            "property uchar label",
            "property uchar support",
        ]
        rec = read_ply(tmp_path / "one.ply")
        assert rec["x"][0] == np.float32(1.0)
        assert (rec["red"][0], rec["label"][0], rec["support"][0]) == (10, 4, 3)

    def test_payload_size_is_17_bytes_per_point(self, tmp_path):
        n = 23
        rng = np.random.default_rng(1)
        cloud = _StubCloud(
            positions=rng.random((n, 3)),
            colors=rng.integers(0, 256, (n, 3), dtype=np.uint8),
            labels=rng.integers(0, 5, n).astype(np.uint8),
            supports=rng.integers(1, 9, n),
        )
        write_ply(tmp_path / "n.ply", cloud)
        data = (tmp_path / "n.ply").read_bytes()
        payload = data.split(b"end_header\n", 1)[1]
        assert len(payload) == n * 17

    def test_support_clamped_at_255(self, tmp_path):
        cloud = _StubCloud(
            positions=np.zeros((1, 3)),
            colors=np.zeros((1, 3), dtype=np.uint8),
            labels=np.zeros(1, dtype=np.uint8),
            supports=np.array([999]),
        )
        write_ply(tmp_path / "c.ply", cloud)
        assert read_ply(tmp_path / "c.ply")["support"][0] == 255


# ── Class table ──────────────────────────────────────────────────────────


class TestClassTable:
    def test_default_catalog(self):
        table = ClassTable.default()
        assert table.id_of("building") == 0
        assert table.id_of("sky") == 1
        assert table.id_of("obstacle") == 2
        assert table.id_of("window") == 3
        assert table.id_of("door") == 4
        assert len(table) == 5

    def test_duplicate_ids_rejected(self):
        with pytest.raises(SceneFormatError):
            ClassTable([(0, "a", (0, 0, 0)), (0, "b", (1, 1, 1))])

    def test_reserved_unlabeled_id_rejected(self):
        with pytest.raises(SceneFormatError, match="reserved"):
            ClassTable([(255, "void", (0, 0, 0))])


# ── Scene manifest ───────────────────────────────────────────────────────


class TestLoadScene:
    def test_minimal_two_view_scene(self, tmp_path):
        scene = load_scene(_write_minimal_scene(tmp_path))
        assert len(scene.views) == 2
        assert len(scene.points) == 1
        assert scene.points[0].visible_in == (0, 1)
        assert scene.view(1).pose.C[0] == 1.0
        assert scene.view(0).image.shape == (8, 8)

    def test_loading_twice_is_structurally_equal(self, tmp_path):
        path = _write_minimal_scene(tmp_path)
        a, b = load_scene(path), load_scene(path)
        assert [v.id for v in a.views] == [v.id for v in b.views]
        for va, vb in zip(a.views, b.views):
            assert np.array_equal(va.image, vb.image)
            assert np.array_equal(va.labels, vb.labels)
            np.testing.assert_array_equal(va.pose.R, vb.pose.R)
        np.testing.assert_array_equal(a.points[0].xyz, b.points[0].xyz)

    def test_dimension_mismatch_names_view(self, tmp_path):
        path = _write_minimal_scene(tmp_path, label_shape=(7, 8))
        with pytest.raises(SceneFormatError, match="view 1"):
            load_scene(path)

    def test_reflection_rotation_rejected(self, tmp_path):
        path = _write_minimal_scene(tmp_path, R1=np.diag([1.0, 1.0, -1.0]))
        with pytest.raises(SceneFormatError, match="rotation"):
            load_scene(path)

    def test_unknown_class_id_rejected(self, tmp_path):
        path = _write_minimal_scene(tmp_path)
        write_pgm(path.parent / "lab0.pgm", np.full((8, 8), 9, dtype=np.uint8))
        with pytest.raises(SceneFormatError, match="class id"):
            load_scene(path)

    def test_point_outside_view_rejected(self, tmp_path):
        path = _write_minimal_scene(tmp_path)
        manifest = json.loads(path.read_text())
        manifest["points"][0]["xyz"] = [50.0, 0.0, 10.0]
        path.write_text(json.dumps(manifest))
        with pytest.raises(SceneFormatError, match="point 0"):
            load_scene(path)

    def test_single_view_rejected(self, tmp_path):
        path = _write_minimal_scene(tmp_path)
        manifest = json.loads(path.read_text())
        manifest["views"] = manifest["views"][:1]
        manifest["points"] = []
        path.write_text(json.dumps(manifest))
        with pytest.raises(SceneFormatError, match="2 views"):
            load_scene(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_scene(tmp_path / "nope.json")
