"""Label-aware merging of per-view depth maps into a dense point cloud.

Every depth pixel is a candidate point; it is emitted only when enough
neighboring views geometrically confirm it (same rule as the consistency
filter) and its semantic label passes the configured checks.  Confirming
pixels are *consumed* so the same surface point is not emitted again from
another view.

Candidates are visited in a fixed order — reference views by ascending id,
pixels row-major — which makes the output, including point order, a pure
function of the inputs.  Consumption only ever suppresses a pixel's own
later emission; it never revokes the pixel's ability to confirm someone
else, so the per-view vote counts can be precomputed in bulk and the
sequential pass reduces to bookkeeping.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Mapping

import numpy as np

from .depth_filter import FilterParams, neighbor_agreement
from .geometry import ray_grid
from .pair_select import PairSet
from .scene_io import UNLABELED, ClassTable, DepthMap, Scene, View

__all__ = [
    "SemanticMode",
    "FusedPoint",
    "FusedCloud",
    "fuse",
    "split_by_class",
]


@dataclass(frozen=True)
class SemanticMode:
    """Which labels may produce points, and how strictly views must agree.

    ``class_filter`` limits emission to the given class ids (None = all
    classes).  With ``cross_view_strict`` set, a neighbor whose label at the
    landing pixel differs from the reference label loses its confirmation
    vote entirely, so label-inconsistent matches neither support nor get
    merged into the point.  The unlabeled id (255) never produces points in
    any mode.
    """

    class_filter: frozenset[int] | None = None
    cross_view_strict: bool = False

    def __post_init__(self) -> None:
        if self.class_filter is not None:
            object.__setattr__(self, "class_filter", frozenset(self.class_filter))

    def validate(self, classes: ClassTable) -> None:
        if self.class_filter is None:
            return
        unknown = sorted(set(self.class_filter) - classes.ids)
        if unknown:
            raise ValueError(f"unknown class ids in class filter: {unknown}")


@dataclass(frozen=True)
class FusedPoint:
    """One emitted point: where, what it looks like, what it is, who agreed."""

    position: np.ndarray  # (3,) world coordinates
    color: np.ndarray  # (3,) uint8 RGB
    label: int
    support: int  # 1 reference + number of confirming neighbors


@dataclass
class FusedCloud:
    """Columnar point cloud with per-point origin bookkeeping.

    ``origins`` records (reference view id, row, column) for every point;
    ``confirmers`` (when collected) lists each point's confirming neighbor
    pixels as (view id, row, column) tuples.  ``provenance`` echoes the
    parameters that produced the cloud.
    """

    positions: np.ndarray  # (N, 3) float64
    colors: np.ndarray  # (N, 3) uint8
    labels: np.ndarray  # (N,) uint8
    supports: np.ndarray  # (N,) int64
    origins: np.ndarray  # (N, 3) int32: view id, row, column
    classes: ClassTable
    provenance: dict = field(default_factory=dict)
    confirmers: list[list[tuple[int, int, int]]] | None = None

    def __len__(self) -> int:
        return len(self.positions)

    def point(self, i: int) -> FusedPoint:
        return FusedPoint(
            position=self.positions[i],
            color=self.colors[i],
            label=int(self.labels[i]),
            support=int(self.supports[i]),
        )

    def __iter__(self) -> Iterator[FusedPoint]:
        return (self.point(i) for i in range(len(self)))


def _empty_columns() -> dict:
    return {
        "positions": np.empty((0, 3), dtype=np.float64),
        "colors": np.empty((0, 3), dtype=np.uint8),
        "labels": np.empty((0,), dtype=np.uint8),
        "supports": np.empty((0,), dtype=np.int64),
        "origins": np.empty((0, 3), dtype=np.int32),
    }


def _pixel_colors(view: View, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """uint8 RGB per pixel; the gray image is replicated when no color raster."""
    if view.color is not None:
        vals = view.color[ys, xs]
    else:
        vals = np.repeat(view.image[ys, xs, None], 3, axis=1)
    return np.clip(np.rint(vals * 255.0), 0, 255).astype(np.uint8)


def fuse(
    scene: Scene,
    depth_maps: Mapping[int, DepthMap],
    pairs: PairSet,
    params: FilterParams | None = None,
    mode: SemanticMode | None = None,
    collect_confirmers: bool = False,
) -> FusedCloud:
    """Merge depth maps into one labeled cloud with cross-view deduplication.

    ``depth_maps`` maps view id to that view's (ideally filtered) depth map;
    the geometric coherence test is re-run here regardless, against the
    targets ``pairs`` assigns to each reference view.  Points take the
    reference pixel's position, label and color; ``support`` counts the
    reference plus its confirming neighbors.

    Raises:
        ValueError: if the mode names class ids absent from the scene's
            class table.
    """
    params = params or FilterParams()
    mode = mode or SemanticMode()
    mode.validate(scene.classes)

    ref_ids = sorted(depth_maps.keys())
    consumed = {
        rid: np.zeros(depth_maps[rid].depth.shape, dtype=bool) for rid in ref_ids
    }
    cols = _empty_columns()
    chunks: dict[str, list] = {key: [] for key in cols}
    confirmer_log: list[list[tuple[int, int, int]]] | None = (
        [] if collect_confirmers else None
    )

    for rid in ref_ids:
        ref = scene.view(rid)
        dm = depth_maps[rid]
        neighbors = [
            (scene.view(t), depth_maps[t])
            for t in pairs.target_ids(rid)
            if t in depth_maps
        ]

        votes = np.zeros(dm.depth.shape, dtype=np.int64)
        agreements = []
        for n_view, n_dm in neighbors:
            confirmed, pu, pv = neighbor_agreement(dm, ref, n_view, n_dm, params.tau)
            if mode.cross_view_strict:
                confirmed = confirmed & (n_view.labels[pv, pu] == ref.labels)
            votes += confirmed
            agreements.append((n_view.id, confirmed, pu, pv))

        passes_label = ref.labels != UNLABELED
        if mode.class_filter is not None:
            passes_label &= np.isin(ref.labels, sorted(mode.class_filter))
        accept = dm.valid_mask & ~consumed[rid] & passes_label & (votes >= params.k)

        ys, xs = np.nonzero(accept)
        if ys.size:
            rays = ray_grid(ref.intrinsics, ref.width, ref.height)
            X_cam = dm.depth.astype(np.float64)[ys, xs, None] * rays[ys, xs]
            chunks["positions"].append(X_cam @ ref.pose.R + ref.pose.C)
            chunks["colors"].append(_pixel_colors(ref, ys, xs))
            chunks["labels"].append(ref.labels[ys, xs])
            chunks["supports"].append(1 + votes[ys, xs])
            chunks["origins"].append(
                np.stack(
                    [np.full(ys.shape, rid, dtype=np.int32), ys, xs], axis=1
                ).astype(np.int32)
            )

        for nid, confirmed, pu, pv in agreements:
            used = accept & confirmed
            consumed[nid][pv[used], pu[used]] = True

        if confirmer_log is not None:
            gathered = [
                (nid, confirmed[ys, xs], pv[ys, xs], pu[ys, xs])
                for nid, confirmed, pu, pv in agreements
            ]
            for i in range(ys.size):
                confirmer_log.append(
                    [
                        (nid, int(rows[i]), int(cols_[i]))
                        for nid, conf, rows, cols_ in gathered
                        if conf[i]
                    ]
                )

    for key, parts in chunks.items():
        if parts:
            cols[key] = np.concatenate(parts, axis=0).astype(cols[key].dtype)

    return FusedCloud(
        **cols,
        classes=scene.classes,
        provenance={
            "view_ids": ref_ids,
            "k": params.k,
            "tau": params.tau,
            "class_filter": (
                sorted(mode.class_filter) if mode.class_filter is not None else None
            ),
            "cross_view_strict": mode.cross_view_strict,
        },
        confirmers=confirmer_log,
    )


def split_by_class(cloud: FusedCloud) -> dict[int, FusedCloud]:
    """Partition a cloud by label, keyed by class id.

    Every class in the cloud's table gets an entry; classes with no points
    map to empty clouds.  Point order within each part follows the input.
    """
    parts: dict[int, FusedCloud] = {}
    for entry in cloud.classes:
        keep = cloud.labels == entry.id
        idx = np.nonzero(keep)[0]
        parts[entry.id] = FusedCloud(
            positions=cloud.positions[keep],
            colors=cloud.colors[keep],
            labels=cloud.labels[keep],
            supports=cloud.supports[keep],
            origins=cloud.origins[keep],
            classes=cloud.classes,
            provenance=dict(cloud.provenance, class_id=entry.id),
            confirmers=(
                [cloud.confirmers[i] for i in idx]
                if cloud.confirmers is not None
                else None
            ),
        )
    return parts
