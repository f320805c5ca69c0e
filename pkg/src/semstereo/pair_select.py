"""Stereo-pair selection: angle window, baseline-vs-median rule, overlap ranking.

A pair of views qualifies when (i) the angle between their principal viewing
directions lies inside [theta_min, theta_max] (inclusive), (ii) their
baseline d satisfies low_factor*d_med <= d <= high_factor*d_med, where d_med
is the median baseline over all angle-passing pairs, and (iii) the two views
share at least one sparse point.  Per reference view the qualifying targets
are ranked by shared sparse-point count (descending), ties broken by angle
then by id, and truncated to max_targets.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from .geometry import view_angle
from .scene_io import Scene

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PairParams:
    theta_min: float = 5.0
    theta_max: float = 60.0
    baseline_low_factor: float = 0.05
    baseline_high_factor: float = 2.0
    max_targets: int = 4

    def __post_init__(self) -> None:
        if not 0.0 <= self.theta_min < self.theta_max <= 180.0:
            raise ValueError(
                f"need 0 <= theta_min < theta_max <= 180, got "
                f"[{self.theta_min}, {self.theta_max}]"
            )
        if not 0.0 < self.baseline_low_factor < self.baseline_high_factor:
            raise ValueError(
                f"need 0 < low < high baseline factors, got "
                f"[{self.baseline_low_factor}, {self.baseline_high_factor}]"
            )
        if self.max_targets < 1:
            raise ValueError(f"max_targets must be >= 1, got {self.max_targets}")


@dataclass(frozen=True)
class PairEntry:
    target: int
    shared: int
    angle_deg: float
    baseline: float


@dataclass
class PairSet:
    """Ranked target lists keyed by reference view id."""

    by_ref: dict[int, list[PairEntry]] = field(default_factory=dict)

    def targets_of(self, ref_id: int) -> list[PairEntry]:
        return self.by_ref.get(ref_id, [])

    def target_ids(self, ref_id: int) -> list[int]:
        return [e.target for e in self.targets_of(ref_id)]

    @property
    def total_pairs(self) -> int:
        return sum(len(v) for v in self.by_ref.values())

    def to_jsonable(self) -> dict:
        return {
            str(ref): [
                {
                    "target": e.target,
                    "shared": e.shared,
                    "angle_deg": e.angle_deg,
                    "baseline": e.baseline,
                }
                for e in entries
            ]
            for ref, entries in sorted(self.by_ref.items())
        }

    @classmethod
    def from_jsonable(cls, data: dict) -> "PairSet":
        return cls(
            {
                int(ref): [
                    PairEntry(
                        int(e["target"]),
                        int(e["shared"]),
                        float(e["angle_deg"]),
                        float(e["baseline"]),
                    )
                    for e in entries
                ]
                for ref, entries in data.items()
            }
        )


def _median_low(values: list[float]) -> float:
    """Lower median: element at index (n-1)//2 of the sorted list."""
    ordered = sorted(values)
    return ordered[(len(ordered) - 1) // 2]


def select_pairs(scene: Scene, params: PairParams | None = None) -> PairSet:
    """Choose ranked stereo targets for every reference view of the scene.

    A scene with fewer than two views yields an empty set; a scene where no
    pair passes the criteria yields an empty set with a logged warning.
    """
    params = params or PairParams()
    ids = scene.view_ids
    if len(ids) < 2:
        return PairSet({i: [] for i in ids})

    angle = {}
    baseline = {}
    angle_pass = []
    for i, j in itertools.combinations(ids, 2):
        vi, vj = scene.view(i), scene.view(j)
        a = view_angle(vi.pose, vj.pose)
        d = float(np.linalg.norm(vi.pose.C - vj.pose.C))
        angle[(i, j)] = a
        baseline[(i, j)] = d
        if params.theta_min <= a <= params.theta_max:
            angle_pass.append((i, j))

    if not angle_pass:
        logger.warning(
            "no view pair has an angle inside [%g, %g] degrees",
            params.theta_min,
            params.theta_max,
        )
        return PairSet({i: [] for i in ids})

    d_med = _median_low([baseline[p] for p in angle_pass])
    lo = params.baseline_low_factor * d_med
    hi = params.baseline_high_factor * d_med

    shared = {}
    for i, j in angle_pass:
        count = sum(
            1 for pt in scene.points if i in pt.visible_in and j in pt.visible_in
        )
        shared[(i, j)] = count

    accepted = [
        (i, j)
        for i, j in angle_pass
        if lo <= baseline[(i, j)] <= hi and shared[(i, j)] >= 1
    ]

    by_ref: dict[int, list[PairEntry]] = {i: [] for i in ids}
    for i, j in accepted:
        for ref, tgt in ((i, j), (j, i)):
            by_ref[ref].append(
                PairEntry(tgt, shared[(i, j)], angle[(i, j)], baseline[(i, j)])
            )
    for ref in ids:
        by_ref[ref].sort(key=lambda e: (-e.shared, e.angle_deg, e.target))
        del by_ref[ref][params.max_targets :]

    if not accepted:
        logger.warning(
            "no view pair passes baseline [%g, %g] (median %g) with shared points",
            lo,
            hi,
            d_med,
        )
    return PairSet(by_ref)
