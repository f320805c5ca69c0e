"""End-to-end reconstruction driver with restartable on-disk stages.

Each stage reads its inputs from a working directory and writes named
artifacts back (``pairs.json``, ``depth_<id>.dmap``, ``filtered_<id>.dmap``,
``cloud.ply``, ``report.json``), so a full :func:`run` and the equivalent
sequence of stage calls produce byte-identical results.  All randomness
flows from the single configured seed.
"""

from __future__ import annotations

import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from .depth_filter import FilterParams, filter_depth_map
from .errors import StageError
from .pair_select import PairParams, PairSet, select_pairs
from .patchmatch import MatchParams, compute_depth_map
from .scene_io import (
    ClassTable,
    DepthMap,
    Scene,
    View,
    load_scene,
    read_depthmap,
    write_depthmap,
    write_ply,
)
from .semantic_fusion import FusedCloud, SemanticMode, fuse, split_by_class

log = logging.getLogger(__name__)

PAIRS_FILE = "pairs.json"
REPORT_FILE = "report.json"
CLOUD_FILE = "cloud.ply"

__all__ = [
    "RunConfig",
    "config_from_jsonable",
    "load_config",
    "run",
    "stage_pairs",
    "stage_depth",
    "stage_filter",
    "stage_fuse",
    "load_pairs",
    "load_depth_maps",
    "resolve_mode",
]


@dataclass(frozen=True)
class RunConfig:
    """Everything one reconstruction needs; JSON-serializable.

    ``classes`` holds class names or numeric ids as authored; they are
    resolved against the scene's class table when fusion runs.  ``seed``,
    when given, overrides the matcher's own seed so a single value controls
    all randomness.
    """

    scene: Path
    out: Path
    pair_params: PairParams = field(default_factory=PairParams)
    match_params: MatchParams = field(default_factory=MatchParams)
    filter_params: FilterParams = field(default_factory=FilterParams)
    classes: tuple | None = None
    strict: bool = False
    split: bool = False
    seed: int | None = None
    jobs: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "scene", Path(self.scene))
        object.__setattr__(self, "out", Path(self.out))
        if self.classes is not None:
            object.__setattr__(self, "classes", tuple(self.classes))
        if self.jobs < 1:
            raise ValueError(f"jobs must be >= 1, got {self.jobs}")
        if self.seed is not None and self.seed < 0:
            raise ValueError("seed must be a non-negative integer")

    @property
    def effective_seed(self) -> int:
        return self.match_params.seed if self.seed is None else self.seed

    @property
    def effective_match(self) -> MatchParams:
        return replace(self.match_params, seed=self.effective_seed)


def config_from_jsonable(data: dict, base: Path | None = None) -> RunConfig:
    """Build a config from its JSON form; relative paths resolve against base.

    Sections ``pairs``/``match``/``filter`` hold keyword overrides for the
    corresponding parameter dataclasses; missing keys keep module defaults.
    """

    def _path(value) -> Path:
        p = Path(value)
        if base is not None and not p.is_absolute():
            p = base / p
        return p

    known = {
        "scene", "out", "pairs", "match", "filter",
        "classes", "strict", "split", "seed", "jobs",
    }
    unknown = sorted(set(data) - known)
    if unknown:
        raise ValueError(f"unknown config keys: {unknown}")
    for section in ("scene", "out"):
        if section not in data:
            raise ValueError(f"config is missing required key {section!r}")
    try:
        return RunConfig(
            scene=_path(data["scene"]),
            out=_path(data["out"]),
            pair_params=PairParams(**data.get("pairs", {})),
            match_params=MatchParams(**data.get("match", {})),
            filter_params=FilterParams(**data.get("filter", {})),
            classes=data.get("classes"),
            strict=bool(data.get("strict", False)),
            split=bool(data.get("split", False)),
            seed=None if data.get("seed") is None else int(data["seed"]),
            jobs=int(data.get("jobs", 1)),
        )
    except TypeError as exc:
        raise ValueError(f"invalid config: {exc}") from exc


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config not found: {path}")
    return config_from_jsonable(json.loads(path.read_text()), base=path.parent)


def resolve_mode(
    classes, strict: bool, table: ClassTable
) -> SemanticMode:
    """Turn authored class names/ids into a validated SemanticMode."""
    if classes is None:
        return SemanticMode(cross_view_strict=strict)
    ids = set()
    for item in classes:
        if isinstance(item, str) and not item.lstrip("-").isdigit():
            try:
                ids.add(table.id_of(item))
            except KeyError as exc:
                raise ValueError(str(exc)) from exc
        else:
            ids.add(int(item))
    mode = SemanticMode(class_filter=frozenset(ids), cross_view_strict=strict)
    mode.validate(table)
    return mode


# ---------------------------------------------------------------------------
# Stages


def stage_pairs(scene: Scene, out_dir, params: PairParams | None = None) -> PairSet:
    """Select stereo pairs and write ``pairs.json``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pairs = select_pairs(scene, params or PairParams())
    payload = json.dumps(pairs.to_jsonable(), indent=1, sort_keys=True)
    (out_dir / PAIRS_FILE).write_text(payload + "\n")
    return pairs


def load_pairs(out_dir) -> PairSet:
    path = Path(out_dir) / PAIRS_FILE
    if not path.is_file():
        raise FileNotFoundError(
            f"{path} not found: run the pairs stage on this directory first"
        )
    return PairSet.from_jsonable(json.loads(path.read_text()))


def stage_depth(
    scene: Scene,
    pairs: PairSet,
    out_dir,
    params: MatchParams | None = None,
    jobs: int = 1,
    refs: list[int] | None = None,
) -> dict[int, DepthMap]:
    """Compute and write ``depth_<id>.dmap`` for the requested references.

    ``refs=None`` covers every view that has at least one selected target;
    views without targets are skipped with a warning.  Views are processed
    in parallel up to ``jobs``; outputs do not depend on the schedule.
    """
    params = params or MatchParams()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    wanted = list(scene.view_ids) if refs is None else list(refs)

    work: list[tuple[View, list[View]]] = []
    for rid in wanted:
        targets = [scene.view(t) for t in pairs.target_ids(rid)]
        if not targets:
            log.warning("view %d has no selected targets; skipping depth", rid)
            continue
        work.append((scene.view(rid), targets))

    def _one(item):
        ref, targets = item
        return ref.id, compute_depth_map(ref, targets, scene, params)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = dict(pool.map(_one, work))
    else:
        results = dict(map(_one, work))

    for rid in sorted(results):
        write_depthmap(out_dir / f"depth_{rid}.dmap", results[rid])
    return results


def load_depth_maps(out_dir, prefix: str = "depth") -> dict[int, DepthMap]:
    out_dir = Path(out_dir)
    pattern = re.compile(rf"{prefix}_(\d+)\.dmap$")
    maps = {}
    for path in sorted(out_dir.glob(f"{prefix}_*.dmap")):
        match = pattern.match(path.name)
        if match:
            maps[int(match.group(1))] = read_depthmap(path)
    if not maps:
        raise FileNotFoundError(f"no {prefix}_*.dmap files in {out_dir}")
    return maps


def stage_filter(
    scene: Scene,
    pairs: PairSet,
    depth_maps: dict[int, DepthMap],
    out_dir,
    params: FilterParams | None = None,
) -> dict[int, DepthMap]:
    """Filter every map against the unfiltered originals; write results.

    Two-phase by construction: all outputs are derived from ``depth_maps``
    before any is swapped in, so the outcome is order-independent.
    """
    params = params or FilterParams()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    filtered = {}
    for rid in sorted(depth_maps):
        neighbors = [
            (scene.view(t), depth_maps[t])
            for t in pairs.target_ids(rid)
            if t in depth_maps
        ]
        filtered[rid] = filter_depth_map(
            depth_maps[rid], scene.view(rid), neighbors, params
        )
        write_depthmap(out_dir / f"filtered_{rid}.dmap", filtered[rid])
    return filtered


def stage_fuse(
    scene: Scene,
    pairs: PairSet,
    depth_maps: dict[int, DepthMap],
    out_dir,
    params: FilterParams | None = None,
    mode: SemanticMode | None = None,
    split: bool = False,
) -> tuple[FusedCloud, list[str]]:
    """Fuse depth maps into ``cloud.ply`` (+ per-class files when split)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cloud = fuse(scene, depth_maps, pairs, params, mode)
    if len(cloud) == 0:
        log.warning("fused cloud is empty")
    write_ply(out_dir / CLOUD_FILE, cloud)
    files = [CLOUD_FILE]
    if split:
        for cid, part in sorted(split_by_class(cloud).items()):
            if len(part) == 0:
                continue
            name = f"cloud_{scene.classes.by_id(cid).name}.ply"
            write_ply(out_dir / name, part)
            files.append(name)
    return cloud, files


# ---------------------------------------------------------------------------
# Full run


def _per_class_counts(cloud: FusedCloud) -> dict[str, int]:
    return {
        entry.name: int((cloud.labels == entry.id).sum())
        for entry in cloud.classes
        if (cloud.labels == entry.id).any()
    }


def _valid_fractions(maps: dict[int, DepthMap]) -> dict[str, float]:
    return {str(rid): float(maps[rid].valid_mask.mean()) for rid in sorted(maps)}


def run(config: RunConfig) -> dict:
    """Execute pairs → depth → filter → fuse and write ``report.json``.

    Raises:
        StageError: wrapping the first failing stage's exception.
    """
    try:
        scene = load_scene(config.scene)
    except Exception as exc:
        raise StageError("scene", exc) from exc

    out = config.out
    out.mkdir(parents=True, exist_ok=True)

    try:
        pairs = stage_pairs(scene, out, config.pair_params)
    except Exception as exc:
        raise StageError("pairs", exc) from exc

    try:
        depth_maps = stage_depth(
            scene, pairs, out, config.effective_match, jobs=config.jobs
        )
    except Exception as exc:
        raise StageError("depth", exc) from exc

    try:
        filtered = stage_filter(scene, pairs, depth_maps, out, config.filter_params)
    except Exception as exc:
        raise StageError("filter", exc) from exc

    try:
        mode = resolve_mode(config.classes, config.strict, scene.classes)
        cloud, files = stage_fuse(
            scene, pairs, filtered, out,
            params=config.filter_params, mode=mode, split=config.split,
        )
    except Exception as exc:
        raise StageError("fuse", exc) from exc

    report = {
        "scene": str(config.scene),
        "out": str(out),
        "seed": config.effective_seed,
        "pairs": {
            "total": pairs.total_pairs,
            "per_ref": {
                str(rid): pairs.target_ids(rid) for rid in sorted(pairs.by_ref)
            },
        },
        "depth": {"valid_fraction": _valid_fractions(depth_maps)},
        "filter": {"valid_fraction": _valid_fractions(filtered)},
        "fusion": {
            "points": len(cloud),
            "per_class": _per_class_counts(cloud),
            "classes": list(config.classes) if config.classes is not None else None,
            "strict": config.strict,
            "files": files,
        },
    }
    (out / REPORT_FILE).write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")
    return report
