"""Semantic patch-based multi-view stereo.

Reconstructs dense, class-labeled point clouds from posed images and
per-pixel semantic label maps: stereo-pair selection over a sparse prior,
PatchMatch depth estimation with slanted support planes, multi-view
geometric filtering, and label-consistent fusion into per-class clouds.
"""

__version__ = "0.1.0"

from .depth_filter import FilterParams, filter_depth_map
from .errors import (
    BehindCameraError,
    DegenerateHomographyError,
    GeometryError,
    NoDepthPriorError,
    SceneFormatError,
    StageError,
)
from .geometry import Intrinsics, PlaneHypothesis, Pose
from .pair_select import PairParams, PairSet, select_pairs
from .patchmatch import MatchParams, compute_depth_map
from .pipeline import RunConfig, load_config, run
from .scene_io import (
    ClassTable,
    DepthMap,
    Scene,
    SparsePoint,
    View,
    load_scene,
    read_depthmap,
    write_depthmap,
    write_ply,
)
from .semantic_fusion import FusedCloud, SemanticMode, fuse, split_by_class
from .synth import SynthSpec, generate_scene, load_spec

__all__ = [
    "BehindCameraError",
    "ClassTable",
    "DegenerateHomographyError",
    "DepthMap",
    "FilterParams",
    "FusedCloud",
    "GeometryError",
    "Intrinsics",
    "MatchParams",
    "NoDepthPriorError",
    "PairParams",
    "PairSet",
    "PlaneHypothesis",
    "Pose",
    "RunConfig",
    "Scene",
    "SceneFormatError",
    "SemanticMode",
    "SparsePoint",
    "StageError",
    "SynthSpec",
    "View",
    "compute_depth_map",
    "filter_depth_map",
    "fuse",
    "generate_scene",
    "load_config",
    "load_scene",
    "load_spec",
    "read_depthmap",
    "run",
    "select_pairs",
    "split_by_class",
    "write_depthmap",
    "write_ply",
    "__version__",
]
