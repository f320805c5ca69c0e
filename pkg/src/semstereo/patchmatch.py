"""Depth-map estimation: random slanted-plane init, propagation, refinement.

Every pixel carries a slanted support plane (depth along its viewing ray
plus a camera-facing unit normal).  The map is seeded randomly (biased
toward projected sparse points), then improved by alternating serpentine
sweeps that propagate good planes from causal neighbors and try randomly
perturbed hypotheses with geometrically shrinking radii.  Matching cost is
mean-over-targets (1 - ZNCC) on plane-warped windows, in [0, 2].

Determinism contract: all randomness is drawn up front from streams keyed
by (seed, view id, stream, iteration) and indexed per pixel, so results are
a pure function of scene bytes + parameters and are independent of any
execution schedule across views.  Within one map the sweep is sequential by
definition.  State is stored in float32 (the depth-map file precision) and
candidates are cast to float32 before scoring, making staged runs that go
through files bit-identical to in-memory runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import NoDepthPriorError
from .geometry import PlaneHypothesis, project, ray_grid
from .scene_io import DepthMap, Scene, View

#: RNG stream ids (third SeedSequence component)
_STREAM_INIT_DEPTH = 0
_STREAM_INIT_NORMAL = 1
_STREAM_SEED_PERTURB = 2
_STREAM_REFINE = 3


@dataclass(frozen=True)
class MatchParams:
    """Tunables for depth-map computation; defaults are the tested ones."""

    window: int = 3  # half-size: 7x7 support window
    iterations: int = 3
    range_expansion: float = 1.25
    cost_undefined: float = 2.0
    cost_cap: float = 2.0
    refinement_samples: int = 6
    seed: int = 0
    fronto_only: bool = False  # ablation: lock normals to the optical axis

    def __post_init__(self) -> None:
        if self.window < 1:
            raise ValueError(f"window half-size must be >= 1, got {self.window}")
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if self.range_expansion < 1.0:
            raise ValueError(
                f"range expansion must be >= 1, got {self.range_expansion}"
            )
        if self.refinement_samples < 0:
            raise ValueError("refinement_samples must be >= 0")
        if self.seed < 0:
            raise ValueError("seed must be a non-negative integer")


def _rng(params: MatchParams, view_id: int, stream: int, iteration: int):
    return np.random.default_rng(
        np.random.SeedSequence((params.seed, view_id, stream, iteration))
    )


def depth_range(scene: Scene, ref: View, params: MatchParams) -> tuple[float, float]:
    """Search interval from the sparse points visible in the reference view.

    The min/max projected depths are widened by the expansion factor on both
    ends.  A view with no visible sparse point has no usable prior.
    """
    depths = []
    for pt in scene.points:
        if ref.id in pt.visible_in:
            _, lam = project(pt.xyz, ref.intrinsics, ref.pose)
            depths.append(lam)
    if not depths:
        raise NoDepthPriorError(
            f"view {ref.id}: no visible sparse point to bound the depth search"
        )
    d_min = min(depths) / params.range_expansion
    d_max = max(depths) * params.range_expansion
    return d_min, d_max


def zncc(window_a: np.ndarray, window_b: np.ndarray) -> float | None:
    """Zero-mean normalized cross-correlation in [-1, 1].

    Returns None when either window has (numerically) zero variance, i.e.
    the correlation is undefined; callers map that to the undefined cost.
    """
    a = np.asarray(window_a, dtype=np.float64).ravel()
    b = np.asarray(window_b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"window sizes differ: {a.shape} vs {b.shape}")
    a = a - a.mean()
    b = b - b.mean()
    var_a = float(a @ a) / a.size
    var_b = float(b @ b) / b.size
    if var_a <= _kernels.VAR_EPS or var_b <= _kernels.VAR_EPS:
        return None
    score = float(a @ b) / (a.size * np.sqrt(var_a * var_b))
    return float(np.clip(score, -1.0, 1.0))


def _target_pack(ref: View, targets: list[View]):
    """Stack target images and precompute per-target warp matrices."""
    if not targets:
        raise ValueError("at least one target view is required")
    max_h = max(t.height for t in targets)
    max_w = max(t.width for t in targets)
    n = len(targets)
    imgs = np.zeros((n, max_h, max_w), dtype=np.float32)
    th = np.zeros(n, dtype=np.int64)
    tw = np.zeros(n, dtype=np.int64)
    A = np.zeros((n, 3, 3))
    bvec = np.zeros((n, 3))
    c_rel = np.zeros((n, 3))
    R_r, C_r = ref.pose.R, ref.pose.C
    for i, t in enumerate(targets):
        imgs[i, : t.height, : t.width] = t.image
        th[i] = t.height
        tw[i] = t.width
        R_rel = t.pose.R @ R_r.T
        t_rel = t.pose.R @ (C_r - t.pose.C)
        K_t = t.intrinsics.K
        A[i] = K_t @ R_rel
        bvec[i] = K_t @ t_rel
        c_rel[i] = R_r @ (t.pose.C - C_r)
    return imgs, th, tw, A, bvec, c_rel, np.ascontiguousarray(ref.intrinsics.K_inv)


def plane_cost(
    ref: View,
    targets: list[View],
    pixel: tuple[float, float],
    hyp: PlaneHypothesis,
    params: MatchParams | None = None,
) -> float:
    """Aggregated (mean over targets) window-matching cost of one hypothesis."""
    params = params or MatchParams()
    imgs, th, tw, A, bvec, c_rel, Krinv = _target_pack(ref, targets)
    return float(
        _kernels.hyp_cost(
            int(np.floor(pixel[0] + 0.5)),
            int(np.floor(pixel[1] + 0.5)),
            float(np.float32(hyp.depth)),
            float(np.float32(hyp.normal[0])),
            float(np.float32(hyp.normal[1])),
            float(np.float32(hyp.normal[2])),
            ref.image,
            imgs,
            th,
            tw,
            A,
            bvec,
            c_rel,
            Krinv,
            params.window,
            params.cost_cap,
            params.cost_undefined,
        )
    )


def _pixel_rays(ref: View) -> np.ndarray:
    """(H, W, 3) unit-z viewing rays for every pixel."""
    return ray_grid(ref.intrinsics, ref.width, ref.height)


def init_depth_map(
    ref: View, targets: list[View], scene: Scene, params: MatchParams | None = None
) -> DepthMap:
    """Random initialization biased toward the sparse prior.

    Pixels within 2*window of a projected visible sparse point start from
    that point's depth perturbed by up to +/-2 percent; everything else is
    uniform over the search range.  Normals are uniform over the camera-
    facing hemisphere (or locked to the optical axis in fronto-only mode).
    The cost plane is filled by scoring every initial hypothesis.
    """
    params = params or MatchParams()
    d_min, d_max = depth_range(scene, ref, params)
    h, w = ref.height, ref.width

    depth = _rng(params, ref.id, _STREAM_INIT_DEPTH, 0).uniform(
        d_min, d_max, size=(h, w)
    )

    perturb = _rng(params, ref.id, _STREAM_SEED_PERTURB, 0).uniform(
        -0.02, 0.02, size=(h, w)
    )
    radius = 2 * params.window
    ys, xs = np.mgrid[-radius : radius + 1, -radius : radius + 1]
    disk = ys * ys + xs * xs <= radius * radius
    for pt in scene.points:
        if ref.id not in pt.visible_in:
            continue
        (u, v), lam = project(pt.xyz, ref.intrinsics, ref.pose)
        cu, cv = int(np.floor(u + 0.5)), int(np.floor(v + 0.5))
        for dy, dx in zip(*np.nonzero(disk)):
            py, px = cv + dy - radius, cu + dx - radius
            if 0 <= py < h and 0 <= px < w:
                depth[py, px] = lam * (1.0 + perturb[py, px])
    np.clip(depth, d_min, d_max, out=depth)

    rays = _pixel_rays(ref)
    if params.fronto_only:
        normal = np.zeros((h, w, 3))
        normal[:, :, 2] = -1.0
    else:
        g = _rng(params, ref.id, _STREAM_INIT_NORMAL, 0).standard_normal(
            size=(h, w, 3)
        )
        g /= np.linalg.norm(g, axis=-1, keepdims=True)
        dots = np.einsum("hwc,hwc->hw", g, rays)
        g[dots > 0] *= -1.0
        # measure-zero guard: ray-orthogonal draws fall back to the ray itself
        degenerate = np.abs(dots) < 1e-12
        if degenerate.any():
            fallback = -rays[degenerate]
            fallback /= np.linalg.norm(fallback, axis=-1, keepdims=True)
            g[degenerate] = fallback
        normal = g

    dm = DepthMap(
        depth.astype(np.float32),
        normal.astype(np.float32),
        np.zeros((h, w), dtype=np.float32),
    )
    return evaluate_costs(dm, ref, targets, params)


def evaluate_costs(
    dm: DepthMap, ref: View, targets: list[View], params: MatchParams | None = None
) -> DepthMap:
    """Re-score every stored hypothesis into the cost plane, in place.

    Useful for depth maps loaded from disk or constructed by hand before
    running sweeps over them.
    """
    params = params or MatchParams()
    imgs, th, tw, A, bvec, c_rel, Krinv = _target_pack(ref, targets)
    _kernels.eval_all(
        dm.depth, dm.normal, dm.cost, ref.image, imgs, th, tw, A, bvec, c_rel,
        Krinv, params.window, params.cost_cap, params.cost_undefined,
    )
    return dm


def propagate_and_refine(
    dm: DepthMap,
    ref: View,
    targets: list[View],
    bounds: tuple[float, float],
    params: MatchParams,
    iteration: int,
) -> DepthMap:
    """One full sweep over the map, in place (also returned for chaining).

    Even iterations traverse top-left to bottom-right taking left/top
    neighbor planes as candidates; odd iterations mirror both.  Candidates
    (neighbor planes re-evaluated at the pixel, then randomly perturbed
    hypotheses) are adopted only on strictly lower cost, so per-pixel cost
    never increases.
    """
    imgs, th, tw, A, bvec, c_rel, Krinv = _target_pack(ref, targets)
    rng = _rng(params, ref.id, _STREAM_REFINE, iteration)
    s = params.refinement_samples
    h, w = ref.height, ref.width
    depth_draws = rng.uniform(-1.0, 1.0, size=(h, w, s))
    mag_draws = rng.random(size=(h, w, s))
    dir_draws = rng.standard_normal(size=(h, w, s, 3))
    _kernels.sweep(
        dm.depth, dm.normal, dm.cost, ref.image, imgs, th, tw, A, bvec, c_rel,
        Krinv, params.window, params.cost_cap, params.cost_undefined,
        float(bounds[0]), float(bounds[1]), bool(iteration % 2),
        depth_draws, mag_draws, dir_draws, params.fronto_only,
    )
    return dm


def compute_depth_map(
    ref: View,
    targets: list[View],
    scene: Scene,
    params: MatchParams | None = None,
) -> DepthMap:
    """Full per-view pipeline: init, alternating sweeps, rejection.

    Pixels whose final cost reaches the cap (no target window matched) are
    marked invalid: depth zeroed, normal zeroed, cost kept for diagnostics.
    """
    params = params or MatchParams()
    if not targets:
        raise ValueError(f"view {ref.id}: no target views to match against")
    bounds = depth_range(scene, ref, params)
    dm = init_depth_map(ref, targets, scene, params)
    for it in range(params.iterations):
        propagate_and_refine(dm, ref, targets, bounds, params, it)
    dm.invalidate(dm.cost >= np.float32(params.cost_cap))
    return dm
