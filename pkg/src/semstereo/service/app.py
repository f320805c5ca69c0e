"""HTTP endpoints wrapping the reconstruction stages.

Each endpoint reads and writes artifacts on the server's filesystem (the
request carries paths, not pixel data) and returns the stage's summary
counts.  Domain failures map to 404 (missing files) or 422 (invalid
scenes, parameters or class names).
"""

from __future__ import annotations

import logging
from contextlib import contextmanager
from dataclasses import replace

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..errors import StageError
from ..pipeline import (
    RunConfig,
    load_depth_maps,
    load_pairs,
    resolve_mode,
    run,
    stage_depth,
    stage_filter,
    stage_fuse,
    stage_pairs,
)
from ..scene_io import load_scene
from ..synth import generate_scene, load_spec
from . import schemas

log = logging.getLogger(__name__)

app = FastAPI(title="semstereo", version=__version__)


@contextmanager
def _domain_errors():
    """Translate domain exceptions into HTTP error responses."""
    try:
        yield
    except StageError as exc:
        status = 404 if isinstance(exc.cause, FileNotFoundError) else 422
        raise HTTPException(status_code=status, detail=str(exc)) from exc
    except FileNotFoundError as exc:
        raise HTTPException(status_code=404, detail=str(exc)) from exc
    except (ValueError, KeyError) as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc


@app.get("/")
def info() -> dict:
    return {"name": "semstereo", "version": __version__}


@app.post("/pairs", response_model=schemas.PairsResponse)
def pairs_endpoint(req: schemas.PairsRequest) -> schemas.PairsResponse:
    with _domain_errors():
        scene = load_scene(req.scene)
        pairs = stage_pairs(scene, req.out, req.pairs.to_params())
    return schemas.PairsResponse(total=pairs.total_pairs, by_ref=pairs.to_jsonable())


@app.post("/depth", response_model=schemas.MapStageResponse)
def depth_endpoint(req: schemas.DepthRequest) -> schemas.MapStageResponse:
    with _domain_errors():
        scene = load_scene(req.scene)
        pairs = load_pairs(req.out)
        refs = None if req.ref is None else [req.ref]
        maps = stage_depth(
            scene, pairs, req.out, req.match.to_params(), jobs=req.jobs, refs=refs
        )
    return schemas.MapStageResponse(
        views=sorted(maps),
        valid_fraction={
            str(rid): float(maps[rid].valid_mask.mean()) for rid in sorted(maps)
        },
        files=[f"depth_{rid}.dmap" for rid in sorted(maps)],
    )


@app.post("/filter", response_model=schemas.MapStageResponse)
def filter_endpoint(req: schemas.FilterRequest) -> schemas.MapStageResponse:
    with _domain_errors():
        scene = load_scene(req.scene)
        pairs = load_pairs(req.out)
        depth_maps = load_depth_maps(req.out, prefix="depth")
        filtered = stage_filter(
            scene, pairs, depth_maps, req.out, req.filter.to_params()
        )
    return schemas.MapStageResponse(
        views=sorted(filtered),
        valid_fraction={
            str(rid): float(filtered[rid].valid_mask.mean())
            for rid in sorted(filtered)
        },
        files=[f"filtered_{rid}.dmap" for rid in sorted(filtered)],
    )


@app.post("/fuse", response_model=schemas.FuseResponse)
def fuse_endpoint(req: schemas.FuseRequest) -> schemas.FuseResponse:
    with _domain_errors():
        scene = load_scene(req.scene)
        pairs = load_pairs(req.out)
        maps = load_depth_maps(req.out, prefix="filtered")
        mode = resolve_mode(req.classes, req.strict, scene.classes)
        cloud, files = stage_fuse(
            scene, pairs, maps, req.out,
            params=req.filter.to_params(), mode=mode, split=req.split,
        )
    per_class = {
        entry.name: int((cloud.labels == entry.id).sum())
        for entry in scene.classes
        if (cloud.labels == entry.id).any()
    }
    return schemas.FuseResponse(points=len(cloud), per_class=per_class, files=files)


@app.post("/run", response_model=schemas.RunResponse)
def run_endpoint(req: schemas.RunRequest) -> schemas.RunResponse:
    with _domain_errors():
        config = RunConfig(
            scene=req.scene,
            out=req.out,
            pair_params=req.pairs.to_params(),
            match_params=req.match.to_params(),
            filter_params=req.filter.to_params(),
            classes=tuple(req.classes) if req.classes is not None else None,
            strict=req.strict,
            split=req.split,
            seed=req.seed,
            jobs=req.jobs,
        )
        report = run(config)
    return schemas.RunResponse(**report)


@app.post("/synth", response_model=schemas.SynthResponse)
def synth_endpoint(req: schemas.SynthRequest) -> schemas.SynthResponse:
    with _domain_errors():
        spec = load_spec(req.spec)
        if req.seed is not None:
            spec = replace(spec, seed=req.seed)
        manifest = generate_scene(spec, req.out)
    return schemas.SynthResponse(manifest=str(manifest), views=spec.arc.count)
