"""Shared synthetic scenes, generated once per test session.

Three layouts cover the test matrix:

* fronto: two toed-in views of a wall square to the approach axis — the
  easiest matching case, used for accuracy floors.
* slanted: the same arc swung 45 degrees around the wall, so the surface
  crosses the viewing rays obliquely — exercises the slanted-plane model.
* facade: four views of a wall with an inset window behind an opening and
  a flat (textureless) sky backdrop — the class-filtering and fusion
  playground.
"""

from __future__ import annotations

import pytest

from semstereo.pair_select import select_pairs
from semstereo.scene_io import load_scene, read_depthmap
from semstereo.synth import CameraArc, Rect, SynthSpec, Texture, generate_scene


def fronto_spec() -> SynthSpec:
    return SynthSpec(
        arc=CameraArc(
            count=2,
            radius=10.0,
            look_at=(0.0, 0.0, 10.0),
            focal=300.0,
            width=160,
            height=120,
            span_deg=12.0,
        ),
        rects=(
            Rect(
                axis="z",
                offset=10.0,
                u_range=(-8.0, 8.0),
                v_range=(-6.0, 6.0),
                class_id=0,
                texture=Texture(kind="checker", period=0.115, seed=3),
            ),
        ),
        seed=5,
    )


def slanted_spec() -> SynthSpec:
    return SynthSpec(
        arc=CameraArc(
            count=2,
            radius=10.0,
            look_at=(0.0, 0.0, 10.0),
            focal=300.0,
            width=160,
            height=120,
            span_deg=12.0,
            center_deg=45.0,
        ),
        rects=(
            Rect(
                axis="z",
                offset=10.0,
                u_range=(-10.0, 4.0),
                v_range=(-6.0, 6.0),
                class_id=0,
                texture=Texture(kind="checker", period=0.115, seed=3),
            ),
        ),
        seed=5,
    )


def facade_spec() -> SynthSpec:
    hole = ((-1.0, 1.0), (-0.8, 0.8))
    return SynthSpec(
        arc=CameraArc(
            count=4,
            radius=10.0,
            look_at=(0.0, 0.0, 10.0),
            focal=260.0,
            width=160,
            height=120,
            span_deg=36.0,
        ),
        rects=(
            Rect(
                axis="z",
                offset=10.0,
                u_range=(-5.0, 5.0),
                v_range=(-3.5, 3.5),
                class_id=0,
                texture=Texture(kind="checker", period=0.13, seed=3),
                holes=(hole,),
            ),
            Rect(
                axis="z",
                offset=10.5,
                u_range=(-1.15, 1.15),
                v_range=(-0.95, 0.95),
                class_id=3,
                texture=Texture(kind="noise", period=0.15, seed=8),
            ),
            Rect(
                axis="z",
                offset=30.0,
                u_range=(-40.0, 40.0),
                v_range=(-25.0, 25.0),
                class_id=1,
                texture=Texture(kind="flat", level=0.55),
            ),
        ),
        sparse_count=40,
        seed=5,
    )


class SceneBundle:
    """A generated scene plus everything tests keep re-deriving from it."""

    def __init__(self, out_dir, spec: SynthSpec):
        self.dir = out_dir
        self.spec = spec
        self.manifest = generate_scene(spec, out_dir)
        self.scene = load_scene(self.manifest)
        self.pairs = select_pairs(self.scene)

    def gt(self, view_id: int):
        return read_depthmap(self.dir / f"gt_{view_id}.dmap")

    def targets(self, ref_id: int):
        return [self.scene.view(i) for i in self.pairs.target_ids(ref_id)]


@pytest.fixture(scope="session")
def fronto(tmp_path_factory) -> SceneBundle:
    return SceneBundle(tmp_path_factory.mktemp("fronto"), fronto_spec())


@pytest.fixture(scope="session")
def slanted(tmp_path_factory) -> SceneBundle:
    return SceneBundle(tmp_path_factory.mktemp("slanted"), slanted_spec())


@pytest.fixture(scope="session")
def facade(tmp_path_factory) -> SceneBundle:
    return SceneBundle(tmp_path_factory.mktemp("facade"), facade_spec())
