"""Request/response models for the reconstruction service.

Parameter models mirror the core dataclasses field-for-field so a request
body is exactly the JSON form of a run configuration; ``to_params`` hands
back the validated core object.
"""

from __future__ import annotations

from pydantic import BaseModel, Field

from ..depth_filter import FilterParams
from ..pair_select import PairParams
from ..patchmatch import MatchParams


class PairParamsModel(BaseModel):
    theta_min: float = 5.0
    theta_max: float = 60.0
    baseline_low_factor: float = 0.05
    baseline_high_factor: float = 2.0
    max_targets: int = 4

    def to_params(self) -> PairParams:
        return PairParams(**self.model_dump())


class MatchParamsModel(BaseModel):
    window: int = 3
    iterations: int = 3
    range_expansion: float = 1.25
    cost_undefined: float = 2.0
    cost_cap: float = 2.0
    refinement_samples: int = 6
    seed: int = 0
    fronto_only: bool = False

    def to_params(self) -> MatchParams:
        return MatchParams(**self.model_dump())


class FilterParamsModel(BaseModel):
    k: int = 2
    tau: float = 0.01

    def to_params(self) -> FilterParams:
        return FilterParams(**self.model_dump())


class PairsRequest(BaseModel):
    scene: str
    out: str
    pairs: PairParamsModel = Field(default_factory=PairParamsModel)


class PairEntryModel(BaseModel):
    target: int
    shared: int
    angle_deg: float
    baseline: float


class PairsResponse(BaseModel):
    total: int
    by_ref: dict[str, list[PairEntryModel]]


class DepthRequest(BaseModel):
    scene: str
    out: str
    match: MatchParamsModel = Field(default_factory=MatchParamsModel)
    jobs: int = 1
    ref: int | None = None  # a single reference view; None = all


class MapStageResponse(BaseModel):
    views: list[int]
    valid_fraction: dict[str, float]
    files: list[str]


class FilterRequest(BaseModel):
    scene: str
    out: str
    filter: FilterParamsModel = Field(default_factory=FilterParamsModel)


class FuseRequest(BaseModel):
    scene: str
    out: str
    filter: FilterParamsModel = Field(default_factory=FilterParamsModel)
    classes: list[str | int] | None = None
    strict: bool = False
    split: bool = False


class FuseResponse(BaseModel):
    points: int
    per_class: dict[str, int]
    files: list[str]


class RunRequest(BaseModel):
    scene: str
    out: str
    pairs: PairParamsModel = Field(default_factory=PairParamsModel)
    match: MatchParamsModel = Field(default_factory=MatchParamsModel)
    filter: FilterParamsModel = Field(default_factory=FilterParamsModel)
    classes: list[str | int] | None = None
    strict: bool = False
    split: bool = False
    seed: int | None = None  # overrides match.seed when given
    jobs: int = 1


class RunReportPairs(BaseModel):
    total: int
    per_ref: dict[str, list[int]]


class RunReportMaps(BaseModel):
    valid_fraction: dict[str, float]


class RunReportFusion(BaseModel):
    points: int
    per_class: dict[str, int]
    classes: list[str | int] | None
    strict: bool
    files: list[str]


class RunResponse(BaseModel):
    scene: str
    out: str
    seed: int
    pairs: RunReportPairs
    depth: RunReportMaps
    filter: RunReportMaps
    fusion: RunReportFusion


class SynthRequest(BaseModel):
    spec: str  # path to the JSON layout spec
    out: str
    seed: int | None = None  # overrides the layout spec's seed when given


class SynthResponse(BaseModel):
    manifest: str
    views: int
