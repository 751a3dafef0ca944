"""Pydantic request/response models for the estimation service.

The wire format mirrors the flat-file formats: frames and returns travel as
row lists, the catalog as its config mapping, hierarchies as label tables.
"""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field


class FrameRow(BaseModel):
    stratum_id: int
    station_id: int
    nominal_list: int
    urban: bool = True
    state: str = ""
    tz_offset: int = 0


class ReturnRow(BaseModel):
    stratum_id: int
    station_id: int
    votes: dict[str, int | None]


class PlannedStation(BaseModel):
    stratum_id: int
    station_id: int


class HierarchyModel(BaseModel):
    strata: list[int]
    k_list: list[int]
    partitions: dict[int, list[int]]  # k -> group label per stratum


class IntervalRow(BaseModel):
    force: str
    lower: int
    upper: int
    point: float


class WinnerProbability(BaseModel):
    district: int
    candidacy: str
    probability: float


# -- apportionment ----------------------------------------------------------


class ComposeRequest(BaseModel):
    catalog: dict
    district_totals: dict[int, dict[str, float]]


class ComposeResponse(BaseModel):
    majority: dict[str, int]
    pr: dict[str, int]
    totals: dict[str, int]
    unassigned_pr: int
    winners: dict[int, str]


# -- estimators -------------------------------------------------------------


class FrequentistRequest(BaseModel):
    catalog: dict
    frame: list[FrameRow]
    returns: list[ReturnRow]
    b: int = Field(default=300, alias="B")
    level: float = 0.95
    seed: int = 0

    model_config = {"populate_by_name": True}


class FrequentistResponse(BaseModel):
    intervals: list[IntervalRow]
    level: float
    b: int
    winner_probabilities: list[WinnerProbability]


class BayesRequest(BaseModel):
    catalog: dict
    frame: list[FrameRow]
    returns: list[ReturnRow]
    hierarchy: HierarchyModel | None = None
    planned: list[PlannedStation] | None = None
    draws: int = 10_000
    level: float | None = None  # None: credibility-adjusted from received fraction
    seed: int = 0


class BayesResponse(BaseModel):
    intervals: list[IntervalRow]
    level: float
    draws: int
    received_fraction: float | None = None
    winner_probabilities: list[WinnerProbability]


class MIRequest(BaseModel):
    catalog: dict
    frame: list[FrameRow]
    planned: list[PlannedStation]
    returns: list[ReturnRow]
    m: int = 15
    iterations: int = 5
    donors: int = 5
    predictors: list[str] | None = None
    b: int = Field(default=300, alias="B")
    level: float = 0.95
    seed: int = 0

    model_config = {"populate_by_name": True}


class MIResponse(BaseModel):
    intervals: list[IntervalRow]
    level: float
    m: int
    b: int
    warnings: list[str] = []


# -- clustering -------------------------------------------------------------


class ClusterRequest(BaseModel):
    catalog: dict
    frame: list[FrameRow]
    historic: list[ReturnRow]
    k_list: list[int] = [1, 10, 20, 50, 100, 200, 300]


class ClusterResponse(BaseModel):
    hierarchy: HierarchyModel


# -- design -----------------------------------------------------------------


class AugmentationRuleModel(BaseModel):
    extra: int
    state: str | None = None
    tz_offset: int | None = None


class AllocateRequest(BaseModel):
    frame: list[FrameRow]
    base: int = 20
    rules: list[AugmentationRuleModel] = []
    use_default_rules: bool = False


class AllocateResponse(BaseModel):
    allocation: dict[int, int]
    total: int


class ErrorBoundsRequest(BaseModel):
    catalog: dict
    frame: list[FrameRow]
    population: list[ReturnRow]
    n_totals: list[int]
    reps: int = 200
    estimator: Literal["freq", "bayes"] = "freq"
    seed: int = 0
    level: float = 0.95


class ErrorBoundsResponse(BaseModel):
    n_totals: list[int]
    eps1: list[float]
    eps2: list[float]
    level: float


# -- replay -----------------------------------------------------------------


class ArrivalEventModel(BaseModel):
    timestamp: str  # ISO-8601
    stratum_id: int
    station_id: int
    votes: dict[str, int | None]


class ReplayRequest(BaseModel):
    catalog: dict
    frame: list[FrameRow]
    planned: list[PlannedStation]
    log: list[ArrivalEventModel]
    hierarchy: HierarchyModel | None = None
    methods: list[Literal["bayes", "mi"]] = ["bayes", "mi"]
    cadence_minutes: float = 5.0
    seed: int = 0
    draws: int = 10_000
    b: int = Field(default=300, alias="B")
    m: int = 15
    iterations: int = 5
    donors: int = 5
    level: float = 0.95

    model_config = {"populate_by_name": True}


class SeriesRow(BaseModel):
    tick: int
    timestamp: str
    received: int
    received_fraction: float
    strata_with_data: int
    method: str
    force: str
    lower: int
    upper: int
    point: float
    level: float


class RejectedEvent(BaseModel):
    timestamp: str
    stratum_id: int
    station_id: int
    reason: str


class ReplayResponse(BaseModel):
    series: list[SeriesRow]
    rejected: list[RejectedEvent] = []


class SimulateArrivalRequest(BaseModel):
    catalog: dict
    frame: list[FrameRow]
    sample: list[ReturnRow]
    list_delay: float = 0.0
    rural_delay: float = 0.0
    tz_delay: float = 0.0
    scale_minutes: float = 60.0
    start: str | None = None
    seed: int = 0


class SimulateArrivalResponse(BaseModel):
    log: list[ArrivalEventModel]
