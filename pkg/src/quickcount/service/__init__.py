"""FastAPI service wrapping the estimation engine.

All endpoints are stateless: every request carries its own catalog, frame
and data, so one server can serve many concurrent estimation sessions.
"""

from __future__ import annotations

import warnings
from datetime import datetime, timedelta

from fastapi import FastAPI, HTTPException

from .. import bayes, design, mi as mi_mod, poststrat, replay as rp
from .. import apportionment as app_mod
from ..bootstrap import bootstrap_chamber, percentile_interval
from ..catalog import Catalog, CatalogError
from ..sampleframe import DesignError, Frame, PartialSample, Station, StationReturn
from . import schemas as sc

app = FastAPI(title="quickcount", version="0.1.0")


def _frame(rows: list[sc.FrameRow]) -> Frame:
    return Frame(
        [
            Station(
                stratum=r.stratum_id,
                station=r.station_id,
                nominal_list=r.nominal_list,
                urban=r.urban,
                state=r.state,
                tz_offset=r.tz_offset,
            )
            for r in rows
        ]
    )


def _returns(rows: list[sc.ReturnRow], frame: Frame) -> list[StationReturn]:
    out = []
    for r in rows:
        st = frame.station(r.stratum_id, r.station_id)
        out.append(StationReturn(r.stratum_id, r.station_id, dict(r.votes), st.nominal_list))
    return out


def _planned(rows: list[sc.PlannedStation], frame: Frame) -> list[Station]:
    return [frame.station(r.stratum_id, r.station_id) for r in rows]


def _hierarchy(model: sc.HierarchyModel) -> poststrat.ClusteringHierarchy:
    import numpy as np

    return poststrat.ClusteringHierarchy(
        strata=list(model.strata),
        k_list=sorted(model.partitions),
        partitions={k: np.asarray(v) for k, v in model.partitions.items()},
    )


def _hierarchy_model(h: poststrat.ClusteringHierarchy) -> sc.HierarchyModel:
    return sc.HierarchyModel(
        strata=list(h.strata),
        k_list=list(h.k_list),
        partitions={k: [int(g) for g in v] for k, v in h.partitions.items()},
    )


def _winner_probs(probs: dict[int, dict[str, float]]) -> list[sc.WinnerProbability]:
    out = []
    for h in sorted(probs):
        for cid, p in sorted(probs[h].items()):
            out.append(sc.WinnerProbability(district=h, candidacy=cid, probability=p))
    return out


def _bad_request(exc: Exception) -> HTTPException:
    return HTTPException(status_code=422, detail=str(exc))


@app.get("/health")
def health():
    return {"status": "ok"}


@app.post("/apportionment/compose", response_model=sc.ComposeResponse)
def compose(req: sc.ComposeRequest):
    try:
        catalog = Catalog.from_dict(req.catalog)
        res = app_mod.compose_chamber(req.district_totals, catalog)
    except (CatalogError, app_mod.ApportionmentError) as exc:
        raise _bad_request(exc)
    return sc.ComposeResponse(
        majority=res.chamber.majority,
        pr=res.chamber.pr,
        totals=res.chamber.totals(),
        unassigned_pr=res.chamber.unassigned_pr,
        winners={w.district: w.candidacy for w in res.winners},
    )


@app.post("/estimate/frequentist", response_model=sc.FrequentistResponse)
def estimate_frequentist(req: sc.FrequentistRequest):
    try:
        catalog = Catalog.from_dict(req.catalog)
        frame = _frame(req.frame)
        sample = _returns(req.returns, frame)
        run = bootstrap_chamber(sample, frame, catalog, B=req.b, seed=req.seed)
    except (CatalogError, DesignError, app_mod.ApportionmentError) as exc:
        raise _bad_request(exc)
    intervals = []
    means = run.seat_totals.mean(axis=0)
    for j, f in enumerate(run.forces):
        lo, hi = percentile_interval(run.seat_totals[:, j], req.level)
        intervals.append(
            sc.IntervalRow(force=f, lower=lo, upper=hi, point=float(means[j]))
        )
    return sc.FrequentistResponse(
        intervals=intervals,
        level=req.level,
        b=req.b,
        winner_probabilities=_winner_probs(run.winner_probabilities()),
    )


@app.post("/estimate/bayes", response_model=sc.BayesResponse)
def estimate_bayes(req: sc.BayesRequest):
    try:
        catalog = Catalog.from_dict(req.catalog)
        frame = _frame(req.frame)
        sample = _returns(req.returns, frame)
        stats = bayes.sufficient_stats(sample, frame, catalog)
        received_fraction = None
        if not stats.observed_mask().all():
            if req.hierarchy is None:
                raise DesignError(
                    "strata without data: a clustering hierarchy is required"
                )
            stats = poststrat.impute_missing_strata(
                stats, _hierarchy(req.hierarchy), catalog.constants.max_nominal_list
            )
        level = req.level
        if level is None:
            if req.planned:
                received_fraction = len(sample) / len(req.planned)
            else:
                received_fraction = 1.0
            level = bayes.credibility_adjust(min(1.0, received_fraction))
        run = bayes.bayes_chamber(
            stats, frame, catalog, draws=req.draws, seed=req.seed, level=level
        )
    except (CatalogError, DesignError, bayes.EstimationError,
            poststrat.PoststratError, app_mod.ApportionmentError) as exc:
        raise _bad_request(exc)
    means = run.seat_totals.mean(axis=0)
    intervals = [
        sc.IntervalRow(
            force=f,
            lower=run.intervals[f][0],
            upper=run.intervals[f][1],
            point=float(means[j]),
        )
        for j, f in enumerate(run.forces)
    ]
    return sc.BayesResponse(
        intervals=intervals,
        level=level,
        draws=req.draws,
        received_fraction=received_fraction,
        winner_probabilities=_winner_probs(run.winner_probabilities()),
    )


@app.post("/estimate/mi", response_model=sc.MIResponse)
def estimate_mi(req: sc.MIRequest):
    try:
        catalog = Catalog.from_dict(req.catalog)
        frame = _frame(req.frame)
        planned = _planned(req.planned, frame)
        received = _returns(req.returns, frame)
        partial = PartialSample(frame=frame, planned=planned, received=received)
        config = mi_mod.ImputationConfig(
            m=req.m, iterations=req.iterations, donors=req.donors,
            predictors=req.predictors,
        )
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            res = mi_mod.mi_chamber(
                partial, frame, catalog, config=config, B=req.b,
                seed=req.seed, level=req.level,
            )
    except (CatalogError, DesignError, mi_mod.ImputationError,
            app_mod.ApportionmentError) as exc:
        raise _bad_request(exc)
    intervals = [
        sc.IntervalRow(
            force=f, lower=pe.lower, upper=pe.upper, point=pe.q_bar
        )
        for f, pe in res.pooled.items()
    ]
    return sc.MIResponse(
        intervals=intervals,
        level=req.level,
        m=req.m,
        b=req.b,
        warnings=sorted({str(w.message) for w in caught}),
    )


@app.post("/cluster", response_model=sc.ClusterResponse)
def cluster(req: sc.ClusterRequest):
    try:
        catalog = Catalog.from_dict(req.catalog)
        frame = _frame(req.frame)
        historic = _returns(req.historic, frame)
        profiles = poststrat.build_profiles(historic, frame, catalog)
        hierarchy = poststrat.build_hierarchy(profiles, req.k_list)
    except (CatalogError, DesignError, poststrat.PoststratError) as exc:
        raise _bad_request(exc)
    return sc.ClusterResponse(hierarchy=_hierarchy_model(hierarchy))


@app.post("/design/allocate", response_model=sc.AllocateResponse)
def design_allocate(req: sc.AllocateRequest):
    try:
        frame = _frame(req.frame)
        rules = [
            design.AugmentationRule(extra=r.extra, state=r.state, tz_offset=r.tz_offset)
            for r in req.rules
        ]
        if req.use_default_rules:
            rules = design.default_augmentation_rules()
        alloc = design.allocate_sample(frame, req.base, rules)
    except (DesignError, ValueError) as exc:
        raise _bad_request(exc)
    return sc.AllocateResponse(allocation=alloc, total=sum(alloc.values()))


@app.post("/design/errors", response_model=sc.ErrorBoundsResponse)
def design_errors(req: sc.ErrorBoundsRequest):
    try:
        catalog = Catalog.from_dict(req.catalog)
        frame = _frame(req.frame)
        population = _returns(req.population, frame)
        bounds = design.simulate_error_bounds(
            population, frame, catalog, req.n_totals, reps=req.reps,
            estimator=req.estimator, seed=req.seed, level=req.level,
        )
    except (CatalogError, DesignError, ValueError) as exc:
        raise _bad_request(exc)
    return sc.ErrorBoundsResponse(
        n_totals=bounds.n_totals, eps1=bounds.eps1, eps2=bounds.eps2,
        level=bounds.level,
    )


@app.post("/replay", response_model=sc.ReplayResponse)
def run_replay(req: sc.ReplayRequest):
    try:
        catalog = Catalog.from_dict(req.catalog)
        frame = _frame(req.frame)
        planned = _planned(req.planned, frame)
        events = []
        for e in req.log:
            st = frame.station(e.stratum_id, e.station_id)
            events.append(
                rp.ArrivalEvent(
                    datetime.fromisoformat(e.timestamp),
                    StationReturn(e.stratum_id, e.station_id, dict(e.votes), st.nominal_list),
                )
            )
        hierarchy = _hierarchy(req.hierarchy) if req.hierarchy else None
        series = rp.replay(
            rp.ArrivalLog(events),
            frame,
            catalog,
            planned,
            hierarchy,
            methods=tuple(req.methods),
            cadence=timedelta(minutes=req.cadence_minutes),
            seed=req.seed,
            draws=req.draws,
            B=req.b,
            mi_config=mi_mod.ImputationConfig(
                m=req.m, iterations=req.iterations, donors=req.donors
            ),
            base_level=req.level,
        )
    except (CatalogError, DesignError, ValueError) as exc:
        raise _bad_request(exc)
    return sc.ReplayResponse(
        series=[sc.SeriesRow(**row) for row in series.rows],
        rejected=[sc.RejectedEvent(**r) for r in series.rejected],
    )


@app.post("/simulate/arrival", response_model=sc.SimulateArrivalResponse)
def simulate_arrival(req: sc.SimulateArrivalRequest):
    try:
        catalog = Catalog.from_dict(req.catalog)
        frame = _frame(req.frame)
        sample = _returns(req.sample, frame)
        bias = rp.ArrivalBias(
            list_delay=req.list_delay,
            rural_delay=req.rural_delay,
            tz_delay=req.tz_delay,
            scale_minutes=req.scale_minutes,
        )
        start = datetime.fromisoformat(req.start) if req.start else None
        log = rp.simulate_arrival(frame, sample, bias, seed=req.seed, start=start)
    except (CatalogError, DesignError, ValueError) as exc:
        raise _bad_request(exc)
    option_ids = catalog.option_ids()
    return sc.SimulateArrivalResponse(
        log=[
            sc.ArrivalEventModel(
                timestamp=e.time.isoformat(),
                stratum_id=e.ret.stratum,
                station_id=e.ret.station,
                votes={o: e.ret.votes.get(o) for o in option_ids},
            )
            for e in log.events
        ]
    )
