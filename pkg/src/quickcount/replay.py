"""Election-night replay: rebuild the partial sample at each update tick,
run both estimation pipelines and emit the time series of interval estimates.
Includes a biased-arrival simulator for synthetic logs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta

import pandas as pd

from . import bayes, mi as mi_mod, poststrat
from .catalog import Catalog
from .rngs import stream
from .sampleframe import Frame, PartialSample, Station, StationReturn


@dataclass(frozen=True)
class ArrivalEvent:
    time: datetime
    ret: StationReturn


@dataclass
class ArrivalLog:
    events: list[ArrivalEvent]

    def __post_init__(self):
        self.events = sorted(self.events, key=lambda e: (e.time, e.ret.stratum, e.ret.station))
        seen = set()
        for e in self.events:
            key = (e.ret.stratum, e.ret.station)
            if key in seen:
                raise ValueError(f"duplicate station in arrival log: {key}")
            seen.add(key)

    def to_csv(self, path, option_ids) -> None:
        rows = []
        for e in self.events:
            row = {
                "timestamp": e.time.isoformat(),
                "stratum_id": e.ret.stratum,
                "station_id": e.ret.station,
            }
            for o in option_ids:
                row[o] = e.ret.votes.get(o)
            rows.append(row)
        pd.DataFrame(rows).to_csv(path, index=False)

    @classmethod
    def from_csv(cls, path, frame: Frame, option_ids) -> "ArrivalLog":
        df = pd.read_csv(path)
        events = []
        for row in df.to_dict("records"):
            h, r = int(row["stratum_id"]), int(row["station_id"])
            st = frame.station(h, r)
            votes = {
                o: None if pd.isna(row[o]) else int(row[o]) for o in option_ids
            }
            events.append(
                ArrivalEvent(
                    datetime.fromisoformat(row["timestamp"]),
                    StationReturn(h, r, votes, st.nominal_list),
                )
            )
        return cls(events)


@dataclass
class ArrivalBias:
    """Log-scale delay multipliers; zeros give a uniformly random order."""

    list_delay: float = 0.0   # per unit of nominal list / 750
    rural_delay: float = 0.0  # applied to non-urban stations
    tz_delay: float = 0.0     # per hour behind the capital
    scale_minutes: float = 60.0


def simulate_arrival(
    frame: Frame,
    sample: list[StationReturn],
    bias: ArrivalBias | None = None,
    seed: int = 0,
    start: datetime | None = None,
) -> ArrivalLog:
    """Stochastic arrival times, later for larger-list, rural and western stations."""
    bias = bias or ArrivalBias()
    start = start or datetime(2021, 6, 6, 18, 30)
    rng = stream(seed, 606)
    events = []
    for r in sorted(sample, key=lambda r: (r.stratum, r.station)):
        st = frame.station(r.stratum, r.station)
        mult = math.exp(
            bias.list_delay * st.nominal_list / 750.0
            + bias.rural_delay * (0.0 if st.urban else 1.0)
            + bias.tz_delay * abs(st.tz_offset)
        )
        minutes = mult * (1.0 + rng.exponential(1.0)) * bias.scale_minutes / 2.0
        events.append(ArrivalEvent(start + timedelta(minutes=minutes), r))
    return ArrivalLog(events)


@dataclass
class EstimateSeries:
    rows: list[dict] = field(default_factory=list)
    rejected: list[dict] = field(default_factory=list)

    def to_dataframe(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows)

    def to_csv(self, path) -> None:
        self.to_dataframe().to_csv(path, index=False)


def replay(
    log: ArrivalLog,
    frame: Frame,
    catalog: Catalog,
    planned: list[Station],
    hierarchy: poststrat.ClusteringHierarchy | None = None,
    methods: tuple[str, ...] = ("bayes", "mi"),
    cadence: timedelta = timedelta(minutes=5),
    seed: int = 0,
    draws: int = 10_000,
    B: int = 300,
    mi_config: mi_mod.ImputationConfig | None = None,
    base_level: float = 0.95,
) -> EstimateSeries:
    """Run the estimation pipelines at every cadence tick of the arrival log.

    Each tick re-runs the complete-sample machinery on the cumulative
    partial sample with the master seed, so a tick that happens to hold the
    full sample reproduces the standalone estimators exactly.
    """
    for m in methods:
        if m not in ("bayes", "mi"):
            raise ValueError(f"unknown method {m!r}")
    if "bayes" in methods and hierarchy is None:
        raise ValueError("the bayes method needs a clustering hierarchy")
    planned_keys = {(s.stratum, s.station) for s in planned}
    series = EstimateSeries()
    if not log.events:
        return series
    start = log.events[0].time
    end = log.events[-1].time
    n_ticks = max(1, math.ceil((end - start) / cadence) + 1)
    received: list[StationReturn] = []
    ev_idx = 0
    report = list(catalog.party_ids) + list(catalog.independent_ids)
    for tick in range(n_ticks):
        tick_time = start + tick * cadence
        while ev_idx < len(log.events) and log.events[ev_idx].time <= tick_time:
            e = log.events[ev_idx]
            ev_idx += 1
            key = (e.ret.stratum, e.ret.station)
            if key not in planned_keys:
                series.rejected.append(
                    {"timestamp": e.time.isoformat(), "stratum_id": key[0],
                     "station_id": key[1], "reason": "not in planned sample"}
                )
                continue
            received.append(e.ret)
        if not received:
            continue
        partial = PartialSample(frame=frame, planned=list(planned), received=list(received))
        p = partial.received_fraction
        strata_data = partial.strata_with_data()
        common = {
            "tick": tick,
            "timestamp": tick_time.isoformat(),
            "received": len(received),
            "received_fraction": p,
            "strata_with_data": strata_data,
        }
        if "bayes" in methods:
            stats = bayes.sufficient_stats(received, frame, catalog)
            stats = poststrat.impute_missing_strata(
                stats, hierarchy, catalog.constants.max_nominal_list
            )
            level = bayes.credibility_adjust(p)
            run = bayes.bayes_chamber(
                stats, frame, catalog, draws=draws, seed=seed, level=level
            )
            means = run.seat_totals.mean(axis=0)
            for j, f in enumerate(run.forces):
                lo, hi = run.intervals[f]
                series.rows.append(
                    {**common, "method": "bayes", "force": f, "lower": lo,
                     "upper": hi, "point": float(means[j]), "level": level}
                )
        if "mi" in methods:
            res = mi_mod.mi_chamber(
                partial, frame, catalog, config=mi_config, B=B, seed=seed,
                level=base_level,
            )
            for f in report:
                pe = res.pooled[f]
                series.rows.append(
                    {**common, "method": "mi", "force": f, "lower": pe.lower,
                     "upper": pe.upper, "point": pe.q_bar, "level": base_level}
                )
        if ev_idx >= len(log.events):
            break
    return series
