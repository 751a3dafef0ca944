"""Population frame, station returns and stratified sampling.

Flat-file interfaces:
  frame CSV:   stratum_id, station_id, nominal_list[, urban, state, tz_offset]
  returns CSV: stratum_id, station_id, <one column per voting option>
Vote cells left empty are missing data (distinct from 0).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd


class DesignError(ValueError):
    pass


@dataclass(frozen=True)
class Station:
    stratum: int
    station: int
    nominal_list: int
    urban: bool = True
    state: str = ""
    tz_offset: int = 0


@dataclass(frozen=True)
class StationReturn:
    stratum: int
    station: int
    votes: dict[str, int | None]
    nominal_list: int

    def cast_total(self) -> int:
        return sum(v for v in self.votes.values() if v is not None)

    def abstentions(self) -> int:
        # abstentions are derived, never stored in files
        return max(0, self.nominal_list - self.cast_total())

    def has_missing(self) -> bool:
        return any(v is None for v in self.votes.values())


class Frame:
    """The population of polling stations, immutable after load."""

    def __init__(self, stations: list[Station]):
        self.stations = tuple(
            sorted(stations, key=lambda s: (s.stratum, s.station))
        )
        self.by_stratum: dict[int, tuple[Station, ...]] = {}
        groups: dict[int, list[Station]] = {}
        for s in self.stations:
            groups.setdefault(s.stratum, []).append(s)
        self.by_stratum = {h: tuple(v) for h, v in groups.items()}
        self.strata = sorted(self.by_stratum)
        self.N_h = {h: len(v) for h, v in self.by_stratum.items()}
        self.l_h = {h: sum(s.nominal_list for s in v) for h, v in self.by_stratum.items()}
        self._index = {(s.stratum, s.station): s for s in self.stations}
        for s in self.stations:
            if s.nominal_list < 1:
                raise DesignError(f"station {s.stratum}/{s.station}: nominal list < 1")
        if len(self._index) != len(self.stations):
            raise DesignError("duplicate (stratum, station) ids in frame")

    @property
    def L(self) -> int:
        return len(self.strata)

    @property
    def N(self) -> int:
        return len(self.stations)

    def station(self, stratum: int, station: int) -> Station:
        try:
            return self._index[(stratum, station)]
        except KeyError:
            raise DesignError(f"unknown station {stratum}/{station}") from None

    @classmethod
    def from_csv(cls, path) -> "Frame":
        df = pd.read_csv(path)
        stations = []
        for row in df.itertuples(index=False):
            stations.append(
                Station(
                    stratum=int(row.stratum_id),
                    station=int(row.station_id),
                    nominal_list=int(row.nominal_list),
                    urban=bool(getattr(row, "urban", True)),
                    state=str(getattr(row, "state", "")),
                    tz_offset=int(getattr(row, "tz_offset", 0)),
                )
            )
        return cls(stations)

    def to_csv(self, path) -> None:
        pd.DataFrame(
            [
                {
                    "stratum_id": s.stratum,
                    "station_id": s.station,
                    "nominal_list": s.nominal_list,
                    "urban": int(s.urban),
                    "state": s.state,
                    "tz_offset": s.tz_offset,
                }
                for s in self.stations
            ]
        ).to_csv(path, index=False)


@dataclass
class PartialSample:
    """The planned stratified sample and whatever has been received so far."""

    frame: Frame
    planned: list[Station]
    received: list[StationReturn] = field(default_factory=list)

    def __post_init__(self):
        per = {}
        for r in self.received:
            per[r.stratum] = per.get(r.stratum, 0) + 1
        planned_per = self.planned_per_stratum()
        for h, c in per.items():
            if c > planned_per.get(h, 0):
                raise DesignError(f"stratum {h}: more returns than planned")

    def planned_per_stratum(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for s in self.planned:
            out[s.stratum] = out.get(s.stratum, 0) + 1
        return out

    def received_by_stratum(self) -> dict[int, list[StationReturn]]:
        out: dict[int, list[StationReturn]] = {h: [] for h in self.frame.strata}
        for r in sorted(self.received, key=lambda r: (r.stratum, r.station)):
            out.setdefault(r.stratum, []).append(r)
        return out

    @property
    def n(self) -> int:
        return len(self.planned)

    @property
    def received_fraction(self) -> float:
        return len(self.received) / self.n if self.n else 0.0

    def strata_with_data(self) -> int:
        return len({r.stratum for r in self.received})

    def is_complete(self) -> bool:
        return len(self.received) == self.n


def draw_sample(frame: Frame, n_by_stratum: dict[int, int], seed) -> list[Station]:
    """SRSWOR of stations within each stratum, independent across strata."""
    rng = np.random.default_rng(seed)
    out: list[Station] = []
    for h in frame.strata:
        n_h = n_by_stratum.get(h, 0)
        pool = frame.by_stratum[h]
        if n_h > len(pool):
            raise DesignError(f"stratum {h}: n_h={n_h} exceeds N_h={len(pool)}")
        if n_h == 0:
            continue
        idx = rng.choice(len(pool), size=n_h, replace=False)
        out.extend(pool[i] for i in sorted(idx))
    return out


def stratum_estimator(returns: list[StationReturn], N_h: int) -> dict[str, float]:
    """Expansion estimator (N_h/n_h) * sum of votes, per voting option."""
    if not returns:
        raise DesignError("empty stratum: totals must be imputed, not estimated")
    n_h = len(returns)
    totals: dict[str, float] = {}
    for r in returns:
        for opt, v in r.votes.items():
            if v is None:
                raise DesignError(
                    f"station {r.stratum}/{r.station}: missing cell for {opt}"
                )
            totals[opt] = totals.get(opt, 0) + v
    return {opt: N_h / n_h * t for opt, t in totals.items()}


# ---------------------------------------------------------------------------
# returns file IO
# ---------------------------------------------------------------------------


def read_returns_csv(path, frame: Frame, option_ids) -> list[StationReturn]:
    df = pd.read_csv(path)
    missing_cols = [o for o in option_ids if o not in df.columns]
    if missing_cols:
        raise DesignError(f"returns file lacks option columns {missing_cols}")
    out = []
    for _, row in df.iterrows():
        h, r = int(row["stratum_id"]), int(row["station_id"])
        st = frame.station(h, r)
        votes: dict[str, int | None] = {}
        for o in option_ids:
            v = row[o]
            votes[o] = None if pd.isna(v) else int(v)
        out.append(StationReturn(h, r, votes, st.nominal_list))
    return out


def write_returns_csv(path, returns: list[StationReturn], option_ids) -> None:
    rows = []
    for r in sorted(returns, key=lambda r: (r.stratum, r.station)):
        row = {"stratum_id": r.stratum, "station_id": r.station}
        for o in option_ids:
            v = r.votes.get(o)
            row[o] = np.nan if v is None else v
        rows.append(row)
    pd.DataFrame(rows, columns=["stratum_id", "station_id", *option_ids]).to_csv(
        path, index=False
    )
