"""Synthetic electoral universes: catalogs, frames and full populations.

Real election microdata is out of scope; these generators stand in for it in
the design simulator, the replay harness and the test suite.
"""

from __future__ import annotations

import numpy as np

from .catalog import (
    Catalog,
    Coalition,
    ElectoralConstants,
    ForceKind,
    PoliticalForce,
    VotingOption,
)
from .rngs import stream
from .sampleframe import Frame, Station, StationReturn

# state name, number of federal districts, time-zone offset vs the capital
MEXICO_LAYOUT = (
    ("Baja California", 8, -2),
    ("Sonora", 7, -2),
    ("Chihuahua", 9, -1),
    ("Baja California Sur", 2, -1),
    ("Nayarit", 3, -1),
    ("Sinaloa", 7, -1),
    ("Guerrero", 9, 0),
    ("Centro", 255, 0),
)


def synth_catalog(
    n_parties: int = 5,
    n_independents: int = 0,
    coalition_sizes: tuple[int, ...] = (),
    districts: list[int] | None = None,
    seed: int = 0,
    constants: ElectoralConstants | None = None,
) -> Catalog:
    """A catalog with generated party ids, optional coalitions and all valid
    sub-combination ballot options; coalitions register in every district."""
    rng = stream(seed, 101)
    parties = [f"P{i + 1:02d}" for i in range(n_parties)]
    independents = [f"I{i + 1:02d}" for i in range(n_independents)]
    forces = [PoliticalForce(p, ForceKind.PARTY) for p in parties]
    forces += [PoliticalForce(p, ForceKind.INDEPENDENT) for p in independents]
    forces.append(PoliticalForce("NULO", ForceKind.NULL_UNREGISTERED))
    forces.append(PoliticalForce("ABST", ForceKind.ABSTENTION))
    coalitions = []
    options = [VotingOption(p, (p,)) for p in parties + independents]
    options.append(VotingOption("NULO", ("NULO",)))
    pool = list(parties)
    districts = districts or []
    for ci, size in enumerate(coalition_sizes):
        if size < 2 or size > len(pool):
            raise ValueError(f"coalition size {size} not feasible")
        members = tuple(sorted(str(p) for p in rng.choice(pool, size=size, replace=False)))
        for m in members:
            pool.remove(m)
        agreement = {
            int(h): members[int(rng.integers(0, size))] for h in districts
        }
        coalitions.append(Coalition(f"C{ci + 1:02d}", members, agreement))
        # every combination of two or more members is a valid way of voting
        from itertools import combinations

        for r in range(2, size + 1):
            for combo in combinations(members, r):
                options.append(VotingOption("_".join(combo), tuple(combo)))
    return Catalog(forces, coalitions, options, constants or ElectoralConstants())


def synth_frame(
    L: int = 30,
    N_h: int = 40,
    seed: int = 0,
    min_list: int = 100,
    max_list: int = 750,
) -> Frame:
    rng = stream(seed, 202)
    stations = []
    for h in range(1, L + 1):
        for r in range(1, N_h + 1):
            stations.append(
                Station(
                    stratum=h,
                    station=r,
                    nominal_list=int(rng.integers(min_list, max_list + 1)),
                    urban=bool(rng.random() < 0.7),
                    state="",
                    tz_offset=0,
                )
            )
    return Frame(stations)


def default_mexico_frame(stations_per_district: int = 40, seed: int = 0) -> Frame:
    """A 300-district frame with the time-zone and state layout of the design."""
    rng = stream(seed, 303)
    stations = []
    h = 0
    for state, n_districts, tz in MEXICO_LAYOUT:
        for _ in range(n_districts):
            h += 1
            for r in range(1, stations_per_district + 1):
                stations.append(
                    Station(
                        stratum=h,
                        station=r,
                        nominal_list=int(rng.integers(100, 751)),
                        urban=bool(rng.random() < 0.7),
                        state=state,
                        tz_offset=tz,
                    )
                )
    return Frame(stations)


def synth_population(
    frame: Frame,
    catalog: Catalog,
    national_option_shares: dict[str, float] | None = None,
    abstention_share: float = 0.35,
    concentration: float = 60.0,
    seed: int = 0,
) -> list[StationReturn]:
    """Full population of station returns.

    Option shares vary by stratum around the national shares via a Dirichlet
    draw; station votes are multinomial over options plus abstention against
    the nominal list.
    """
    rng = stream(seed, 404)
    options = list(catalog.option_ids())
    if national_option_shares is None:
        w = rng.dirichlet(np.full(len(options), 5.0))
        national_option_shares = dict(zip(options, w))
    base = np.array([national_option_shares.get(o, 0.0) for o in options])
    base = base / base.sum() * (1.0 - abstention_share)
    alpha = np.append(base, abstention_share) * concentration
    alpha = np.maximum(alpha, 1e-3)
    out = []
    for h in frame.strata:
        shares = rng.dirichlet(alpha)
        for s in frame.by_stratum[h]:
            counts = rng.multinomial(s.nominal_list, shares)
            votes = {o: int(c) for o, c in zip(options, counts[:-1])}
            out.append(StationReturn(h, s.station, votes, s.nominal_list))
    return out


def population_index(population: list[StationReturn]):
    return {(r.stratum, r.station): r for r in population}


def random_election(
    L: int = 300,
    seed: int = 0,
    min_parties: int = 3,
    max_parties: int = 10,
    with_coalition_prob: float = 0.5,
    constants: ElectoralConstants | None = None,
):
    """A random catalog plus integer district-level option totals.

    Used for seat-rule stress tests: 3 to 10 parties, a coalition about half
    the time, Dirichlet national shares and per-district variation.
    """
    rng = stream(seed, 505)
    n_parties = int(rng.integers(min_parties, max_parties + 1))
    districts = list(range(1, L + 1))
    sizes: tuple[int, ...] = ()
    if n_parties >= 4 and rng.random() < with_coalition_prob:
        sizes = (int(rng.integers(2, min(4, n_parties - 1))),)
    n_indep = int(rng.integers(0, 2))
    catalog = synth_catalog(
        n_parties=n_parties,
        n_independents=n_indep,
        coalition_sizes=sizes,
        districts=districts,
        seed=seed,
        constants=constants,
    )
    options = list(catalog.option_ids())
    w = rng.dirichlet(np.full(len(options), 2.0))
    totals = {}
    for h in districts:
        shares = rng.dirichlet(w * 50.0 + 0.05)
        counts = rng.multinomial(int(rng.integers(2_000, 20_000)), shares)
        totals[h] = {o: int(c) for o, c in zip(options, counts)}
    return catalog, totals
