"""Sampling-design toolkit: equal allocation with augmentation rules and
simulation of the average / maximum seat-estimation error bounds.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import bayes
from .bootstrap import point_chamber
from .catalog import Catalog
from .rngs import entropy
from .sampleframe import Frame, StationReturn, draw_sample
from .synth import population_index


@dataclass(frozen=True)
class AugmentationRule:
    extra: int
    state: str | None = None
    tz_offset: int | None = None

    def __post_init__(self):
        if self.extra < 0:
            raise ValueError("extra stations must be non-negative")
        if (self.state is None) == (self.tz_offset is None):
            raise ValueError("rule needs exactly one matcher: state or tz_offset")

    def matches(self, station) -> bool:
        if self.state is not None:
            return station.state == self.state
        return station.tz_offset == self.tz_offset


def default_augmentation_rules() -> list[AugmentationRule]:
    """Two-hour states +10, one-hour states +5, Guerrero +10."""
    return [
        AugmentationRule(extra=10, tz_offset=-2),
        AugmentationRule(extra=5, tz_offset=-1),
        AugmentationRule(extra=10, state="Guerrero"),
    ]


def allocate_sample(
    frame: Frame, base: int, rules: list[AugmentationRule] | None = None
) -> dict[int, int]:
    """Equal allocation plus rule extras, capped at the stratum size."""
    rules = rules or []
    out = {}
    for h in frame.strata:
        probe = frame.by_stratum[h][0]
        n_h = base + sum(r.extra for r in rules if r.matches(probe))
        out[h] = min(n_h, frame.N_h[h])
    return out


@dataclass
class ErrorBounds:
    level: float
    n_totals: list[int]
    eps1: list[float]   # bound on the average absolute seat error
    eps2: list[float]   # bound on the maximum absolute seat error


def _true_seats(population, frame: Frame, catalog: Catalog) -> dict[str, int]:
    from . import apportionment as app

    totals: dict[int, dict[str, int]] = {h: {} for h in frame.strata}
    for r in population:
        d = totals[r.stratum]
        for o, v in r.votes.items():
            d[o] = d.get(o, 0) + v
    return app.compose_chamber(totals, catalog).chamber.totals()


def simulate_error_bounds(
    population: list[StationReturn],
    frame: Frame,
    catalog: Catalog,
    n_totals: list[int],
    reps: int = 200,
    estimator: str = "freq",
    seed: int = 0,
    level: float = 0.95,
) -> ErrorBounds:
    """95th-percentile average and maximum seat errors over repeated samples.

    For each candidate total sample size, draw a stratified sample, compose
    the chosen estimator's point conformation, and compare per-force seats
    with the population truth.
    """
    if estimator not in ("freq", "bayes"):
        raise ValueError("estimator must be 'freq' or 'bayes'")
    idx = population_index(population)
    truth = _true_seats(population, frame, catalog)
    report = list(catalog.party_ids) + list(catalog.independent_ids)
    true_vec = np.array([truth.get(f, 0) for f in report], dtype=float)
    eps1, eps2, kept = [], [], []
    for i, n in enumerate(n_totals):
        base = n // frame.L
        if base < 1 or any(base > frame.N_h[h] for h in frame.strata):
            warnings.warn(f"n={n}: n_h={base} infeasible, skipped", stacklevel=2)
            continue
        n_by = {h: base for h in frame.strata}
        avg_err = np.empty(reps)
        max_err = np.empty(reps)
        for rep in range(reps):
            stations = draw_sample(frame, n_by, entropy(seed, i, rep))
            sample = [idx[(s.stratum, s.station)] for s in stations]
            if estimator == "freq":
                seats = point_chamber(sample, frame, catalog).chamber.totals()
            else:
                stats = bayes.sufficient_stats(sample, frame, catalog)
                seats = bayes.bayes_point_chamber(stats, frame, catalog)
            est = np.array([seats.get(f, 0) for f in report], dtype=float)
            err = np.abs(est - true_vec)
            avg_err[rep] = err.mean()
            max_err[rep] = err.max()
        q = level
        eps1.append(float(np.quantile(avg_err, q, method="inverted_cdf")))
        eps2.append(float(np.quantile(max_err, q, method="inverted_cdf")))
        kept.append(n)
    return ErrorBounds(level=level, n_totals=kept, eps1=eps1, eps2=eps2)
