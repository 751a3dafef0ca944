"""Bayesian estimation: conjugate posterior per stratum and force,
posterior simulation, national aggregation and per-draw chamber conformation.

The model treats station votes, scaled by the nominal list, as normal with a
stratum-level proportion and precision.  The posterior factorizes into a
gamma for the precision and a normal truncated to (0,1) for the proportion,
parameterized by the sufficient statistics (T, U, v, n).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import ndtr, ndtri

from . import apportionment as app
from .bootstrap import percentile_interval
from .catalog import Catalog
from .sampleframe import Frame, StationReturn

TRUNC_MASS_FLOOR = 1e-12


class EstimationError(ValueError):
    pass


@dataclass
class StratumStatsSet:
    """Sufficient statistics per (stratum, force)."""

    strata: list[int]
    forces: list[str]
    T: np.ndarray        # (L, J) vote sums
    U: np.ndarray        # (L, J) list-weighted square sums
    v: np.ndarray        # (L,)  nominal-list sums
    n: np.ndarray        # (L,)  station counts
    imputed: np.ndarray  # (L,)  bool

    def copy(self) -> "StratumStatsSet":
        return replace(
            self,
            T=self.T.copy(),
            U=self.U.copy(),
            v=self.v.copy(),
            n=self.n.copy(),
            imputed=self.imputed.copy(),
        )

    def observed_mask(self) -> np.ndarray:
        return self.n > 0


@dataclass
class PosteriorParams:
    strata: list[int]
    forces: list[str]
    mean: np.ndarray     # (L, J) T/v
    v: np.ndarray        # (L,)  theta precision is tau * v
    shape: np.ndarray    # (L,)  n/2, the displayed gamma shape
    rate: np.ndarray     # (L, J)


def station_force_votes(ret: StationReturn, catalog: Catalog) -> dict[str, int]:
    """One station's votes resolved to forces, abstentions included."""
    out = catalog.split_totals_to_forces(ret.votes)
    out[catalog.abstention_id] = ret.abstentions()
    return out


def sufficient_stats(
    sample: list[StationReturn], frame: Frame, catalog: Catalog
) -> StratumStatsSet:
    """Exact (T, U, v, n) per stratum and force over the received returns.

    Strata without returns get n=0 and are flagged for imputation.
    """
    forces = list(catalog.force_ids())
    fpos = {f: i for i, f in enumerate(forces)}
    strata = list(frame.strata)
    hpos = {h: i for i, h in enumerate(strata)}
    L, J = len(strata), len(forces)
    T = np.zeros((L, J))
    U = np.zeros((L, J))
    v = np.zeros(L)
    n = np.zeros(L, dtype=np.int64)
    for r in sorted(sample, key=lambda r: (r.stratum, r.station)):
        if r.nominal_list < 1:
            raise EstimationError(
                f"station {r.stratum}/{r.station}: nominal list must be >= 1"
            )
        i = hpos[r.stratum]
        x = np.zeros(J)
        for f, votes in station_force_votes(r, catalog).items():
            x[fpos[f]] = votes
        T[i] += x
        U[i] += x * x / r.nominal_list
        v[i] += r.nominal_list
        n[i] += 1
    return StratumStatsSet(
        strata=strata, forces=forces, T=T, U=U, v=v, n=n,
        imputed=np.zeros(L, dtype=bool),
    )


def posterior_params(
    stats: StratumStatsSet, prior_shape: float = 0.5, prior_rate: float = 0.05
) -> PosteriorParams:
    """Posterior parameters exactly as the conjugate factorization displays them.

    The gamma shape is n/2 (the displayed form already absorbs the Ga(0.5, 0.05)
    prior: a single station leaves the prior untouched) and the rate is
    (1/2) { 2*prior_rate + U - T^2/v }.
    """
    if np.any(stats.n < 1):
        empty = [h for h, k in zip(stats.strata, stats.n) if k < 1]
        raise EstimationError(f"strata without data must be imputed first: {empty}")
    v = stats.v
    mean = stats.T / v[:, None]
    resid = stats.U - stats.T**2 / v[:, None]
    # float noise can push an exactly-zero residual slightly negative
    resid = np.where((resid < 0) & (resid > -1e-9), 0.0, resid)
    rate = 0.5 * (2.0 * prior_rate + resid)
    if np.any(rate <= 0):
        raise EstimationError("non-positive gamma rate")
    return PosteriorParams(
        strata=list(stats.strata),
        forces=list(stats.forces),
        mean=mean,
        v=v.astype(float),
        shape=stats.n / 2.0,
        rate=rate,
    )


def _robert_tail(lo: float, hi: float, rng) -> float:
    """Exponential accept-reject for a standard normal truncated to [lo, hi]."""
    alpha = 0.5 * (lo + math.sqrt(lo * lo + 4.0))
    while True:
        z = lo + rng.exponential(1.0 / alpha)
        if z > hi:
            continue
        if rng.random() <= math.exp(-0.5 * (z - alpha) ** 2):
            return z


def sample_truncated_normal(mu, sd, rng, size=None):
    """Normal(mu, sd) truncated to (0,1), sampled by inverse CDF.

    Falls back to a one-sided exponential rejection sampler when the
    untruncated mass on (0,1) is below 1e-12.
    """
    mu = np.asarray(mu, dtype=float)
    sd = np.asarray(sd, dtype=float)
    if size is None:
        size = np.broadcast_shapes(mu.shape, sd.shape)
    mu_b = np.broadcast_to(mu, size)
    sd_b = np.broadcast_to(sd, size)
    a = (0.0 - mu_b) / sd_b
    b = (1.0 - mu_b) / sd_b
    Fa = ndtr(a)
    Fb = ndtr(b)
    mass = Fb - Fa
    u = rng.random(size)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = ndtri(Fa + u * np.maximum(mass, TRUNC_MASS_FLOOR))
    theta = mu_b + sd_b * z
    bad = (mass < TRUNC_MASS_FLOOR) | ~np.isfinite(theta)
    if np.any(bad):
        idx = np.argwhere(bad)
        for ix in idx:
            t = tuple(ix)
            lo, hi = a[t], b[t]
            if hi <= 0:  # mass in the upper tail of -Z
                zz = -_robert_tail(-hi, -lo, rng)
            else:
                zz = _robert_tail(lo, hi, rng)
            theta[t] = mu_b[t] + sd_b[t] * zz
    tiny = np.finfo(float).tiny
    return np.clip(theta, tiny, 1.0 - np.finfo(float).epsneg)


def sample_posterior(params: PosteriorParams, draws: int, rng) -> np.ndarray:
    """theta draws of shape (D, L, J): gamma precision, then truncated normal."""
    L, J = params.mean.shape
    tau = rng.gamma(
        np.broadcast_to(params.shape[:, None], (L, J)),
        1.0 / params.rate,
        size=(draws, L, J),
    )
    sd = 1.0 / np.sqrt(tau * params.v[None, :, None])
    return sample_truncated_normal(params.mean[None, :, :], sd, rng, size=(draws, L, J))


@dataclass
class NationalDraws:
    forces: list[str]
    theta: np.ndarray    # (D, J) nominal-list-weighted national proportions
    lam: np.ndarray      # (D, J) valid-vote share (0 for excluded categories)
    eta: np.ndarray      # (D, J) post-threshold share (0 for excluded)


def national_aggregate(theta: np.ndarray, stats_forces, frame: Frame, catalog: Catalog):
    """Aggregate stratum draws into national theta, lambda and eta per draw."""
    w = np.array([frame.l_h[h] for h in frame.strata], dtype=float)
    w /= w.sum()
    theta_j = np.einsum("dlj,l->dj", theta, w)
    forces = list(stats_forces)
    fpos = {f: i for i, f in enumerate(forces)}
    valid_idx = [fpos[f] for f in (*catalog.party_ids, *catalog.independent_ids)]
    party_idx = [fpos[p] for p in catalog.party_ids]
    lam = np.zeros_like(theta_j)
    valid_total = theta_j[:, valid_idx].sum(axis=1)
    lam[:, valid_idx] = theta_j[:, valid_idx] / valid_total[:, None]
    eta = np.zeros_like(theta_j)
    qual = np.zeros(theta_j.shape, dtype=bool)
    qual[:, party_idx] = lam[:, party_idx] > catalog.constants.threshold
    q_total = np.where(qual, theta_j, 0.0).sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        eta = np.where(qual, theta_j / q_total[:, None], 0.0)
    return NationalDraws(forces=forces, theta=theta_j, lam=lam, eta=eta)


def _district_candidacies(catalog: Catalog, fpos: dict[str, int], h: int):
    """Candidacies for one district as (id, member force indices, holder force)."""
    cands = []
    for c in catalog.coalitions:
        if h in c.seat_agreement:
            cands.append((c.id, [fpos[m] for m in c.members], c.seat_agreement[h]))
    covered = {m for c in catalog.coalitions if h in c.seat_agreement for m in c.members}
    for p in catalog.party_ids:
        if p not in covered:
            cands.append((p, [fpos[p]], p))
    for p in catalog.independent_ids:
        cands.append((p, [fpos[p]], p))
    cands.sort(key=lambda t: t[0])
    return cands


@dataclass
class BayesRun:
    draws: int
    seed: int
    level: float
    forces: list[str]             # parties then independents
    seat_totals: np.ndarray       # (D, n_forces)
    majority: np.ndarray          # (D, n_forces)
    districts: list[int]
    winner_ids: list[str]
    winners: np.ndarray           # (D, L)
    intervals: dict[str, tuple[int, int]]

    def winner_probabilities(self) -> dict[int, dict[str, float]]:
        out = {}
        for i, h in enumerate(self.districts):
            counts = np.bincount(self.winners[:, i], minlength=len(self.winner_ids))
            out[h] = {
                self.winner_ids[c]: counts[c] / self.draws
                for c in np.nonzero(counts)[0]
            }
        return out


def bayes_chamber(
    stats: StratumStatsSet,
    frame: Frame,
    catalog: Catalog,
    draws: int = 10_000,
    seed: int = 0,
    level: float = 0.95,
) -> BayesRun:
    """Posterior conformation draws and equal-tailed seat intervals.

    District winners compare candidacy-level proportions per draw; coalition
    candidacies score the sum of their members' theta (split combination
    votes add back to the coalition total).
    """
    params = posterior_params(stats)
    rng = np.random.default_rng([seed])
    theta = sample_posterior(params, draws, rng)
    fpos = {f: i for i, f in enumerate(stats.forces)}

    report = list(catalog.party_ids) + list(catalog.independent_ids)
    rpos = {f: i for i, f in enumerate(report)}
    majority = np.zeros((draws, len(report)), dtype=np.int64)
    winner_vocab: dict[str, int] = {}
    winners = np.zeros((draws, len(stats.strata)), dtype=np.int32)
    for i, h in enumerate(stats.strata):
        cands = _district_candidacies(catalog, fpos, h)
        scores = np.stack(
            [theta[:, i, idx].sum(axis=1) for _, idx, _ in cands], axis=1
        )
        win = np.argmax(scores, axis=1)
        holder_idx = np.array([rpos[holder] for _, _, holder in cands])
        np.add.at(majority, (np.arange(draws), holder_idx[win]), 1)
        cand_codes = np.array(
            [winner_vocab.setdefault(cid, len(winner_vocab)) for cid, _, _ in cands]
        )
        winners[:, i] = cand_codes[win]

    nat = national_aggregate(theta, stats.forces, frame, catalog)
    seat_totals = majority.copy()
    party_cols = {p: fpos[p] for p in catalog.party_ids}
    for d in range(draws):
        eta = {
            p: nat.eta[d, party_cols[p]]
            for p in catalog.party_ids
            if nat.eta[d, party_cols[p]] > 0
        }
        if not eta:
            continue
        shares = app.NationalShares(nu={}, lam={}, eta=eta)
        maj = {p: int(majority[d, rpos[p]]) for p in catalog.party_ids}
        chamber = app.allocate_pr(maj, shares, catalog)
        for p, s in chamber.pr.items():
            seat_totals[d, rpos[p]] += s

    vocab = [None] * len(winner_vocab)
    for cid, i in winner_vocab.items():
        vocab[i] = cid
    intervals = {
        f: percentile_interval(seat_totals[:, j], level)
        for f, j in rpos.items()
    }
    return BayesRun(
        draws=draws,
        seed=seed,
        level=level,
        forces=report,
        seat_totals=seat_totals,
        majority=majority,
        districts=list(stats.strata),
        winner_ids=vocab,
        winners=winners,
        intervals=intervals,
    )


def bayes_point_chamber(
    stats: StratumStatsSet, frame: Frame, catalog: Catalog
) -> dict[str, int]:
    """Plug-in conformation at the posterior means T/v (no simulation)."""
    params = posterior_params(stats)
    theta = params.mean[None, :, :]
    fpos = {f: i for i, f in enumerate(stats.forces)}
    report = list(catalog.party_ids) + list(catalog.independent_ids)
    majority = {f: 0 for f in report}
    for i, h in enumerate(stats.strata):
        cands = _district_candidacies(catalog, fpos, h)
        scores = [theta[0, i, idx].sum() for _, idx, _ in cands]
        majority[cands[int(np.argmax(scores))][2]] += 1
    nat = national_aggregate(theta, stats.forces, frame, catalog)
    eta = {
        p: nat.eta[0, fpos[p]]
        for p in catalog.party_ids
        if nat.eta[0, fpos[p]] > 0
    }
    if not eta:
        raise EstimationError("no party qualifies at the posterior mean")
    shares = app.NationalShares(nu={}, lam={}, eta=eta)
    maj_parties = {p: majority[p] for p in catalog.party_ids}
    chamber = app.allocate_pr(maj_parties, shares, catalog)
    out = dict(majority)
    for p, s in chamber.pr.items():
        out[p] = out.get(p, 0) + s
    return out


def credibility_adjust(received_fraction: float) -> float:
    """Credibility level for a given received-sample fraction (piecewise)."""
    if not 0.0 <= received_fraction <= 1.0:
        raise ValueError("received fraction must be in [0, 1]")
    pct = received_fraction * 100.0
    if pct < 60:
        return 0.99
    if pct < 70:
        return 0.98
    if pct < 80:
        return 0.97
    if pct < 90:
        return 0.96
    return 0.95
