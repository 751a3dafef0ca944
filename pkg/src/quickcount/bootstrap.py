"""Mirror-match stratified bootstrap for chamber conformations.

Each replicate rebuilds every stratum by concatenating k_h independent
SRSWOR draws of size m_h from the stratum sample, expands the totals,
splits coalition combination votes, and composes a chamber.  Replicate
RNG streams are derived from (seed, replicate index), so results do not
depend on scheduling or worker count.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import apportionment as app
from .catalog import Catalog
from .rngs import stream
from .sampleframe import DesignError, Frame, StationReturn


@dataclass(frozen=True)
class MirrorMatchParams:
    n_h: int
    N_h: int
    f: float
    k: float
    m: float
    k_int: bool
    m_int: bool

    @property
    def integer_design(self) -> bool:
        return self.k_int and self.m_int


def mirror_match_params(n_h: int, N_h: int) -> MirrorMatchParams:
    if not (1 <= n_h <= N_h):
        raise DesignError(f"need 1 <= n_h <= N_h, got n_h={n_h}, N_h={N_h}")
    f = n_h / N_h
    k = N_h / n_h
    m = f * n_h
    return MirrorMatchParams(
        n_h=n_h,
        N_h=N_h,
        f=f,
        k=k,
        m=m,
        k_int=N_h % n_h == 0,
        m_int=(n_h * n_h) % N_h == 0,
    )


def _randomized_design(params: MirrorMatchParams, rng) -> tuple[int, int]:
    """Integer (m', k') for a non-integer design.

    m' is the nearest integer to f*n_h (at least 1).  The repetition count is
    randomized between floor and ceiling of
        k_target = (n - m') / (m' (1 - f)),
    the value that makes the resampling variance equal the SRSWOR design
    variance N^2 (1-f) S^2 / n.  Since the conditional variance is
    proportional to 1/k', the mixing probability q solves
        (1-q)/floor(k') + q/ceil(k') = 1/k_target,
    so the variance matches in expectation while the mean stays unbiased for
    any (m', k').
    """
    n, f = params.n_h, params.f
    m = min(n, max(1, round(params.m)))
    if f >= 1.0 or m >= n:
        return n, 1
    k_target = (n - m) / (m * (1.0 - f))
    kf = math.floor(k_target)
    if kf < 1:
        return m, 1
    kc = kf + 1
    if kf == k_target:
        return m, kf
    q = (1.0 / kf - 1.0 / k_target) / (1.0 / kf - 1.0 / kc)
    return m, kc if rng.random() < q else kf


def resample_design(params: MirrorMatchParams, rng) -> tuple[int, int]:
    """The (m, k) actually used for one replicate of one stratum."""
    if params.integer_design:
        return int(round(params.m)), int(round(params.k))
    return _randomized_design(params, rng)


def mirror_match_resample(n_h: int, params: MirrorMatchParams, rng):
    """Indices of a mirror-match resample: k draws of SRSWOR size m.

    Returns (indices, realized_size); the estimator scales by N_h/realized_size.
    """
    m, k = resample_design(params, rng)
    if m > n_h:
        warnings.warn("mirror-match m exceeds n_h; clamping", stacklevel=2)
        m = n_h
    # one SRSWOR of size m per row, via partial sort of uniform keys
    keys = rng.random((k, n_h))
    if m < n_h:
        idx = np.argpartition(keys, m, axis=1)[:, :m]
    else:
        idx = np.tile(np.arange(n_h), (k, 1))
    return idx.ravel(), k * m


@dataclass
class BootstrapRun:
    B: int
    seed: int
    forces: list[str]            # parties then independents, catalog order
    seat_totals: np.ndarray      # (B, n_forces) total seats per replicate
    majority: np.ndarray         # (B, n_forces)
    districts: list[int]
    winner_ids: list[str]        # candidacy vocabulary
    winners: np.ndarray          # (B, L) candidacy index per district

    def winner_probabilities(self) -> dict[int, dict[str, float]]:
        out = {}
        for i, h in enumerate(self.districts):
            counts = np.bincount(self.winners[:, i], minlength=len(self.winner_ids))
            out[h] = {
                self.winner_ids[c]: counts[c] / self.B
                for c in np.nonzero(counts)[0]
            }
        return out


def _group_sample(sample: list[StationReturn], frame: Frame, catalog: Catalog):
    """Sorted per-stratum integer vote matrices; every stratum must have data."""
    options = catalog.option_ids()
    col = {o: i for i, o in enumerate(options)}
    groups: dict[int, list[StationReturn]] = {h: [] for h in frame.strata}
    for r in sample:
        if r.stratum not in groups:
            raise DesignError(f"return from unknown stratum {r.stratum}")
        groups[r.stratum].append(r)
    mats = {}
    for h, rows in groups.items():
        if not rows:
            raise DesignError(
                f"stratum {h} has no returns; impute before bootstrapping"
            )
        rows.sort(key=lambda r: r.station)
        X = np.zeros((len(rows), len(options)), dtype=np.int64)
        for i, r in enumerate(rows):
            for o, v in r.votes.items():
                if v is None:
                    raise DesignError(
                        f"station {r.stratum}/{r.station} has missing cells; "
                        "complete the sample first"
                    )
                X[i, col[o]] = v
        mats[h] = X
    return mats


def expanded_totals(sample: list[StationReturn], frame: Frame, catalog: Catalog):
    """Stratum expansion estimates as a float district-votes matrix."""
    mats = _group_sample(sample, frame, catalog)
    strata = frame.strata
    E = np.zeros((len(strata), len(catalog.option_ids())), dtype=float)
    for i, h in enumerate(strata):
        X = mats[h]
        E[i] = frame.N_h[h] / X.shape[0] * X.sum(axis=0)
    return app.DistrictVotes(list(strata), catalog.option_ids(), E)


def point_chamber(sample, frame, catalog) -> app.CompositionResult:
    """Chamber composed from the plain expansion estimates (no resampling)."""
    return app.compose_chamber(expanded_totals(sample, frame, catalog), catalog)


def _replicate(mats, params_by_h, strata, catalog, plan, rng):
    """One bootstrap conformation from per-stratum resamples."""
    n_opts = len(catalog.option_ids())
    S = np.zeros((len(strata), n_opts), dtype=np.int64)
    scale = np.empty(len(strata))
    for i, h in enumerate(strata):
        X = mats[h]
        idx, size = mirror_match_resample(X.shape[0], params_by_h[h], rng)
        S[i] = X[idx].sum(axis=0)
        scale[i] = params_by_h[h].N_h / size
    votes = app.DistrictVotes(list(strata), catalog.option_ids(), S)
    winners = app.district_winners(votes, catalog, plan)
    # split the raw integer sums (remainder rule applies), then expand
    F, _ = app.split_matrix(votes, catalog, plan)
    Fx = F * scale[:, None]
    nu = {f: Fx[:, j].sum() for f, j in plan.fcol.items()}
    shares = app.shares_from_nu(nu, catalog, exact=False)
    majority: dict[str, int] = {p: 0 for p in catalog.party_ids}
    for w in winners:
        majority[w.seat_holder] = majority.get(w.seat_holder, 0) + 1
    chamber = app.allocate_pr(majority, shares, catalog)
    return chamber, winners


def bootstrap_chamber(
    sample: list[StationReturn],
    frame: Frame,
    catalog: Catalog,
    B: int = 300,
    seed: int = 0,
) -> BootstrapRun:
    """B mirror-match replicates of the chamber conformation."""
    mats = _group_sample(sample, frame, catalog)
    strata = list(frame.strata)
    params_by_h = {
        h: mirror_match_params(mats[h].shape[0], frame.N_h[h]) for h in strata
    }
    plan = app._Plan(catalog)
    forces = list(catalog.party_ids) + list(catalog.independent_ids)
    fpos = {f: i for i, f in enumerate(forces)}
    winner_vocab: dict[str, int] = {}
    seat_totals = np.zeros((B, len(forces)), dtype=np.int64)
    majority = np.zeros((B, len(forces)), dtype=np.int64)
    winners_arr = np.zeros((B, len(strata)), dtype=np.int32)
    for b in range(B):
        rng = stream(seed, b)
        chamber, winners = _replicate(mats, params_by_h, strata, catalog, plan, rng)
        for f, s in chamber.totals().items():
            if f in fpos:
                seat_totals[b, fpos[f]] = s
        for f, s in chamber.majority.items():
            if f in fpos:
                majority[b, fpos[f]] = s
        for i, w in enumerate(winners):
            c = winner_vocab.setdefault(w.candidacy, len(winner_vocab))
            winners_arr[b, i] = c
    vocab = [None] * len(winner_vocab)
    for cid, i in winner_vocab.items():
        vocab[i] = cid
    return BootstrapRun(
        B=B,
        seed=seed,
        forces=forces,
        seat_totals=seat_totals,
        majority=majority,
        districts=strata,
        winner_ids=vocab,
        winners=winners_arr,
    )


def percentile_interval(values, level: float) -> tuple[int, int]:
    """Equal-tailed nearest-rank percentile interval, rounded outward."""
    if not 0 <= level < 1:
        raise ValueError("level must be in [0, 1)")
    vals = np.sort(np.asarray(values))
    if vals.size < 1:
        raise ValueError("need at least one replicate")
    lo = _nearest_rank(vals, (1 - level) / 2)
    hi = _nearest_rank(vals, (1 + level) / 2)
    return int(math.floor(lo)), int(math.ceil(hi))


def _nearest_rank(sorted_vals: np.ndarray, q: float):
    n = sorted_vals.size
    rank = max(1, math.ceil(q * n))
    return sorted_vals[min(rank, n) - 1]
