"""Frequentist missing-data pipeline: chained predictive-mean-matching
imputation, mirror-match bootstrap on each completed dataset, Rubin pooling.

Stations not yet received are missing rows; the completed datasets extend
the received returns to the full planned sample, with the nominal list (an
always-observed frame covariate) among the predictors.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.stats import norm, t as student_t

from .bootstrap import BootstrapRun, bootstrap_chamber
from .catalog import Catalog
from .rngs import entropy, stream
from .sampleframe import Frame, PartialSample, StationReturn

RIDGE = 1e-5


class ImputationError(ValueError):
    pass


class DataSufficiencyWarning(UserWarning):
    """Unobserved vote columns were zero-filled; intervals may be too narrow."""


@dataclass
class ImputationConfig:
    m: int = 15
    iterations: int = 5
    donors: int = 5
    predictors: list[str] | None = None  # default: 4 largest parties + nominal list

    def __post_init__(self):
        if self.m < 2:
            raise ImputationError("need at least m=2 imputations")
        if self.iterations < 1:
            raise ImputationError("need at least one iteration")
        if self.donors < 1:
            raise ImputationError("donor pool must be positive")


def pmm_impute_column(y, X, rng, donors: int = 5):
    """Predictive mean matching for one column.

    Fits a ridge-stabilized linear regression on the observed rows, perturbs
    the coefficients with a draw from their normal posterior, predicts every
    row, and copies the observed value of a random donor among the `donors`
    closest observed predictions.  Imputed values are always observed values
    of the column.
    """
    y = np.asarray(y, dtype=float).copy()
    X = np.asarray(X, dtype=float)
    mis = np.isnan(y)
    if not mis.any():
        return y
    obs = ~mis
    n_obs = int(obs.sum())
    if n_obs == 0:
        raise ImputationError("no observed rows to donate from")
    k = donors
    if n_obs < k:
        warnings.warn(
            f"only {n_obs} observed rows; shrinking donor pool from {k}",
            stacklevel=2,
        )
        k = n_obs
    A = np.column_stack([np.ones(len(y)), X])
    Ao, yo = A[obs], y[obs]
    AtA = Ao.T @ Ao
    AtA_r = AtA + RIDGE * np.diag(np.maximum(np.diag(AtA), 1.0))
    beta_hat = np.linalg.solve(AtA_r, Ao.T @ yo)
    resid = yo - Ao @ beta_hat
    df = max(n_obs - A.shape[1], 1)
    sigma2 = float(resid @ resid) / rng.chisquare(df)
    V = np.linalg.inv(AtA_r)
    Lc = np.linalg.cholesky((V + V.T) / 2 * sigma2 + 1e-30 * np.eye(V.shape[0]))
    beta_star = beta_hat + Lc @ rng.standard_normal(A.shape[1])
    yhat_obs = Ao @ beta_hat
    yhat_mis = A[mis] @ beta_star
    dist = np.abs(yhat_obs[None, :] - yhat_mis[:, None])
    if k < n_obs:
        cand = np.argpartition(dist, k - 1, axis=1)[:, :k]
    else:
        cand = np.tile(np.arange(n_obs), (dist.shape[0], 1))
    pick = cand[np.arange(cand.shape[0]), rng.integers(0, cand.shape[1], cand.shape[0])]
    y[mis] = yo[pick]
    return y


def default_predictors(df: pd.DataFrame, vote_cols: list[str], n_parties: int = 4):
    """Nominal list plus the largest-total observed vote columns."""
    totals = df[vote_cols].sum(skipna=True)
    top = list(totals.sort_values(ascending=False).index[:n_parties])
    return top + ["nominal_list"]


def chained_impute(
    df: pd.DataFrame,
    vote_cols: list[str],
    config: ImputationConfig,
    seed,
) -> list[pd.DataFrame]:
    """m completed datasets via chained univariate pmm.

    Missing cells are mean-initialized; columns are then re-missed and
    re-imputed left to right for the configured number of sweeps.  Columns
    with no observed value at all are zero-filled with a loud warning.
    """
    miss = {c: df[c].isna().to_numpy() for c in vote_cols}
    zero_cols = [c for c in vote_cols if miss[c].all()]
    if zero_cols:
        warnings.warn(
            f"columns with no observed values zero-filled: {zero_cols}",
            DataSufficiencyWarning,
            stacklevel=2,
        )
    target_cols = [c for c in vote_cols if miss[c].any() and c not in zero_cols]
    predictors = config.predictors or default_predictors(df, vote_cols)
    out = []
    for t in range(config.m):
        rng = stream(seed, t)
        work = df.copy()
        for c in zero_cols:
            work[c] = 0.0
        for c in target_cols:
            work.loc[miss[c], c] = work[c].mean(skipna=True)
        for _ in range(config.iterations):
            for c in target_cols:
                y = work[c].to_numpy(dtype=float)
                y[miss[c]] = np.nan
                preds = [p for p in predictors if p != c and p in work.columns]
                X = work[preds].to_numpy(dtype=float)
                work[c] = pmm_impute_column(y, X, rng, config.donors)
        out.append(work)
    return out


@dataclass
class PooledEstimate:
    q_bar: float
    w_bar: float
    b_var: float
    t_var: float
    df: float
    level: float
    lower: int
    upper: int


def rubin_pool(q, u, level: float, clamp: tuple[int, int] = (0, 500)) -> PooledEstimate:
    """Rubin's rules: pooled point, within/between variance, t interval."""
    q = np.asarray(q, dtype=float)
    u = np.asarray(u, dtype=float)
    m = q.size
    if m < 2:
        raise ImputationError("pooling needs at least two estimates")
    if np.any(u < 0):
        raise ImputationError("negative within-imputation variance")
    q_bar = float(q.mean())
    w_bar = float(u.mean())
    b_var = float(q.var(ddof=1))
    t_var = w_bar + (1 + 1 / m) * b_var
    if b_var > 0:
        df = (m - 1) * (1 + w_bar / ((1 + 1 / m) * b_var)) ** 2
        quant = float(student_t.ppf((1 + level) / 2, df))
    else:
        df = math.inf
        quant = float(norm.ppf((1 + level) / 2))
    half = quant * math.sqrt(t_var) if t_var > 0 else 0.0
    lo = max(clamp[0], math.floor(q_bar - half))
    hi = min(clamp[1], math.ceil(q_bar + half))
    return PooledEstimate(
        q_bar=q_bar, w_bar=w_bar, b_var=b_var, t_var=t_var, df=df,
        level=level, lower=lo, upper=hi,
    )


@dataclass
class MIResult:
    config: ImputationConfig
    B: int
    seed: int
    level: float
    forces: list[str]
    pooled: dict[str, PooledEstimate]
    runs: list[BootstrapRun] = field(default_factory=list)

    def winner_probabilities(self) -> dict[int, dict[str, float]]:
        merged: dict[int, dict[str, float]] = {}
        for run in self.runs:
            for h, probs in run.winner_probabilities().items():
                acc = merged.setdefault(h, {})
                for cid, p in probs.items():
                    acc[cid] = acc.get(cid, 0.0) + p / len(self.runs)
        return merged


def sample_to_frame_table(partial: PartialSample, catalog: Catalog) -> pd.DataFrame:
    """Planned-sample table: one row per planned station, NaN where unreceived."""
    options = catalog.option_ids()
    rec = {(r.stratum, r.station): r for r in partial.received}
    rows = []
    for s in sorted(partial.planned, key=lambda s: (s.stratum, s.station)):
        row = {
            "stratum_id": s.stratum,
            "station_id": s.station,
            "nominal_list": float(s.nominal_list),
        }
        r = rec.get((s.stratum, s.station))
        for o in options:
            v = r.votes.get(o) if r is not None else None
            row[o] = np.nan if v is None else float(v)
        rows.append(row)
    return pd.DataFrame(rows)


def table_to_returns(df: pd.DataFrame, catalog: Catalog) -> list[StationReturn]:
    options = catalog.option_ids()
    out = []
    for row in df.to_dict("records"):
        votes = {o: int(round(row[o])) for o in options}
        out.append(
            StationReturn(
                int(row["stratum_id"]),
                int(row["station_id"]),
                votes,
                int(row["nominal_list"]),
            )
        )
    return out


def mi_chamber(
    partial: PartialSample,
    frame: Frame,
    catalog: Catalog,
    config: ImputationConfig | None = None,
    B: int = 300,
    seed: int = 0,
    level: float = 0.95,
) -> MIResult:
    """Complete the sample m times, bootstrap each, pool with Rubin's rules."""
    config = config or ImputationConfig()
    df = sample_to_frame_table(partial, catalog)
    vote_cols = list(catalog.option_ids())
    completed = chained_impute(df, vote_cols, config, entropy(seed, 0))
    forces = list(catalog.party_ids) + list(catalog.independent_ids)
    runs = []
    for t, table in enumerate(completed):
        sample = table_to_returns(table, catalog)
        runs.append(
            bootstrap_chamber(sample, frame, catalog, B=B, seed=entropy(seed, 1, t))
        )
    pooled = {}
    clamp = (0, catalog.constants.total_seats)
    for j, f in enumerate(forces):
        q = [run.seat_totals[:, j].mean() for run in runs]
        u = [run.seat_totals[:, j].var(ddof=1) for run in runs]
        pooled[f] = rubin_pool(q, u, level, clamp)
    return MIResult(
        config=config, B=B, seed=seed, level=level, forces=forces,
        pooled=pooled, runs=runs,
    )
