"""Dynamic post-stratification: nested clustering of strata from historic
voting profiles, and imputation of sufficient statistics for empty strata.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.cluster.hierarchy import linkage

from .bayes import StratumStatsSet
from .catalog import Catalog
from .sampleframe import Frame, StationReturn

DEFAULT_K_LIST = (1, 10, 20, 50, 100, 200, 300)
DEFAULT_PSEUDO_LIST = 750


class PoststratError(ValueError):
    pass


@dataclass
class StratumProfile:
    stratum: int
    features: np.ndarray


@dataclass
class ClusteringHierarchy:
    """Nested partitions of the strata at preset group counts.

    partitions[k] holds one integer group label per stratum (aligned with
    `strata`); cutting one agglomerative tree at several levels guarantees
    the partitions are nested.
    """

    strata: list[int]
    k_list: list[int]
    partitions: dict[int, np.ndarray]

    def group_of(self, k: int, stratum: int) -> list[int]:
        i = self.strata.index(stratum)
        labels = self.partitions[k]
        return [h for h, g in zip(self.strata, labels) if g == labels[i]]

    def to_csv(self, path) -> None:
        df = pd.DataFrame({"stratum_id": self.strata})
        for k in self.k_list:
            df[f"k{k}"] = self.partitions[k]
        df.to_csv(path, index=False)

    @classmethod
    def from_csv(cls, path) -> "ClusteringHierarchy":
        df = pd.read_csv(path)
        strata = [int(h) for h in df["stratum_id"]]
        k_list = sorted(int(c[1:]) for c in df.columns if c.startswith("k"))
        partitions = {k: df[f"k{k}"].to_numpy() for k in k_list}
        return cls(strata=strata, k_list=k_list, partitions=partitions)


def build_profiles(
    historic: list[StationReturn], frame: Frame, catalog: Catalog
) -> list[StratumProfile]:
    """Per-stratum feature vectors: per-force share of cast votes plus turnout."""
    from .bayes import station_force_votes

    forces = [f for f in catalog.force_ids() if f != catalog.abstention_id]
    acc: dict[int, np.ndarray] = {h: np.zeros(len(forces)) for h in frame.strata}
    lists: dict[int, float] = {h: 0.0 for h in frame.strata}
    for r in historic:
        x = station_force_votes(r, catalog)
        acc[r.stratum] += np.array([x.get(f, 0) for f in forces], dtype=float)
        lists[r.stratum] += r.nominal_list
    profiles = []
    for h in frame.strata:
        cast = acc[h].sum()
        if cast <= 0 or lists[h] <= 0:
            raise PoststratError(f"stratum {h} has no historic votes")
        profiles.append(
            StratumProfile(h, np.append(acc[h] / cast, cast / lists[h]))
        )
    return profiles


def _cut_linkage(Z: np.ndarray, L: int, k: int) -> np.ndarray:
    """Labels for exactly k groups: apply the first L-k merges of the tree."""
    parent = list(range(2 * L - 1))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for t in range(L - k):
        a, b = int(Z[t, 0]), int(Z[t, 1])
        parent[find(a)] = L + t
        parent[find(b)] = L + t
    roots: dict[int, int] = {}
    labels = np.empty(L, dtype=np.int64)
    for i in range(L):
        r = find(i)
        labels[i] = roots.setdefault(r, len(roots) + 1)
    return labels


def build_hierarchy(
    profiles: list[StratumProfile], k_list=DEFAULT_K_LIST
) -> ClusteringHierarchy:
    """Complete-linkage agglomerative clustering on standardized features."""
    profiles = sorted(profiles, key=lambda p: p.stratum)
    strata = [p.stratum for p in profiles]
    L = len(profiles)
    k_list = sorted(set(int(k) for k in k_list))
    if not all(1 <= k <= L for k in k_list):
        raise PoststratError(f"every k must lie in [1, {L}]")
    X = np.stack([p.features for p in profiles])
    if not np.all(np.isfinite(X)):
        raise PoststratError("non-finite profile features")
    sd = X.std(axis=0, ddof=0)
    keep = sd > 0
    if not keep.all():
        warnings.warn(
            f"dropping {int((~keep).sum())} constant feature(s) before standardization",
            stacklevel=2,
        )
    if not keep.any():
        raise PoststratError("all features constant; cannot cluster")
    Xs = (X[:, keep] - X[:, keep].mean(axis=0)) / sd[keep]
    if L == 1:
        partitions = {1: np.array([1])}
        return ClusteringHierarchy(strata=strata, k_list=[1], partitions=partitions)
    Z = linkage(Xs, method="complete", metric="euclidean")
    partitions = {k: _cut_linkage(Z, L, k) for k in k_list}
    return ClusteringHierarchy(strata=strata, k_list=k_list, partitions=partitions)


def find_kstar(
    stratum: int, hierarchy: ClusteringHierarchy, data_strata: set[int]
) -> tuple[int, list[int]]:
    """Largest k whose group containing the stratum has sample information."""
    if not data_strata:
        raise PoststratError("no stratum has data; estimation impossible")
    for k in sorted(hierarchy.k_list, reverse=True):
        group = hierarchy.group_of(k, stratum)
        if any(h in data_strata for h in group):
            return k, group
    raise PoststratError(f"no partition level pools stratum {stratum} with data")


def impute_missing_strata(
    stats: StratumStatsSet,
    hierarchy: ClusteringHierarchy,
    pseudo_list: int = DEFAULT_PSEUDO_LIST,
) -> StratumStatsSet:
    """Fill empty strata with group-average sufficient statistics.

    An empty stratum becomes a single pseudo-station with nominal list l0:
    T and U are l0 times the data-bearing group's ratio of summed statistics
    to summed nominal lists.  Observed strata are untouched, so the operation
    is idempotent and observed data always replaces imputed values.
    """
    out = stats.copy()
    data_strata = {h for h, k in zip(stats.strata, stats.n) if k > 0}
    hpos = {h: i for i, h in enumerate(stats.strata)}
    for i, h in enumerate(stats.strata):
        if stats.n[i] > 0:
            continue
        k = None
        donors: list[int] = []
        for k, group in _kstar_candidates(h, hierarchy, data_strata):
            donors = [g for g in group if g in data_strata]
            denom = sum(stats.v[hpos[g]] for g in donors)
            if denom > 0:
                break
        else:
            raise PoststratError(f"stratum {h}: no donor group with data")
        didx = [hpos[g] for g in donors]
        denom = stats.v[didx].sum()
        out.T[i] = pseudo_list * stats.T[didx].sum(axis=0) / denom
        out.U[i] = pseudo_list * stats.U[didx].sum(axis=0) / denom
        out.v[i] = pseudo_list
        out.n[i] = 1
        out.imputed[i] = True
    return out


def _kstar_candidates(stratum, hierarchy, data_strata):
    """Descending (k, group) pairs whose group intersects the data set."""
    for k in sorted(hierarchy.k_list, reverse=True):
        group = hierarchy.group_of(k, stratum)
        if any(h in data_strata for h in group):
            yield k, group
    if not data_strata:
        raise PoststratError("no stratum has data; estimation impossible")
