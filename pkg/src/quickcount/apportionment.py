"""Seat rules: district winners, national shares, capped iterative PR allocation.

District-level vote matrices are processed with numpy so that thousands of
bootstrap / posterior replicates stay cheap.  National shares are computed
with exact rational arithmetic when the vote matrix is integer, and with a
1e-12 guard band before flooring when it is float (expanded estimates).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .catalog import Catalog, ForceKind


class ApportionmentError(ValueError):
    pass


GUARD = 1e-12


def _floor(x):
    if isinstance(x, Fraction):
        return x.numerator // x.denominator
    return math.floor(x + GUARD)


@dataclass
class DistrictVotes:
    """Option-level vote totals for every district, as a dense matrix."""

    districts: list[int]
    options: tuple[str, ...]
    matrix: np.ndarray  # shape (L, n_options); int64 votes or float64 estimates

    @classmethod
    def from_dict(cls, totals: dict[int, dict[str, float]], catalog: Catalog):
        districts = sorted(totals)
        options = catalog.option_ids()
        col = {o: i for i, o in enumerate(options)}
        is_int = all(
            float(v).is_integer() for d in totals.values() for v in d.values()
        )
        mat = np.zeros((len(districts), len(options)), dtype=np.int64 if is_int else float)
        for i, h in enumerate(districts):
            for opt, v in totals[h].items():
                mat[i, col[opt]] = v
        return cls(districts, options, mat)

    def to_dict(self) -> dict[int, dict[str, float]]:
        return {
            h: {o: self.matrix[i, j].item() for j, o in enumerate(self.options)}
            for i, h in enumerate(self.districts)
        }


@dataclass
class NationalShares:
    """Per-party national totals and the derived valid-vote proportions."""

    nu: dict[str, float]       # split totals, parties + independents + null
    lam: dict[str, object]     # valid-vote share, parties + independents
    eta: dict[str, object]     # post-threshold share, parties (0 if excluded)


@dataclass
class ChamberComposition:
    majority: dict[str, int]   # per party and per independent force
    pr: dict[str, int]         # per party
    unassigned_pr: int = 0

    def total(self, force_id: str) -> int:
        return self.majority.get(force_id, 0) + self.pr.get(force_id, 0)

    def totals(self) -> dict[str, int]:
        out = dict(self.majority)
        for p, s in self.pr.items():
            out[p] = out.get(p, 0) + s
        return out

    def seats_total(self) -> int:
        return sum(self.majority.values()) + sum(self.pr.values())


@dataclass
class DistrictOutcome:
    district: int
    candidacy: str          # winning candidacy id (party, coalition or independent)
    seat_holder: str        # force that takes the seat
    degenerate: bool = False


@dataclass
class CompositionResult:
    chamber: ChamberComposition
    shares: NationalShares
    winners: list[DistrictOutcome] = field(default_factory=list)


# ---------------------------------------------------------------------------
# catalog-derived index structures (pure lookups, rebuilt cheaply per call)
# ---------------------------------------------------------------------------


class _Plan:
    """Column indices and candidacy layout for a catalog's option set."""

    def __init__(self, catalog: Catalog):
        self.catalog = catalog
        options = catalog.option_ids()
        self.col = {o: i for i, o in enumerate(options)}
        forces = [
            f.id for f in catalog.forces if f.kind != ForceKind.ABSTENTION
        ]
        self.forces = forces
        self.fcol = {f: i for i, f in enumerate(forces)}

        # single-party option column per force (None if the force has no own column)
        self.single_col = {}
        for o in catalog.options:
            if len(o.composition) == 1:
                self.single_col.setdefault(o.composition[0], self.col[o.id])

        # multi-party options with members sorted by registration order so a
        # plain argmax resolves remainder ties toward earliest registration
        self.multi = []
        for o in catalog.options:
            if len(o.composition) > 1:
                members = sorted(o.composition, key=catalog.registration_order)
                self.multi.append((self.col[o.id], members))

        # candidacies, ordered by id so argmax tie-breaks to the lowest id
        cands = []
        for c in catalog.coalitions:
            cols = [
                self.col[o.id]
                for o in catalog.options
                if set(o.composition).issubset(set(c.members))
            ]
            cands.append((c.id, "coalition", cols, c))
        for p in catalog.party_ids:
            if catalog.coalition_of(p) is None and p in self.single_col:
                cands.append((p, "party", [self.single_col[p]], None))
        for p in catalog.independent_ids:
            if p in self.single_col:
                cands.append((p, "independent", [self.single_col[p]], None))
        cands.sort(key=lambda t: t[0])
        self.candidacies = cands


def split_matrix(votes: DistrictVotes, catalog: Catalog, plan: _Plan | None = None):
    """Resolve the option matrix into a per-force matrix (abstentions excluded).

    Integer matrices follow the equal-integer-share rule with the remainder
    going to the member with the most individual votes in the district; float
    matrices (expanded estimates) are divided exactly.
    """
    plan = plan or _Plan(catalog)
    V = votes.matrix
    L = V.shape[0]
    is_int = np.issubdtype(V.dtype, np.integer)
    F = np.zeros((L, len(plan.forces)), dtype=V.dtype)
    for force, c in plan.single_col.items():
        F[:, plan.fcol[force]] += V[:, c]
    for c, members in plan.multi:
        k = len(members)
        midx = [plan.fcol[m] for m in members]
        if is_int:
            base = V[:, c] // k
            rem = V[:, c] - base * k
            for i in midx:
                F[:, i] += base
            singles = np.stack(
                [
                    V[:, plan.single_col[m]]
                    if m in plan.single_col
                    else np.zeros(L, dtype=V.dtype)
                    for m in members
                ],
                axis=1,
            )
            top = np.argmax(singles, axis=1)
            np.add.at(F, (np.arange(L), np.take(midx, top)), rem)
        else:
            for i in midx:
                F[:, i] += V[:, c] / k
    return F, plan


def district_winners(votes: DistrictVotes, catalog: Catalog, plan: _Plan | None = None):
    """Winning candidacy and seat holder for every district."""
    plan = plan or _Plan(catalog)
    V = votes.matrix
    L = V.shape[0]
    if not plan.candidacies:
        raise ApportionmentError("catalog declares no candidacies")
    scores = np.empty((L, len(plan.candidacies)), dtype=float)
    valid = np.ones((L, len(plan.candidacies)), dtype=bool)
    district_pos = {h: i for i, h in enumerate(votes.districts)}
    for ci, (cid, kind, cols, coal) in enumerate(plan.candidacies):
        scores[:, ci] = V[:, cols].sum(axis=1)
        if kind == "coalition":
            mask = np.zeros(L, dtype=bool)
            for h in coal.seat_agreement:
                if h in district_pos:
                    mask[district_pos[h]] = True
            valid[:, ci] = mask
    # a coalition party stands alone where its coalition did not register
    extra = []
    for p in catalog.party_ids:
        coal = catalog.coalition_of(p)
        if coal is not None and p in plan.single_col:
            mask = np.ones(L, dtype=bool)
            for h in coal.seat_agreement:
                if h in district_pos:
                    mask[district_pos[h]] = False
            if mask.any():
                extra.append((p, "party", [plan.single_col[p]], None, mask))
    if extra:
        all_c = [(cid, kind, cols, coal, valid[:, i])
                 for i, (cid, kind, cols, coal) in enumerate(plan.candidacies)]
        all_c += extra
        all_c.sort(key=lambda t: t[0])
        scores = np.stack([V[:, c[2]].sum(axis=1) for c in all_c], axis=1)
        valid = np.stack([c[4] for c in all_c], axis=1)
        cands = [(c[0], c[1], c[2], c[3]) for c in all_c]
    else:
        cands = plan.candidacies
    masked = np.where(valid, scores, -1.0)
    win = np.argmax(masked, axis=1)
    top = masked[np.arange(L), win]
    outcomes = []
    for i, h in enumerate(votes.districts):
        if top[i] < 0:
            raise ApportionmentError(f"district {h} has no registered candidacy")
        cid, kind, _, coal = cands[win[i]]
        if kind == "coalition":
            holder = coal.seat_agreement[h]
        else:
            holder = cid
        outcomes.append(DistrictOutcome(h, cid, holder, degenerate=top[i] <= 0))
    return outcomes


def national_shares(votes: DistrictVotes, catalog: Catalog, plan: _Plan | None = None):
    """Split totals and the valid-vote / post-threshold proportions.

    lambda excludes null-unregistered votes and abstentions; eta additionally
    excludes independents and parties at or below the threshold.
    """
    F, plan = split_matrix(votes, catalog, plan)
    nu_vec = F.sum(axis=0)
    nu = {f: nu_vec[i].item() for f, i in plan.fcol.items()}
    exact = np.issubdtype(votes.matrix.dtype, np.integer)
    return shares_from_nu(nu, catalog, exact=exact)


def shares_from_nu(nu: dict, catalog: Catalog, exact: bool) -> "NationalShares":
    """Valid-vote and post-threshold proportions from split national totals."""
    valid_ids = list(catalog.party_ids) + list(catalog.independent_ids)
    valid_total = sum(nu[f] for f in valid_ids)
    if valid_total <= 0:
        raise ApportionmentError("zero valid votes nationally; shares undefined")
    if exact:
        lam = {f: Fraction(nu[f], valid_total) for f in valid_ids}
        thr = Fraction(str(catalog.constants.threshold))
    else:
        lam = {f: nu[f] / valid_total for f in valid_ids}
        thr = catalog.constants.threshold
    qualifying = [p for p in catalog.party_ids if lam[p] > thr]
    q_total = sum(nu[p] for p in qualifying)
    eta = {p: (Fraction(0) if exact else 0.0) for p in catalog.party_ids}
    for p in qualifying:
        eta[p] = Fraction(nu[p], q_total) if exact else nu[p] / q_total
    return NationalShares(nu=nu, lam=lam, eta=eta)


# ---------------------------------------------------------------------------
# integer apportionment
# ---------------------------------------------------------------------------


def largest_remainder(seats: int, weights: dict, order: dict | None = None):
    """Quota floors plus one seat per largest fractional remainder.

    Fractional-part ties go to the larger weight, then to the lower rank in
    `order` (registration order), then to the lower id.
    """
    if seats < 0:
        raise ApportionmentError("seats must be non-negative")
    total = sum(weights.values())
    if weights and abs(float(total) - 1.0) > 1e-9:
        raise ApportionmentError(f"weights must sum to 1, got {float(total)}")
    for k, w in weights.items():
        if w < 0:
            raise ApportionmentError(f"negative weight for {k}")
    order = order or {}
    alloc = {}
    fracs = []
    assigned = 0
    for k, w in weights.items():
        q = seats * w
        base = _floor(q)
        alloc[k] = base
        assigned += base
        fracs.append((q - base, w, k))
    remaining = seats - assigned
    fracs.sort(key=lambda t: (-t[0], -t[1], order.get(t[2], 0), t[2]))
    for f, w, k in fracs[: max(0, remaining)]:
        alloc[k] += 1
    return alloc


def seat_cap(eta_j, constants) -> int:
    """Maximum total seats for a party given its post-threshold share."""
    if isinstance(eta_j, Fraction):
        margin = Fraction(str(constants.overrepresentation_margin))
    else:
        margin = constants.overrepresentation_margin
    return min(constants.seat_cap, _floor(constants.total_seats * (eta_j + margin)))


def allocate_pr(majority: dict[str, int], shares: NationalShares, catalog: Catalog):
    """Distribute the PR seats subject to the per-party cap.

    Iteratively: distribute by largest remainder over the (renormalized)
    post-threshold shares; any party whose total exceeds its cap gets its PR
    seats fixed at cap minus majority (floored at 0) and leaves the pool,
    and the leftover seats are redistributed among the rest.
    """
    const = catalog.constants
    order = {p: catalog.registration_order(p) for p in catalog.party_ids}
    qualifying = [p for p in catalog.party_ids if shares.eta.get(p, 0) > 0]
    if not qualifying:
        raise ApportionmentError("no party qualifies for proportional representation")
    caps = {p: seat_cap(shares.eta[p], const) for p in qualifying}
    pr = {p: 0 for p in catalog.party_ids}
    pool = []
    for p in qualifying:
        if majority.get(p, 0) >= caps[p]:
            # majority seats alone meet or exceed the cap; never revoked
            pr[p] = 0
        else:
            pool.append(p)
    seats_left = const.pr_seats
    unassigned = 0
    while seats_left > 0:
        if not pool:
            unassigned = seats_left
            break
        pool_total = sum(shares.eta[p] for p in pool)
        weights = {p: shares.eta[p] / pool_total for p in pool}
        alloc = largest_remainder(seats_left, weights, order)
        over = [
            p for p in pool if majority.get(p, 0) + alloc[p] > caps[p]
        ]
        if not over:
            for p in pool:
                pr[p] = alloc[p]
            seats_left = 0
            break
        worst = max(
            over,
            key=lambda p: (majority.get(p, 0) + alloc[p] - caps[p], -order[p]),
        )
        pr[worst] = max(0, caps[worst] - majority.get(worst, 0))
        seats_left -= pr[worst]
        pool.remove(worst)
    return ChamberComposition(majority=dict(majority), pr=pr, unassigned_pr=unassigned)


def compose_chamber(votes, catalog: Catalog) -> CompositionResult:
    """Full pipeline: district winners, national shares, capped PR allocation."""
    if isinstance(votes, dict):
        votes = DistrictVotes.from_dict(votes, catalog)
    plan = _Plan(catalog)
    winners = district_winners(votes, catalog, plan)
    shares = national_shares(votes, catalog, plan)
    majority: dict[str, int] = {}
    for w in winners:
        majority[w.seat_holder] = majority.get(w.seat_holder, 0) + 1
    for p in catalog.party_ids:
        majority.setdefault(p, 0)
    chamber = allocate_pr(majority, shares, catalog)
    return CompositionResult(chamber=chamber, shares=shares, winners=winners)
