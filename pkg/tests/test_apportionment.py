import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quickcount import apportionment as app
from quickcount.apportionment import (
    ApportionmentError,
    DistrictVotes,
    allocate_pr,
    compose_chamber,
    largest_remainder,
    national_shares,
    seat_cap,
    shares_from_nu,
)
from quickcount.catalog import ElectoralConstants
from quickcount.synth import random_election, synth_catalog

from oracles import (
    oracle_brute_force_lr,
    oracle_compose,
    oracle_largest_remainder,
    oracle_seat_cap,
)
from test_catalog import make_catalog


class TestLargestRemainder:
    def test_spec_example(self):
        out = largest_remainder(5, {"A": 0.46, "B": 0.34, "C": 0.20})
        assert out == {"A": 2, "B": 2, "C": 1}

    def test_zero_seats(self):
        assert largest_remainder(0, {"A": 0.5, "B": 0.5}) == {"A": 0, "B": 0}

    def test_symmetry(self):
        out = largest_remainder(4, {p: 0.25 for p in "ABCD"})
        assert out == {p: 1 for p in "ABCD"}

    def test_negative_weight_rejected(self):
        with pytest.raises(ApportionmentError):
            largest_remainder(5, {"A": 1.2, "B": -0.2})

    def test_weights_must_normalize(self):
        with pytest.raises(ApportionmentError):
            largest_remainder(5, {"A": 0.3, "B": 0.3})

    @given(
        seats=st.integers(min_value=0, max_value=50),
        raw=st.lists(st.integers(min_value=1, max_value=1000), min_size=1, max_size=6),
    )
    def test_floors_sum_and_oracle_membership(self, seats, raw):
        total = sum(raw)
        weights = {f"P{i}": Fraction(r, total) for i, r in enumerate(raw)}
        out = largest_remainder(seats, weights)
        assert sum(out.values()) == seats
        for i, (p, w) in enumerate(weights.items()):
            q = seats * w
            # never differs from the quota floor by more than 1
            assert math.floor(q) <= out[p] <= math.floor(q) + 1
        optima = oracle_brute_force_lr(seats, weights, list(weights))
        assert out in optima

    def test_exact_fraction_path_no_float_drift(self):
        # 3 seats over thirds: floats would see 0.9999...; Fractions are exact
        w = {p: Fraction(1, 3) for p in "ABC"}
        assert largest_remainder(3, w) == {p: 1 for p in "ABC"}


class TestSeatCap:
    @pytest.mark.parametrize(
        "eta,expected", [(0.5, 290), (1.0, 300), (0.0, 40)]
    )
    def test_spec_examples(self, eta, expected):
        assert seat_cap(eta, ElectoralConstants()) == expected

    @given(num=st.integers(min_value=0, max_value=10**6))
    def test_matches_oracle_on_fractions(self, num):
        eta = Fraction(num, 10**6)
        assert seat_cap(eta, ElectoralConstants()) == oracle_seat_cap(eta)

    def test_float_guard_band(self):
        # 500*(0.14+0.08) = 110.00000000000001 in floats; must floor to 110
        assert seat_cap(0.14, ElectoralConstants()) == 110
        assert seat_cap(Fraction(14, 100), ElectoralConstants()) == 110


class TestNationalShares:
    def test_threshold_and_renormalize(self):
        cat = synth_catalog(n_parties=4, seed=0)
        nu = {"P01": 5000, "P02": 3000, "P03": 1800, "P04": 200}
        shares = shares_from_nu(nu, cat, exact=True)
        assert shares.lam["P04"] == Fraction(200, 10000)
        assert shares.eta["P04"] == 0
        assert shares.eta["P01"] == Fraction(5000, 9800)
        assert sum(shares.eta.values()) == 1

    def test_lambda_includes_independents_eta_excludes(self):
        cat = synth_catalog(n_parties=2, n_independents=1, seed=0)
        nu = {"P01": 600, "P02": 300, "I01": 100}
        shares = shares_from_nu(nu, cat, exact=True)
        assert shares.lam["I01"] == Fraction(100, 1000)
        assert "I01" not in shares.eta
        assert sum(shares.eta.values()) == 1

    def test_exact_threshold_excluded(self):
        # strictly greater than 3%: exactly 3% does not qualify
        cat = synth_catalog(n_parties=2, seed=0)
        nu = {"P01": 9700, "P02": 300}
        shares = shares_from_nu(nu, cat, exact=True)
        assert shares.eta["P02"] == 0
        assert shares.eta["P01"] == 1

    def test_zero_valid_votes_error(self):
        cat = synth_catalog(n_parties=2, seed=0)
        with pytest.raises(ApportionmentError):
            shares_from_nu({"P01": 0, "P02": 0}, cat, exact=True)

    def test_null_votes_ignored(self):
        cat = synth_catalog(n_parties=2, seed=0)
        totals = {1: {"P01": 60, "P02": 40, "NULO": 900}}
        shares = national_shares(DistrictVotes.from_dict(totals, cat), cat)
        assert shares.lam["P01"] == Fraction(60, 100)


class TestAllocatePr:
    def test_single_party_pool_gets_all_200(self):
        cat = synth_catalog(n_parties=1, seed=0)
        shares = shares_from_nu({"P01": 100}, cat, exact=True)
        chamber = allocate_pr({"P01": 0}, shares, cat)
        assert chamber.pr == {"P01": 200}
        assert chamber.unassigned_pr == 0

    def test_majority_over_cap_gets_zero_pr(self):
        cat = synth_catalog(n_parties=2, seed=0)
        shares = shares_from_nu({"P01": 500, "P02": 500}, cat, exact=True)
        # eta = 0.5 each, cap 290; P01 holds 295 majority seats already
        chamber = allocate_pr({"P01": 295, "P02": 0}, shares, cat)
        assert chamber.pr["P01"] == 0
        assert chamber.pr["P02"] == 200

    def test_two_equal_parties_split(self):
        cat = synth_catalog(n_parties=2, seed=0)
        shares = shares_from_nu({"P01": 500, "P02": 500}, cat, exact=True)
        chamber = allocate_pr({"P01": 0, "P02": 0}, shares, cat)
        assert chamber.pr == {"P01": 100, "P02": 100}

    def test_no_qualifying_party_raises(self):
        cat = synth_catalog(n_parties=1, n_independents=1, seed=0)
        shares = shares_from_nu({"P01": 2, "I01": 98}, cat, exact=True)
        with pytest.raises(ApportionmentError):
            allocate_pr({"P01": 0, "I01": 0}, shares, cat)

    def test_unassigned_when_pool_empties(self):
        # single qualifying party whose cap binds below 200 leaves seats over
        cat = synth_catalog(n_parties=1, seed=0)
        shares = shares_from_nu({"P01": 100}, cat, exact=True)
        chamber = allocate_pr({"P01": 250}, shares, cat)
        assert chamber.pr["P01"] == 50  # cap 300 - 250 majority
        assert chamber.unassigned_pr == 150


class TestDistrictWinners:
    def test_coalition_beats_single_party(self):
        cat = make_catalog()
        totals = {1: {"A": 100, "B": 80, "A_B": 30, "C": 200}}
        out = app.district_winners(DistrictVotes.from_dict(totals, cat), cat)
        assert out[0].candidacy == "CAB"
        assert out[0].seat_holder == "A"  # seat_agreement[1]

    def test_seat_agreement_respected_per_district(self):
        cat = make_catalog()
        totals = {2: {"A": 100, "B": 80, "A_B": 30, "C": 200}}
        out = app.district_winners(DistrictVotes.from_dict(totals, cat), cat)
        assert out[0].seat_holder == "B"

    def test_tie_breaks_to_lowest_candidacy_id(self):
        cat = make_catalog()
        totals = {1: {"A": 100, "B": 80, "A_B": 30, "C": 210}}
        out = app.district_winners(DistrictVotes.from_dict(totals, cat), cat)
        # coalition CAB (210) ties C (210): "C" < "CAB" lexicographically
        assert out[0].candidacy == "C"

    def test_degenerate_all_zero_flagged(self):
        cat = make_catalog()
        totals = {1: {o: 0 for o in cat.option_ids()}}
        out = app.district_winners(DistrictVotes.from_dict(totals, cat), cat)
        assert out[0].degenerate

    def test_coalition_member_stands_alone_where_unregistered(self):
        cat = make_catalog()  # coalition registered only in districts 1 and 2
        totals = {3: {"A": 100, "B": 80, "A_B": 30, "C": 90}}
        out = app.district_winners(DistrictVotes.from_dict(totals, cat), cat)
        assert out[0].candidacy == "A"
        assert out[0].seat_holder == "A"


class TestComposeChamber:
    def test_seat_conservation_and_oracle_small(self):
        for seed in range(30):
            cat, totals = random_election(L=40, seed=seed)
            res = compose_chamber(totals, cat)
            ch = res.chamber
            assert sum(ch.majority.values()) == 40
            assert sum(ch.pr.values()) + ch.unassigned_pr == 200
            orc = oracle_compose(totals, cat)
            got = ch.totals()
            assert all(got.get(f, 0) == orc["totals"][f] for f in orc["totals"])
            assert ch.unassigned_pr == orc["unassigned_pr"]

    def test_independent_wins_counted(self):
        cat = make_catalog()
        totals = {
            1: {"A": 10, "B": 5, "A_B": 1, "C": 8, "I1": 100},
            2: {"A": 10, "B": 5, "A_B": 1, "C": 8, "I1": 0},
        }
        res = compose_chamber(totals, cat)
        assert res.chamber.majority.get("I1", 0) == 1
        assert res.chamber.seats_total() + res.chamber.unassigned_pr == 202

    def test_scale_invariance(self):
        cat, totals = random_election(L=25, seed=7)
        res1 = compose_chamber(totals, cat)
        scaled = {
            h: {o: 13 * v for o, v in row.items()} for h, row in totals.items()
        }
        res2 = compose_chamber(scaled, cat)
        assert res1.chamber.totals() == res2.chamber.totals()

    def test_monotonicity_spot_check(self):
        # adding votes to one party (caps slack) never reduces its PR seats
        rng = np.random.default_rng(5)
        for _ in range(20):
            cat, totals = random_election(L=20, seed=int(rng.integers(10_000)))
            p = cat.party_ids[0]
            base = compose_chamber(totals, cat)
            if base.chamber.totals().get(p, 0) >= 250:
                continue  # keep away from the cap region
            boosted = {h: dict(row) for h, row in totals.items()}
            for h in boosted:
                boosted[h][p] = boosted[h].get(p, 0) + 50
            more = compose_chamber(boosted, cat)
            assert more.chamber.pr.get(p, 0) >= base.chamber.pr.get(p, 0)

    def test_cap_binds_total_300(self):
        # one party wins everything: eta=1, cap 300 binds, PR = 0 for it
        cat = synth_catalog(n_parties=2, seed=0)
        totals = {h: {"P01": 100, "P02": 1} for h in range(1, 301)}
        res = compose_chamber(totals, cat)
        assert res.chamber.majority["P01"] == 300
        assert res.chamber.pr["P01"] == 0
        assert res.chamber.totals()["P01"] == 300

    def test_float_matrix_path(self):
        # expanded (float) estimates flow through the same pipeline
        cat = synth_catalog(n_parties=3, seed=0)
        totals = {
            h: {"P01": 100.5, "P02": 80.25, "P03": 60.125} for h in range(1, 4)
        }
        res = compose_chamber(totals, cat)
        assert res.chamber.seats_total() + res.chamber.unassigned_pr == 203
