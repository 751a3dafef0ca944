import numpy as np
import pytest

from quickcount.bayes import sufficient_stats
from quickcount.poststrat import (
    ClusteringHierarchy,
    PoststratError,
    StratumProfile,
    build_hierarchy,
    build_profiles,
    find_kstar,
    impute_missing_strata,
)
from quickcount.sampleframe import Frame, Station, StationReturn
from quickcount.synth import synth_catalog, synth_frame, synth_population


def profiles_from_points(points):
    return [
        StratumProfile(stratum=i + 1, features=np.asarray(p, dtype=float))
        for i, p in enumerate(points)
    ]


class TestBuildHierarchy:
    def test_forced_partitions_two_strata(self):
        h = build_hierarchy(profiles_from_points([[0.0, 1.0], [1.0, 0.0]]), [1, 2])
        assert len(set(h.partitions[1])) == 1
        assert len(set(h.partitions[2])) == 2

    def test_collinear_complete_linkage_cut(self):
        # points 0, 1, 10: k=2 must separate 10 from {0, 1}
        with pytest.warns(UserWarning, match="constant feature"):
            h = build_hierarchy(
                profiles_from_points([[0.0, 0.5], [1.0, 0.5], [10.0, 0.5]]),
                [1, 2, 3],
            )
        labels = h.partitions[2]
        assert labels[0] == labels[1] != labels[2]

    def test_duplicates_merge_first(self):
        h = build_hierarchy(
            profiles_from_points([[0.0, 1.0], [0.0, 1.0], [5.0, 0.0]]), [2]
        )
        labels = h.partitions[2]
        assert labels[0] == labels[1] != labels[2]

    def test_exact_group_counts_and_nesting(self):
        rng = np.random.default_rng(0)
        pts = rng.random((30, 4))
        ks = [1, 3, 7, 15, 30]
        h = build_hierarchy(profiles_from_points(pts), ks)
        for k in ks:
            assert len(set(h.partitions[k])) == k
        # nesting: a finer partition refines every coarser one
        for ka, kb in zip(ks, ks[1:]):
            mapping = {}
            for ga, gb in zip(h.partitions[kb], h.partitions[ka]):
                mapping.setdefault(ga, gb)
                assert mapping[ga] == gb

    def test_constant_feature_dropped_with_warning(self):
        pts = [[0.0, 7.0], [1.0, 7.0], [9.0, 7.0]]
        with pytest.warns(UserWarning, match="constant feature"):
            h = build_hierarchy(profiles_from_points(pts), [2])
        assert len(set(h.partitions[2])) == 2

    def test_all_constant_rejected(self):
        with pytest.raises(PoststratError), pytest.warns(UserWarning):
            build_hierarchy(profiles_from_points([[1.0], [1.0], [1.0]]), [2])

    def test_k_out_of_range_rejected(self):
        with pytest.raises(PoststratError):
            build_hierarchy(profiles_from_points([[0.0, 1], [1.0, 0]]), [3])

    def test_csv_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        h = build_hierarchy(profiles_from_points(rng.random((10, 3))), [1, 4, 10])
        path = tmp_path / "clusters.csv"
        h.to_csv(path)
        back = ClusteringHierarchy.from_csv(path)
        assert back.strata == h.strata
        assert back.k_list == h.k_list
        for k in h.k_list:
            assert np.array_equal(back.partitions[k], h.partitions[k])


class TestBuildProfiles:
    def test_share_and_turnout_features(self):
        cat = synth_catalog(n_parties=2, seed=0)
        frame = Frame([Station(1, 1, 100), Station(2, 1, 200)])
        historic = [
            StationReturn(1, 1, {"P01": 30, "P02": 10, "NULO": 0}, 100),
            StationReturn(2, 1, {"P01": 40, "P02": 40, "NULO": 20}, 200),
        ]
        profiles = build_profiles(historic, frame, cat)
        assert len(profiles) == 2
        p1 = profiles[0]
        # P01 share of cast votes = 30/40; turnout = 40/100
        assert p1.features[0] == pytest.approx(0.75)
        assert p1.features[-1] == pytest.approx(0.4)

    def test_stratum_without_votes_rejected(self):
        cat = synth_catalog(n_parties=2, seed=0)
        frame = Frame([Station(1, 1, 100), Station(2, 1, 200)])
        historic = [StationReturn(1, 1, {"P01": 30, "P02": 10, "NULO": 0}, 100)]
        with pytest.raises(PoststratError):
            build_profiles(historic, frame, cat)


class TestFindKstar:
    def three_strata_hierarchy(self):
        # merge structure: {1,2} pair first, then 3
        return build_hierarchy(
            profiles_from_points([[0.0, 1.0], [0.5, 1.0], [9.0, 0.0]]), [1, 2, 3]
        )

    def test_own_data_gives_finest(self):
        h = self.three_strata_hierarchy()
        k, group = find_kstar(1, h, {1, 3})
        assert k == 3
        assert group == [1]

    def test_partner_in_pair(self):
        h = self.three_strata_hierarchy()
        k, group = find_kstar(1, h, {2})
        assert k == 2
        assert set(group) == {1, 2}

    def test_fallback_to_global_pool(self):
        h = self.three_strata_hierarchy()
        k, group = find_kstar(1, h, {3})
        assert k == 1
        assert set(group) == {1, 2, 3}

    def test_no_data_anywhere_rejected(self):
        h = self.three_strata_hierarchy()
        with pytest.raises(PoststratError):
            find_kstar(1, h, set())


class TestImpute:
    def world(self):
        cat = synth_catalog(n_parties=3, seed=0)
        frame = synth_frame(L=4, N_h=6, seed=0)
        pop = synth_population(frame, cat, seed=1)
        profiles = build_profiles(pop, frame, cat)
        hierarchy = build_hierarchy(profiles, [1, 2, 4])
        return cat, frame, pop, hierarchy

    def test_formula_arithmetic(self):
        # T' = (300, 500), v' = (750, 1250) -> imputed T = 750 * 800/2000 = 300
        cat, frame, pop, _ = self.world()
        cat1 = synth_catalog(n_parties=1, seed=0)
        frame2 = Frame([Station(1, 1, 750), Station(2, 1, 1250), Station(3, 1, 700)])
        sample = [
            StationReturn(1, 1, {"P01": 300, "NULO": 0}, 750),
            StationReturn(2, 1, {"P01": 500, "NULO": 0}, 1250),
        ]
        stats = sufficient_stats(sample, frame2, cat1)
        hierarchy = ClusteringHierarchy(
            strata=[1, 2, 3],
            k_list=[1],
            partitions={1: np.array([1, 1, 1])},
        )
        out = impute_missing_strata(stats, hierarchy, pseudo_list=750)
        j = stats.forces.index("P01")
        assert out.T[2, j] == pytest.approx(750 * 800 / 2000)
        assert out.v[2] == 750
        assert out.n[2] == 1
        assert out.imputed[2]

    def test_single_donor_preserves_ratio(self):
        cat1 = synth_catalog(n_parties=1, seed=0)
        frame2 = Frame([Station(1, 1, 750), Station(2, 1, 700)])
        sample = [StationReturn(1, 1, {"P01": 300, "NULO": 0}, 750)]
        stats = sufficient_stats(sample, frame2, cat1)
        hierarchy = ClusteringHierarchy(
            strata=[1, 2], k_list=[1], partitions={1: np.array([1, 1])}
        )
        out = impute_missing_strata(stats, hierarchy, pseudo_list=750)
        j = stats.forces.index("P01")
        assert out.T[1, j] == pytest.approx(300.0)
        assert out.U[1, j] == pytest.approx(stats.U[0, j])

    def test_identity_when_complete(self):
        cat, frame, pop, hierarchy = self.world()
        stats = sufficient_stats(pop, frame, cat)
        out = impute_missing_strata(stats, hierarchy)
        assert np.array_equal(out.T, stats.T)
        assert not out.imputed.any()

    def test_idempotent(self):
        cat, frame, pop, hierarchy = self.world()
        partial = [r for r in pop if r.stratum != 2]
        stats = sufficient_stats(partial, frame, cat)
        once = impute_missing_strata(stats, hierarchy)
        twice = impute_missing_strata(once, hierarchy)
        assert np.array_equal(once.T, twice.T)
        assert np.array_equal(once.imputed, twice.imputed)

    def test_observed_data_replaces_imputed(self):
        cat, frame, pop, hierarchy = self.world()
        partial = [r for r in pop if r.stratum != 2]
        stats = sufficient_stats(partial, frame, cat)
        imp = impute_missing_strata(stats, hierarchy)
        full = impute_missing_strata(sufficient_stats(pop, frame, cat), hierarchy)
        i = full.strata.index(2)
        assert not full.imputed[i]
        assert not np.array_equal(imp.T[i], full.T[i])

    def test_imputed_stats_keep_rate_positive(self):
        from quickcount.bayes import posterior_params

        cat, frame, pop, hierarchy = self.world()
        partial = [r for r in pop if r.stratum not in (2, 4)]
        stats = sufficient_stats(partial, frame, cat)
        out = impute_missing_strata(stats, hierarchy)
        params = posterior_params(out)
        assert (params.rate > 0).all()
        assert (out.T <= out.v[:, None] + 1e-9).all()

    def test_hierarchy_independence_when_complete(self):
        from quickcount import bayes

        cat, frame, pop, hierarchy = self.world()
        stats = sufficient_stats(pop, frame, cat)
        other = ClusteringHierarchy(
            strata=list(frame.strata),
            k_list=[1],
            partitions={1: np.ones(frame.L, dtype=int)},
        )
        a = bayes.bayes_chamber(
            impute_missing_strata(stats, hierarchy), frame, cat, draws=100, seed=9
        )
        b = bayes.bayes_chamber(
            impute_missing_strata(stats, other), frame, cat, draws=100, seed=9
        )
        assert np.array_equal(a.seat_totals, b.seat_totals)
