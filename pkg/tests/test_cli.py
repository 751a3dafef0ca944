import pandas as pd
import pytest
from click.testing import CliRunner

from quickcount.cli import main
from quickcount.sampleframe import (
    PartialSample,
    StationReturn,
    draw_sample,
    write_returns_csv,
)
from quickcount.synth import (
    population_index,
    synth_catalog,
    synth_frame,
    synth_population,
)


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cat = synth_catalog(n_parties=4, coalition_sizes=(2,), seed=0)
    frame = synth_frame(L=4, N_h=12, seed=0)
    pop = synth_population(frame, cat, seed=1)
    idx = population_index(pop)
    planned = draw_sample(frame, {h: 5 for h in frame.strata}, 2)
    sample = [idx[(s.stratum, s.station)] for s in planned]
    # partial sample: drop two stations entirely and blank one column on one row
    partial = list(sample[:-2])
    blanked = partial[0]
    opt = list(cat.option_ids())[0]
    votes = dict(blanked.votes)
    votes[opt] = None
    partial[0] = StationReturn(
        blanked.stratum, blanked.station, votes, blanked.nominal_list
    )
    for i, missing in enumerate(sample[-2:]):
        partial.append(
            StationReturn(
                missing.stratum,
                missing.station,
                {o: None for o in cat.option_ids()},
                missing.nominal_list,
            )
        )

    paths = dict(
        catalog=root / "catalog.yaml",
        frame=root / "frame.csv",
        historic=root / "historic.csv",
        sample=root / "sample.csv",
        partial=root / "partial.csv",
    )
    cat.to_yaml(paths["catalog"])
    frame.to_csv(paths["frame"])
    write_returns_csv(paths["historic"], pop, cat.option_ids())
    write_returns_csv(paths["sample"], sample, cat.option_ids())
    write_returns_csv(paths["partial"], partial, cat.option_ids())
    return dict(root=root, sample_returns=sample, **paths)


@pytest.fixture(scope="module")
def clusters_csv(files):
    out = files["root"] / "clusters.csv"
    result = CliRunner().invoke(
        main,
        [
            "cluster",
            "--historic", str(files["historic"]),
            "--frame", str(files["frame"]),
            "--catalog", str(files["catalog"]),
            "--k", "1,2,4",
            "--out", str(out),
        ],
    )
    assert result.exit_code == 0, result.output
    return out


def common(files):
    return [
        "--frame", str(files["frame"]),
        "--catalog", str(files["catalog"]),
    ]


def test_cluster_output_shape(files, clusters_csv):
    df = pd.read_csv(clusters_csv)
    assert list(df.columns) == ["stratum_id", "k1", "k2", "k4"]
    assert len(df) == 4
    assert df["k1"].nunique() == 1
    assert df["k4"].nunique() == 4


def test_estimate_freq(files):
    out = files["root"] / "freq.csv"
    result = CliRunner().invoke(
        main,
        ["estimate-freq", "--returns", str(files["sample"]), *common(files),
         "--B", "40", "--seed", "3", "--out", str(out)],
    )
    assert result.exit_code == 0, result.output
    df = pd.read_csv(out)
    iv = df[df["record"] == "interval"]
    assert len(iv) == 4  # one row per party
    assert (iv["lower"] <= iv["upper"]).all()
    assert (iv["level"] == 0.95).all()
    wp = df[df["record"] == "winner_probability"]
    assert set(wp["district"].astype(int)) == {1, 2, 3, 4}


def test_estimate_freq_deterministic(files):
    args = ["estimate-freq", "--returns", str(files["sample"]), *common(files),
            "--B", "30", "--seed", "5"]
    out1 = files["root"] / "freq_a.csv"
    out2 = files["root"] / "freq_b.csv"
    for out in (out1, out2):
        result = CliRunner().invoke(main, args + ["--out", str(out)])
        assert result.exit_code == 0, result.output
    assert pd.read_csv(out1).equals(pd.read_csv(out2))


def test_estimate_bayes_adjusted_level(files, clusters_csv):
    out = files["root"] / "bayes.csv"
    result = CliRunner().invoke(
        main,
        ["estimate-bayes", "--returns", str(files["partial"]), *common(files),
         "--clusters", str(clusters_csv), "--draws", "300", "--seed", "1",
         "--out", str(out)],
    )
    assert result.exit_code == 0, result.output
    df = pd.read_csv(out)
    iv = df[df["record"] == "interval"]
    # 17 of 20 planned rows carry complete votes -> 85% -> level 0.96
    assert (iv["level"] == 0.96).all()
    assert "credibility level 0.96" in result.output


def test_estimate_bayes_fixed_level(files, clusters_csv):
    out = files["root"] / "bayes99.csv"
    result = CliRunner().invoke(
        main,
        ["estimate-bayes", "--returns", str(files["partial"]), *common(files),
         "--clusters", str(clusters_csv), "--draws", "200", "--level", "0.99",
         "--out", str(out)],
    )
    assert result.exit_code == 0, result.output
    df = pd.read_csv(out)
    assert (df[df["record"] == "interval"]["level"] == 0.99).all()


def test_estimate_mi(files):
    out = files["root"] / "mi.csv"
    result = CliRunner().invoke(
        main,
        ["estimate-mi", "--returns", str(files["partial"]), *common(files),
         "--m", "3", "--iters", "2", "--B", "20", "--seed", "2",
         "--out", str(out)],
    )
    assert result.exit_code == 0, result.output
    df = pd.read_csv(out)
    iv = df[df["record"] == "interval"]
    assert len(iv) == 4
    assert (iv["lower"] >= 0).all() and (iv["upper"] <= 500).all()


def test_design(files):
    out = files["root"] / "design.csv"
    result = CliRunner().invoke(
        main,
        ["design", "--population", str(files["historic"]), *common(files),
         "--n", "16,32", "--reps", "5", "--seed", "4", "--out", str(out)],
    )
    assert result.exit_code == 0, result.output
    df = pd.read_csv(out)
    assert list(df["n"]) == [16, 32]
    assert (df["eps2"] >= df["eps1"]).all()


def test_simulate_arrival_and_replay(files, clusters_csv):
    log = files["root"] / "log.csv"
    result = CliRunner().invoke(
        main,
        ["simulate-arrival", "--sample", str(files["sample"]), *common(files),
         "--bias", "rural=0.5,scale=30", "--seed", "6", "--out", str(log)],
    )
    assert result.exit_code == 0, result.output
    df = pd.read_csv(log)
    assert len(df) == len(files["sample_returns"])
    assert list(df["timestamp"]) == sorted(df["timestamp"])

    series = files["root"] / "series.csv"
    result = CliRunner().invoke(
        main,
        ["replay", "--log", str(log), *common(files),
         "--clusters", str(clusters_csv), "--cadence", "30m",
         "--methods", "bayes", "--draws", "200", "--seed", "7",
         "--out", str(series)],
    )
    assert result.exit_code == 0, result.output
    sdf = pd.read_csv(series)
    assert {"tick", "method", "force", "lower", "upper", "level"} <= set(sdf.columns)
    received = sdf.groupby("tick")["received"].first()
    assert received.is_monotonic_increasing


def test_replay_cadence_units(files, clusters_csv):
    from quickcount.cli import _parse_cadence

    assert _parse_cadence("5m") == 5
    assert _parse_cadence("90s") == 1.5
    assert _parse_cadence("1h") == 60
    assert _parse_cadence("7") == 7


def test_bad_bias_parameter_rejected(files):
    result = CliRunner().invoke(
        main,
        ["simulate-arrival", "--sample", str(files["sample"]), *common(files),
         "--bias", "bogus=1", "--out", str(files["root"] / "x.csv")],
    )
    assert result.exit_code != 0
    assert "unknown bias parameter" in result.output


def test_domain_error_becomes_clean_failure(files):
    # drop an entire stratum: the frequentist endpoint must refuse
    sample = [r for r in files["sample_returns"] if r.stratum != 1]
    from quickcount.catalog import Catalog

    cat = Catalog.from_yaml(files["catalog"])
    path = files["root"] / "short.csv"
    write_returns_csv(path, sample, cat.option_ids())
    result = CliRunner().invoke(
        main,
        ["estimate-freq", "--returns", str(path), *common(files),
         "--B", "10", "--out", str(files["root"] / "y.csv")],
    )
    assert result.exit_code != 0
    assert "422" in result.output
