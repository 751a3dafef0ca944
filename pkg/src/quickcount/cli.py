"""Command-line client for the estimation service.

Every subcommand reads flat files, posts one request to the HTTP API and
writes the response as CSV.  By default the service runs in-process (no
server needed); pass --server to talk to a remote instance.
"""

from __future__ import annotations

import json

import click
import httpx
import pandas as pd

from .catalog import Catalog
from .sampleframe import Frame, read_returns_csv


def _client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=None)
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DeprecationWarning)
        from fastapi.testclient import TestClient

    from .service import app

    return TestClient(app)


def _post(server: str | None, path: str, payload: dict) -> dict:
    with _client(server) as client:
        resp = client.post(path, json=payload)
    if resp.status_code != 200:
        try:
            detail = resp.json().get("detail", resp.text)
        except json.JSONDecodeError:
            detail = resp.text
        raise click.ClickException(f"{path} failed ({resp.status_code}): {detail}")
    return resp.json()


def _frame_rows(frame: Frame) -> list[dict]:
    return [
        {
            "stratum_id": s.stratum,
            "station_id": s.station,
            "nominal_list": s.nominal_list,
            "urban": s.urban,
            "state": s.state,
            "tz_offset": s.tz_offset,
        }
        for h in frame.strata
        for s in frame.by_stratum[h]
    ]


def _load_inputs(catalog_path, frame_path, returns_path=None):
    catalog = Catalog.from_yaml(catalog_path)
    frame = Frame.from_csv(frame_path)
    returns = None
    if returns_path is not None:
        returns = read_returns_csv(returns_path, frame, catalog.option_ids())
    return catalog, frame, returns


def _return_rows(returns, received_only: bool) -> list[dict]:
    rows = []
    for r in returns:
        if received_only and r.has_missing():
            continue
        rows.append(
            {"stratum_id": r.stratum, "station_id": r.station, "votes": r.votes}
        )
    return rows


def _planned_rows(returns) -> list[dict]:
    return [{"stratum_id": r.stratum, "station_id": r.station} for r in returns]


def _hierarchy_payload(clusters_path) -> dict:
    df = pd.read_csv(clusters_path)
    strata = [int(h) for h in df["stratum_id"]]
    partitions = {
        int(c[1:]): [int(g) for g in df[c]]
        for c in df.columns
        if c.startswith("k")
    }
    return {
        "strata": strata,
        "k_list": sorted(partitions),
        "partitions": partitions,
    }


def _write_estimate_csv(out, payload: dict, extra: dict | None = None) -> None:
    """Interval rows first, then per-district winner-probability rows."""
    rows = []
    for item in payload["intervals"]:
        row = {
            "record": "interval",
            "party": item["force"],
            "lower": item["lower"],
            "upper": item["upper"],
            "point": item["point"],
            "level": payload.get("level"),
        }
        if extra:
            row.update(extra)
        rows.append(row)
    for wp in payload.get("winner_probabilities", []):
        rows.append(
            {
                "record": "winner_probability",
                "district": wp["district"],
                "party": wp["candidacy"],
                "point": wp["probability"],
            }
        )
    pd.DataFrame(rows).to_csv(out, index=False)


server_option = click.option(
    "--server", default=None, help="Base URL of a running service; default in-process."
)


@click.group()
def main():
    """Quick-count chamber estimation toolkit."""


@main.command("estimate-freq")
@click.option("--returns", "returns_path", required=True, type=click.Path(exists=True))
@click.option("--frame", "frame_path", required=True, type=click.Path(exists=True))
@click.option("--catalog", "catalog_path", required=True, type=click.Path(exists=True))
@click.option("--B", "b", default=300, show_default=True)
@click.option("--level", default=0.95, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path())
@server_option
def estimate_freq(returns_path, frame_path, catalog_path, b, level, seed, out, server):
    """Stratified-bootstrap seat intervals from a complete sample."""
    catalog, frame, returns = _load_inputs(catalog_path, frame_path, returns_path)
    payload = {
        "catalog": catalog.to_dict(),
        "frame": _frame_rows(frame),
        "returns": _return_rows(returns, received_only=True),
        "B": b,
        "level": level,
        "seed": seed,
    }
    result = _post(server, "/estimate/frequentist", payload)
    _write_estimate_csv(out, result)
    click.echo(f"wrote {out} ({len(result['intervals'])} interval rows, B={b})")


@main.command("estimate-bayes")
@click.option("--returns", "returns_path", required=True, type=click.Path(exists=True))
@click.option("--frame", "frame_path", required=True, type=click.Path(exists=True))
@click.option("--catalog", "catalog_path", required=True, type=click.Path(exists=True))
@click.option("--clusters", "clusters_path", required=True, type=click.Path(exists=True))
@click.option("--draws", default=10_000, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option(
    "--level",
    default=None,
    type=float,
    help="Fixed credibility level; default adjusts it to the received fraction.",
)
@click.option("--out", required=True, type=click.Path())
@server_option
def estimate_bayes(
    returns_path, frame_path, catalog_path, clusters_path, draws, seed, level, out, server
):
    """Bayesian seat intervals; rows with missing votes count as unreceived."""
    catalog, frame, returns = _load_inputs(catalog_path, frame_path, returns_path)
    payload = {
        "catalog": catalog.to_dict(),
        "frame": _frame_rows(frame),
        "returns": _return_rows(returns, received_only=True),
        "planned": _planned_rows(returns),
        "hierarchy": _hierarchy_payload(clusters_path),
        "draws": draws,
        "level": level,
        "seed": seed,
    }
    result = _post(server, "/estimate/bayes", payload)
    _write_estimate_csv(out, result)
    click.echo(
        f"wrote {out} (credibility level {result['level']}, draws={draws})"
    )


@main.command("estimate-mi")
@click.option("--returns", "returns_path", required=True, type=click.Path(exists=True))
@click.option("--frame", "frame_path", required=True, type=click.Path(exists=True))
@click.option("--catalog", "catalog_path", required=True, type=click.Path(exists=True))
@click.option("--m", default=15, show_default=True)
@click.option("--iters", default=5, show_default=True)
@click.option("--donors", default=5, show_default=True)
@click.option("--B", "b", default=300, show_default=True)
@click.option("--level", default=0.95, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path())
@server_option
def estimate_mi(
    returns_path, frame_path, catalog_path, m, iters, donors, b, level, seed, out, server
):
    """Multiple-imputation seat intervals from a partial sample."""
    catalog, frame, returns = _load_inputs(catalog_path, frame_path, returns_path)
    payload = {
        "catalog": catalog.to_dict(),
        "frame": _frame_rows(frame),
        "planned": _planned_rows(returns),
        "returns": _return_rows(returns, received_only=True),
        "m": m,
        "iterations": iters,
        "donors": donors,
        "B": b,
        "level": level,
        "seed": seed,
    }
    result = _post(server, "/estimate/mi", payload)
    _write_estimate_csv(out, result)
    for w in result.get("warnings", []):
        click.echo(f"warning: {w}", err=True)
    click.echo(f"wrote {out} (m={m}, B={b})")


@main.command("cluster")
@click.option("--historic", "historic_path", required=True, type=click.Path(exists=True))
@click.option("--frame", "frame_path", required=True, type=click.Path(exists=True))
@click.option("--catalog", "catalog_path", required=True, type=click.Path(exists=True))
@click.option("--k", "k_spec", default="1,10,20,50,100,200,300", show_default=True)
@click.option("--out", required=True, type=click.Path())
@server_option
def cluster(historic_path, frame_path, catalog_path, k_spec, out, server):
    """Nested stratum groupings from historic returns; CSV of group labels."""
    catalog, frame, historic = _load_inputs(catalog_path, frame_path, historic_path)
    payload = {
        "catalog": catalog.to_dict(),
        "frame": _frame_rows(frame),
        "historic": _return_rows(historic, received_only=True),
        "k_list": [int(k) for k in k_spec.split(",")],
    }
    result = _post(server, "/cluster", payload)
    h = result["hierarchy"]
    df = pd.DataFrame({"stratum_id": h["strata"]})
    for k in sorted(int(k) for k in h["partitions"]):
        df[f"k{k}"] = h["partitions"][str(k)] if str(k) in h["partitions"] else h["partitions"][k]
    df.to_csv(out, index=False)
    click.echo(f"wrote {out} ({len(df)} strata, k={sorted(df.columns[1:])})")


@main.command("design")
@click.option("--population", "population_path", required=True, type=click.Path(exists=True))
@click.option("--frame", "frame_path", required=True, type=click.Path(exists=True))
@click.option("--catalog", "catalog_path", required=True, type=click.Path(exists=True))
@click.option("--n", "n_spec", default="1500,3000,4500,6000,7500,9000", show_default=True)
@click.option("--reps", default=1000, show_default=True)
@click.option(
    "--estimator",
    type=click.Choice(["freq", "bayes"]),
    default="freq",
    show_default=True,
)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path())
@server_option
def design(
    population_path, frame_path, catalog_path, n_spec, reps, estimator, seed, out, server
):
    """Error bounds by sample size from a full synthetic population."""
    catalog, frame, population = _load_inputs(catalog_path, frame_path, population_path)
    payload = {
        "catalog": catalog.to_dict(),
        "frame": _frame_rows(frame),
        "population": _return_rows(population, received_only=True),
        "n_totals": [int(n) for n in n_spec.split(",")],
        "reps": reps,
        "estimator": estimator,
        "seed": seed,
    }
    result = _post(server, "/design/errors", payload)
    pd.DataFrame(
        {
            "n": result["n_totals"],
            "eps1": result["eps1"],
            "eps2": result["eps2"],
            "level": result["level"],
        }
    ).to_csv(out, index=False)
    click.echo(f"wrote {out} ({len(result['n_totals'])} sample sizes)")


def _parse_cadence(text: str) -> float:
    """'5m', '90s' or '1h' to minutes."""
    text = text.strip().lower()
    units = {"s": 1 / 60, "m": 1.0, "h": 60.0}
    if text and text[-1] in units:
        return float(text[:-1]) * units[text[-1]]
    return float(text)


@main.command("replay")
@click.option("--log", "log_path", required=True, type=click.Path(exists=True))
@click.option("--frame", "frame_path", required=True, type=click.Path(exists=True))
@click.option("--catalog", "catalog_path", required=True, type=click.Path(exists=True))
@click.option("--clusters", "clusters_path", default=None, type=click.Path(exists=True))
@click.option("--cadence", default="5m", show_default=True, help="e.g. 5m, 90s, 1h")
@click.option("--methods", default="bayes,mi", show_default=True)
@click.option("--planned", "planned_path", default=None, type=click.Path(exists=True),
              help="CSV of planned stations; default: every station in the log.")
@click.option("--draws", default=10_000, show_default=True)
@click.option("--B", "b", default=300, show_default=True)
@click.option("--m", default=15, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path())
@server_option
def replay(
    log_path, frame_path, catalog_path, clusters_path, cadence, methods,
    planned_path, draws, b, m, seed, out, server,
):
    """Re-run the estimation pipelines over an election-night arrival log."""
    catalog, frame, _ = _load_inputs(catalog_path, frame_path)
    option_ids = catalog.option_ids()
    df = pd.read_csv(log_path)
    log_rows = []
    for row in df.to_dict("records"):
        votes = {
            o: None if pd.isna(row[o]) else int(row[o]) for o in option_ids
        }
        log_rows.append(
            {
                "timestamp": str(row["timestamp"]),
                "stratum_id": int(row["stratum_id"]),
                "station_id": int(row["station_id"]),
                "votes": votes,
            }
        )
    if planned_path:
        pdf = pd.read_csv(planned_path)
        planned = [
            {"stratum_id": int(r["stratum_id"]), "station_id": int(r["station_id"])}
            for r in pdf.to_dict("records")
        ]
    else:
        planned = [
            {"stratum_id": r["stratum_id"], "station_id": r["station_id"]}
            for r in log_rows
        ]
    payload = {
        "catalog": catalog.to_dict(),
        "frame": _frame_rows(frame),
        "planned": planned,
        "log": log_rows,
        "hierarchy": _hierarchy_payload(clusters_path) if clusters_path else None,
        "methods": methods.split(","),
        "cadence_minutes": _parse_cadence(cadence),
        "draws": draws,
        "B": b,
        "m": m,
        "seed": seed,
    }
    result = _post(server, "/replay", payload)
    pd.DataFrame(result["series"]).to_csv(out, index=False)
    for r in result.get("rejected", []):
        click.echo(
            f"rejected ({r['stratum_id']},{r['station_id']}) at {r['timestamp']}: {r['reason']}",
            err=True,
        )
    click.echo(f"wrote {out} ({len(result['series'])} series rows)")


@main.command("simulate-arrival")
@click.option("--frame", "frame_path", required=True, type=click.Path(exists=True))
@click.option("--sample", "sample_path", required=True, type=click.Path(exists=True))
@click.option("--catalog", "catalog_path", required=True, type=click.Path(exists=True))
@click.option(
    "--bias",
    default="",
    help="Comma list of list=F,rural=F,tz=F,scale=F (log-delay multipliers).",
)
@click.option("--start", default=None, help="ISO start time of the count.")
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path())
@server_option
def simulate_arrival(frame_path, sample_path, catalog_path, bias, start, seed, out, server):
    """Generate a biased arrival log for a sample of returns."""
    catalog, frame, sample = _load_inputs(catalog_path, frame_path, sample_path)
    keys = {"list": "list_delay", "rural": "rural_delay", "tz": "tz_delay",
            "scale": "scale_minutes"}
    bias_kwargs = {}
    if bias:
        for part in bias.split(","):
            name, _, value = part.partition("=")
            if name.strip() not in keys:
                raise click.ClickException(f"unknown bias parameter {name!r}")
            bias_kwargs[keys[name.strip()]] = float(value)
    payload = {
        "catalog": catalog.to_dict(),
        "frame": _frame_rows(frame),
        "sample": _return_rows(sample, received_only=True),
        "start": start,
        "seed": seed,
        **bias_kwargs,
    }
    result = _post(server, "/simulate/arrival", payload)
    option_ids = catalog.option_ids()
    rows = []
    for e in result["log"]:
        row = {
            "timestamp": e["timestamp"],
            "stratum_id": e["stratum_id"],
            "station_id": e["station_id"],
        }
        for o in option_ids:
            row[o] = e["votes"].get(o)
        rows.append(row)
    pd.DataFrame(rows).to_csv(out, index=False)
    click.echo(f"wrote {out} ({len(rows)} arrival events)")


if __name__ == "__main__":
    main()
