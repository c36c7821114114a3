"""Command-line front end.

Exit codes: 0 success, 2 invalid configuration or input schema, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from dataclasses import fields
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml

from tdoaloc import __version__
from tdoaloc.crlb import crlb_grid
from tdoaloc.estimator import OUTLIER_THRESHOLD_M, estimate
from tdoaloc.geometry import geodetic_to_enu, sample_trajectory
from tdoaloc.los import classify
from tdoaloc.scenario import (
    ScenarioError,
    build_network,
    list_presets,
    load_raw,
    load_scenario,
    network_origin,
    scenario_hash,
)
from tdoaloc.sim import RunReport, Scenario, los_buckets, run, summarize
from tdoaloc.tdoa import TdoaMeasurement

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

INGEST_COLUMNS = ("timestamp_s", "truth_lat", "truth_lon", "truth_alt_m", "est_lat", "est_lon", "est_alt_m")


class InputError(ValueError):
    """Bad CLI input other than a scenario file (maps to exit code 2)."""


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return f"{v:.9g}" if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    return str(v)


def _banner(digest: str) -> str:
    return f"tdoaloc {__version__} scenario_sha256={digest}"


def _write_csv(path: Path, banner: str, header: Sequence[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# {banner}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def scenario_settings(scn: Scenario) -> dict:
    """Effective run settings recorded in report.json, after overrides."""
    return {
        "seed": scn.seed,
        "trials_per_epoch": scn.trials_per_epoch,
        "noise_scale": scn.noise_scale,
        "radio": {f.name: getattr(scn.cfg, f.name) for f in fields(scn.cfg)},
        "bias": scn.bias.to_dict(),
        "obstacle_count": len(scn.obstacles),
    }


def write_run_outputs(report: RunReport, out_dir: Path, digest: str, sensor_names: Sequence[str],
                      settings: dict | None = None) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    banner = _banner(digest)
    meta = {"tool": f"tdoaloc {__version__}", "scenario_sha256": digest}
    if settings is not None:
        meta["settings"] = settings
    (out_dir / "report.json").write_text(report.to_json(meta), encoding="utf-8")
    header = ["epoch", "trial", "time_s", "segment", "truth_x", "truth_y", "truth_z", "est_x", "est_y", "est_z",
              "error_m", "rmse_bound_m", "los_count", *[f"los_{n}" for n in sensor_names],
              "converged", "valid", "outlier", "failure_reason"]
    rows = []
    for r in report.records:
        est = r.estimate or (None, None, None)
        rows.append([r.epoch, r.trial, r.time_s, r.segment, *r.truth, *est,
                     r.error_m if r.valid else None, r.rmse_bound_m, r.los_count, *r.los,
                     r.converged, r.valid, r.valid and r.error_m > report.threshold_m, r.failure_reason])
    _write_csv(out_dir / "epochs.csv", banner, header, rows)
    _write_cdf(out_dir / "cdf.csv", banner, report.aggregates.error_cdf,
               sorted(r.rmse_bound_m for r in report.records if r.valid))


def _write_cdf(path: Path, banner: str, errors: Sequence[float], bounds: Sequence[float] | None) -> None:
    n = len(errors)
    header = ["probability", "error_m"] + (["rmse_bound_m"] if bounds is not None else [])
    rows = []
    for i, e in enumerate(errors):
        row = [(i + 1) / n, e]
        if bounds is not None:
            row.append(bounds[i])
        rows.append(row)
    _write_csv(path, banner, header, rows)


def cmd_simulate(args) -> int:
    scn, raw = load_scenario(args.scenario, args.override, args.seed)
    report = run(scn)
    write_run_outputs(report, Path(args.out), scenario_hash(raw), scn.net.names, scenario_settings(scn))
    a = report.aggregates
    print(f"{scn.name}: {a.valid_summary}, mean error {_fmt(a.mean_error_m)} m, "
          f"outliers removed {_fmt(a.mean_error_outliers_removed_m)} m")
    return EXIT_OK


def _parse_region(text: str):
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise InputError(f"region {text!r} is not six comma-separated numbers") from None
    if len(vals) != 6:
        raise InputError("region needs xmin,ymin,zmin,xmax,ymax,zmax")
    return vals[:3], vals[3:]


def cmd_crlb_map(args) -> int:
    scn, raw = load_scenario(args.scenario, args.override, args.seed)
    region = _parse_region(args.region)
    if not args.resolution > 0:
        raise InputError("resolution must be positive")
    grid = crlb_grid(scn.net, scn.cfg, region, args.resolution)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(grid.to_csv(_banner(scenario_hash(raw))), encoding="utf-8")
    print(f"{len(grid.points)} grid points, {int(grid.degenerate.sum())} degenerate")
    return EXIT_OK


def cmd_los_classify(args) -> int:
    scn, raw = load_scenario(args.scenario, args.override, args.seed)
    header = ["time_s", "segment", "x", "y", "z", *[f"los_{n}" for n in scn.net.names], "los_count"]
    rows = []
    for s in sample_trajectory(scn.trajectory, scn.speed_mps):
        los = classify(scn.net, s.position, scn.obstacles)
        rows.append([s.time, s.segment, *s.position, *los, sum(los)])
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_csv(out, _banner(scenario_hash(raw)), header, rows)
    return EXIT_OK


def cmd_estimate(args) -> int:
    """Estimate positions for measurements given as a JSON list.

    Each entry needs ``rdiff_m`` and ``covariance`` (meters, m^2), and may
    carry ``epoch``, ``reference_index`` and ``los``.
    """
    scn, raw = load_scenario(args.scenario, args.override, args.seed)
    try:
        entries = json.loads(Path(args.measurements).read_text(encoding="utf-8"))
        if isinstance(entries, dict):
            entries = [entries]
        meas = [
            TdoaMeasurement(
                reference_index=int(e.get("reference_index", scn.net.reference_index)),
                rdiff_m=e["rdiff_m"],
                covariance=e["covariance"],
                los=e.get("los", [True] * scn.net.size),
                epoch=float(e.get("epoch", k)),
                sensor_count=scn.net.size,
            )
            for k, e in enumerate(entries)
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{args.measurements}: invalid measurement entry ({exc})") from None
    rows = []
    for m in meas:
        est = estimate(scn.net, m, init_altitude_m=scn.init_altitude_m)
        rows.append([m.epoch, *est.position, est.converged, est.iterations, est.residual_norm, est.failure_reason])
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_csv(out, _banner(scenario_hash(raw)),
               ["epoch", "x", "y", "z", "converged", "iterations", "residual_norm_m", "failure_reason"], rows)
    return EXIT_OK


def _parse_mapping(items: Sequence[str]) -> dict[str, str]:
    out = {}
    for it in items:
        if "=" not in it:
            raise InputError(f"column mapping {it!r} is not ours=theirs")
        k, v = it.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _cell(v: str | None) -> float:
    if v is None or v.strip() == "" or v.strip().lower() in ("nan", "na", "null", "none"):
        return math.nan
    return float(v)


def ingest_rows(rows: list[dict], origin, sensor_count: int, threshold_m: float = OUTLIER_THRESHOLD_M) -> dict:
    """Errors and aggregates for dataset rows already keyed by our column names."""
    truth = geodetic_to_enu([_cell(r["truth_lat"]) for r in rows], [_cell(r["truth_lon"]) for r in rows],
                            [_cell(r["truth_alt_m"]) for r in rows], origin)
    est = geodetic_to_enu([_cell(r["est_lat"]) for r in rows], [_cell(r["est_lon"]) for r in rows],
                          [_cell(r["est_alt_m"]) for r in rows], origin)
    err = np.linalg.norm(est - truth, axis=1) if rows else np.zeros(0)
    los_cols = [f"s{i + 1}" for i in range(sensor_count)]
    has_los = bool(rows) and all(c in rows[0] for c in los_cols)
    los_counts = None
    if has_los:
        los_counts = [sum(int(_cell(r[c]) > 0) for c in los_cols) for r in rows]
    return {"truth": truth, "estimate": est, "error_m": err, "los_count": los_counts}


def cmd_ingest(args) -> int:
    mapping = _parse_mapping(args.map)
    net_text = Path(args.net_config).read_text(encoding="utf-8")
    net_raw, _ = load_raw(net_text, args.net_config)
    if args.origin:
        try:
            lat, lon, alt = (float(v) for v in args.origin.split(","))
        except ValueError:
            raise InputError("--origin needs lat,lon,alt_m") from None
        net_raw["origin"] = {"lat": lat, "lon": lon, "alt_m": alt}
    try:
        net = build_network(net_raw)
    except ScenarioError as exc:
        exc.source = args.net_config
        raise
    origin = network_origin(net_raw)
    if origin is None:
        raise InputError(f"{args.net_config}: ingest needs geodetic sensors or an explicit origin")

    with open(args.dataset, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(line for line in fh if not line.startswith("#"))
        header = reader.fieldnames or []
        want = list(INGEST_COLUMNS) + [f"s{i + 1}" for i in range(net.size)]
        source_of = {c: mapping.get(c, c) for c in want}
        missing = [c for c in INGEST_COLUMNS if source_of[c] not in header]
        if missing:
            raise InputError(f"{args.dataset}: missing required column {missing[0]!r}"
                             + (f" (mapped from {source_of[missing[0]]!r})" if missing[0] in mapping else ""))
        rows = [{c: row.get(source_of[c]) for c in want if source_of[c] in header} for row in reader]
    try:
        data = ingest_rows(rows, origin, net.size, args.threshold)
    except ValueError as exc:
        raise InputError(f"{args.dataset}: {exc}") from None

    digest = hashlib.sha256(Path(args.dataset).read_bytes() + net_text.encode("utf-8")).hexdigest()
    banner = _banner(digest)
    agg = summarize(data["error_m"], args.threshold)
    report = {
        "meta": {"tool": f"tdoaloc {__version__}", "scenario_sha256": digest},
        "name": Path(args.dataset).stem,
        "aggregates": agg.to_dict(),
    }
    if data["los_count"] is not None:
        report["by_los_count"] = {str(k): v.to_dict() for k, v in
                                  los_buckets(data["los_count"], data["error_m"], args.threshold).items()}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report, indent=2, allow_nan=False) + "\n", encoding="utf-8")
    err_rows = []
    for i, r in enumerate(rows):
        e = float(data["error_m"][i])
        valid = math.isfinite(e)
        err_rows.append([_cell(r["timestamp_s"]), *data["truth"][i].tolist(),
                         *(data["estimate"][i].tolist() if valid else (None, None, None)),
                         e if valid else None,
                         None if data["los_count"] is None else data["los_count"][i],
                         valid, valid and e > args.threshold])
    _write_csv(out / "errors.csv", banner,
               ["timestamp_s", "truth_x", "truth_y", "truth_z", "est_x", "est_y", "est_z", "error_m", "los_count",
                "valid", "outlier"], err_rows)
    _write_cdf(out / "cdf.csv", banner, agg.error_cdf, None)
    print(f"{report['name']}: {agg.valid_summary}, mean error {_fmt(agg.mean_error_m)} m, "
          f"outliers removed {_fmt(agg.mean_error_outliers_removed_m)} m")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tdoaloc", description="TDOA UAV localization: CRLB, estimation, simulation")
    p.add_argument("--version", action="version", version=f"tdoaloc {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def scenario_args(sp):
        sp.add_argument("scenario", help=f"scenario YAML path or preset name ({', '.join(list_presets())})")
        sp.add_argument("--seed", type=int, default=None, help="replace the scenario seed")
        sp.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="override a scenario field, e.g. bandwidth_hz=2.5e6 (repeatable)")

    sp = sub.add_parser("simulate", help="Monte Carlo run; writes report.json, epochs.csv, cdf.csv")
    scenario_args(sp)
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("crlb-map", help="RMSE bound on a grid, as x,y,z,rmse_bound_m CSV")
    scenario_args(sp)
    sp.add_argument("--region", required=True, help="xmin,ymin,zmin,xmax,ymax,zmax in meters")
    sp.add_argument("--resolution", type=float, required=True, help="grid spacing in meters")
    sp.add_argument("--out", required=True, help="output CSV path")
    sp.set_defaults(func=cmd_crlb_map)

    sp = sub.add_parser("estimate", help="ML position fixes for measurements in a JSON file")
    scenario_args(sp)
    sp.add_argument("--measurements", required=True, help="JSON list of {rdiff_m, covariance, ...}")
    sp.add_argument("--out", required=True, help="output CSV path")
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("los-classify", help="per-sample LOS indicators along the scenario trajectory")
    scenario_args(sp)
    sp.add_argument("--out", required=True, help="output CSV path")
    sp.set_defaults(func=cmd_los_classify)

    sp = sub.add_parser("ingest", help="error statistics for a recorded truth/estimate dataset")
    sp.add_argument("dataset", help="CSV with timestamp_s, truth_lat, truth_lon, truth_alt_m, est_lat, est_lon, est_alt_m")
    sp.add_argument("net_config", help="YAML with a sensors section (geodetic) and optional origin")
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--map", action="append", default=[], metavar="OURS=THEIRS",
                    help="read our column OURS from dataset column THEIRS (repeatable)")
    sp.add_argument("--origin", default=None, help="ENU origin lat,lon,alt_m (default: sensor centroid)")
    sp.add_argument("--threshold", type=float, default=OUTLIER_THRESHOLD_M, help="outlier threshold in meters")
    sp.set_defaults(func=cmd_ingest)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, InputError, FileNotFoundError, yaml.YAMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime error
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
