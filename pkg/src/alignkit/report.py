"""Run summaries and cross-run correlation reports.

A run directory is whatever the CLI commands left behind (training trace,
spectra, MDS solutions, metric tables, registration summaries); the report
gathers what exists.  Across three or more runs that carry both metric
means and a registration success rate, the Pearson correlation between
each metric's mean and the RSR is tabulated.
"""

from __future__ import annotations

import json
from pathlib import Path

from .errors import DataError
from .fileio import fmt, read_csv, atomic_write_text, write_csv
from .metrics import pcc

METRIC_COLUMNS = ("mse", "correlation", "ssim", "alpha_amd")
MIN_RUNS_FOR_PCC = 3


def median_and_mean(values):
    vals = sorted(float(v) for v in values)
    if not vals:
        raise ValueError("no values to aggregate")
    n = len(vals)
    mid = n // 2
    median = vals[mid] if n % 2 else 0.5 * (vals[mid - 1] + vals[mid])
    return median, sum(vals) / n


def pcc_table(metric_series: dict[str, list], rsr_series: list) -> dict[str, float]:
    """PCC of each metric's per-run mean against the per-run RSR."""
    if len(rsr_series) < 2:
        raise ValueError("need at least 2 runs for a correlation")
    return {name: pcc(series, rsr_series) for name, series in metric_series.items()}


def _metadata_dict(metadata: list[str]) -> dict[str, str]:
    out = {}
    for entry in metadata:
        if "=" in entry:
            key, _, value = entry.partition("=")
            out[key.strip()] = value.strip()
    return out


def summarize_run(run_dir) -> dict:
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise DataError(f"{run_dir}: not a directory")
    summary: dict = {"name": run_dir.name}

    trace = run_dir / "trace.csv"
    if trace.exists():
        header, rows, _ = read_csv(trace)
        loss_col = header.index("loss")
        if rows:
            first = float(rows[0][loss_col])
            last = float(rows[-1][loss_col])
            summary["loss_initial"] = first
            summary["loss_final"] = last
            if first != 0:
                summary["loss_reduction"] = (first - last) / first

    spectra = {}
    for path in sorted(run_dir.glob("spectrum*.csv")):
        header, rows, metadata = read_csv(path)
        meta = _metadata_dict(metadata)
        entry = {}
        if "collapsed_dims" in meta:
            entry["collapsed_dims"] = int(meta["collapsed_dims"])
        if "effective_rank" in meta:
            entry["effective_rank"] = float(meta["effective_rank"])
        if rows:
            entry["top_value"] = float(rows[0][header.index("value")])
        spectra[path.name] = entry
    if spectra:
        summary["spectra"] = spectra

    mds = {}
    for path in sorted(run_dir.glob("mds*.csv")):
        _, _, metadata = read_csv(path)
        meta = _metadata_dict(metadata)
        if "final_stress" in meta:
            mds[path.name] = {"final_stress": float(meta["final_stress"])}
    if mds:
        summary["mds"] = mds

    metrics_json = run_dir / "metrics.json"
    if metrics_json.exists():
        data = json.loads(metrics_json.read_text(encoding="utf-8"))
        for key in ("medians", "means", "frechet_distance", "rsr"):
            if key in data and data[key] is not None:
                summary[key] = data[key]

    reg_summary = run_dir / "summary.json"
    if reg_summary.exists():
        data = json.loads(reg_summary.read_text(encoding="utf-8"))
        summary["registration"] = data
        if "rsr" in data:
            summary.setdefault("rsr", data["rsr"])

    return summary


def _flatten(prefix: str, value, rows: list) -> None:
    if isinstance(value, dict):
        for key in sorted(value):
            _flatten(f"{prefix}.{key}" if prefix else str(key), value[key], rows)
    else:
        rows.append((prefix, value))


def write_report(out_dir, run_dirs) -> dict:
    """Summarize each run, correlate metrics with RSR when possible, and
    write report.json / report.csv (+ pcc.csv)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    runs = [summarize_run(d) for d in run_dirs]

    eligible = [r for r in runs if "means" in r and "rsr" in r]
    table = None
    if len(eligible) >= MIN_RUNS_FOR_PCC:
        metric_series: dict[str, list] = {}
        for name in METRIC_COLUMNS:
            if all(name in r["means"] for r in eligible):
                metric_series[name] = [float(r["means"][name]) for r in eligible]
        rsr_series = [float(r["rsr"]) for r in eligible]
        if metric_series:
            table = pcc_table(metric_series, rsr_series)

    report = {"runs": runs, "pcc": table}
    atomic_write_text(
        out_dir / "report.json", json.dumps(report, indent=2, sort_keys=True) + "\n"
    )

    rows = []
    for run in runs:
        flat: list = []
        _flatten("", {k: v for k, v in run.items() if k != "name"}, flat)
        rows.extend((run["name"], key, fmt(value)) for key, value in flat)
    if table:
        rows.extend(("(all runs)", f"pcc.{name}", fmt(value)) for name, value in table.items())
    write_csv(out_dir / "report.csv", ("run", "key", "value"), rows)
    if table:
        write_csv(
            out_dir / "pcc.csv",
            ("metric", "pcc_vs_rsr"),
            [(name, fmt(value)) for name, value in sorted(table.items())],
        )
    return report
