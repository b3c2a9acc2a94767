"""Report files and baseline comparisons for finished runs."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

from .config import RunConfig
from .migration import CycleReport
from .simulation import PASS_FIELDS, SimulationResult, run_simulation

SCHEMA_VERSION = 1
PASSES_CSV = "passes.csv"
CYCLES_CSV = "cycles.csv"
SUMMARY_JSON = "summary.json"

# metrics compared across schemes, as memos / baseline
RATIO_METRICS = (
    "mean_latency_ns",
    "dynamic_energy_mJ",
    "standby_energy_J",
    "nvm_writes",
    "lifetime_years",
    "llc_miss_rate",
    "max_slowdown_proxy",
)


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _write_csv(path: Path, schema: str, fields, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema: {schema} v{SCHEMA_VERSION}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for row in rows:
            w.writerow([_fmt(row[f]) for f in fields])


def emit_report(result: SimulationResult, out_dir) -> list[Path]:
    """Write ``passes.csv``, ``cycles.csv`` and ``summary.json`` under ``out_dir``.

    Output depends only on the result, so emitting twice gives identical bytes.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    passes = out / PASSES_CSV
    _write_csv(passes, "hybridmem-passes", PASS_FIELDS, result.rows)
    cycles = out / CYCLES_CSV
    _write_csv(cycles, "hybridmem-cycles", CycleReport.CSV_FIELDS,
               [r.to_row() for r in result.cycles])
    summary = out / SUMMARY_JSON
    doc = {
        "schema": f"hybridmem-summary v{SCHEMA_VERSION}",
        "config": result.config.to_dict(),
        "metrics": result.metrics,
    }
    summary.write_text(json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n")
    return [passes, cycles, summary]


def _ratio(a, b):
    if a is None and b is None:
        return 1.0
    if a is None or b is None:
        return None
    if b == 0:
        return 1.0 if a == 0 else None
    r = a / b
    return r if math.isfinite(r) else None


def _workload_key(cfg: RunConfig) -> dict:
    d = cfg.to_dict()
    d.pop("scheme")
    return d


def compare_baselines(results: list[SimulationResult], reference: str = "memos") -> list[dict]:
    """One row per scheme with ``reference / scheme`` ratios of the headline metrics.

    Raises ValueError unless the runs differ in scheme only.
    """
    if not results:
        raise ValueError("nothing to compare")
    keys = [_workload_key(r.config) for r in results]
    if any(k != keys[0] for k in keys[1:]):
        raise ValueError("runs differ in more than the scheme; comparisons need one workload")
    by_scheme = {r.config.scheme: r for r in results}
    if reference not in by_scheme:
        raise ValueError(f"reference scheme {reference!r} is not among the runs")
    ref = by_scheme[reference].metrics
    rows = []
    for r in results:
        m = r.metrics
        row = {"scheme": r.config.scheme}
        for key in RATIO_METRICS:
            row[key] = m[key]
            row[f"{key}_ratio"] = _ratio(ref[key], m[key])
        rows.append(row)
    return rows


def comparison_fields() -> list[str]:
    fields = ["scheme"]
    for key in RATIO_METRICS:
        fields += [key, f"{key}_ratio"]
    return fields


def write_comparison(rows: list[dict], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    _write_csv(path, "hybridmem-compare", comparison_fields(),
               [{k: ("" if v is None else v) for k, v in row.items()} for row in rows])
    return path


def run_comparison(cfg: RunConfig, schemes, out_dir=None, reference: str = "memos", trace=None):
    """Run ``cfg`` under each scheme (plus the reference) on one shared trace."""
    schemes = list(dict.fromkeys(schemes))
    if reference not in schemes:
        schemes.insert(0, reference)
    if trace is None:
        trace = cfg.open_trace()
    results = [run_simulation(cfg.with_overrides(scheme=s), trace) for s in schemes]
    rows = compare_baselines(results, reference)
    if out_dir is not None:
        out = Path(out_dir)
        for res in results:
            emit_report(res, out / res.config.scheme)
        write_comparison(rows, out / "compare.csv")
    return rows, results
