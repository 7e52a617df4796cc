"""CSV/JSON writers and readers for fluxes, ranked designs, and studies.

CSV files are the data contract; plots are a convenience.  Flux CSVs carry 9
significant digits.  Every run directory gets a manifest listing the files
written.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .reactor import ExperimentDesign, FluxSeries


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def write_flux_csv(path, flux: FluxSeries) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time_s"] + [g for g in flux.gases])
        mat = flux.matrix()
        for i, t in enumerate(flux.times):
            writer.writerow([_fmt(t)] + [_fmt(v) for v in mat[i]])


def read_flux_csv(path) -> FluxSeries:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[0] != "time_s":
            raise ValueError(f"{path}: not a flux CSV (missing time_s header)")
        gases = header[1:]
        rows = [[float(v) for v in row] for row in reader if row]
    data = np.asarray(rows)
    return FluxSeries(data[:, 0], {g: data[:, i + 1] for i, g in enumerate(gases)})


def design_columns(design: ExperimentDesign) -> dict:
    """Flat CSV-friendly view of a design: per-gas nmol, the delay, and T."""
    out = {}
    delay = 0.0
    for p in design.pulses:
        out[f"{p.gas.lower()}_nmol"] = p.intensity
        if p.delay > 0:
            delay = p.delay
    out["delay_s"] = delay
    out["temp_K"] = design.temperature
    return out


def write_ranked_designs_csv(path, result, kind: str | None = None) -> None:
    """rank,<design columns>,criterion_value for a precision design search."""
    kind = kind or result.kind
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        first = design_columns(result.evaluations[0].design)
        writer.writerow(["rank", *first.keys(), "criterion_value"])
        for rank, ev in enumerate(result.evaluations, start=1):
            cols = design_columns(ev.design)
            writer.writerow(
                [rank, *(_fmt(v) for v in cols.values()), _fmt(ev.criteria[kind])]
            )


def write_divergence_csv(path, result) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        first = design_columns(result.evaluations[0].design)
        writer.writerow(["rank", *first.keys(), "divergence"])
        for rank, ev in enumerate(result.evaluations, start=1):
            cols = design_columns(ev.design)
            writer.writerow(
                [rank, *(_fmt(v) for v in cols.values()), _fmt(ev.divergence)]
            )


def write_study_csv(path, study) -> None:
    """Predicted/actual criteria plus per-parameter CI columns per design."""
    path = Path(path)
    rows = study.rows
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        first = design_columns(rows[0].design)
        ci_cols = [f"ci95_{n}" for n in study.parameter_names]
        writer.writerow(
            [*first.keys(), "predicted_A", "predicted_D", "predicted_E",
             "actual_A", "actual_D", "actual_E", *ci_cols, "error"]
        )
        for r in rows:
            cols = design_columns(r.design)
            pred = [r.predicted.get(k, math.nan) for k in ("A", "D", "E")]
            act = (
                [r.actual.get(k, math.nan) for k in ("A", "D", "E")]
                if r.actual is not None
                else [math.nan] * 3
            )
            cis = (
                [r.ci95.get(n, math.nan) for n in study.parameter_names]
                if r.ci95 is not None
                else [math.nan] * len(study.parameter_names)
            )
            writer.writerow(
                [*(_fmt(v) for v in cols.values())]
                + [_fmt(v) for v in pred + act + cis]
                + [r.error]
            )


def write_divergence_study_csv(path, rows, labels) -> None:
    """<design columns>,divergence,bic_<label>...,objective_<label>..."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        first = design_columns(rows[0].design)
        writer.writerow(
            [*first.keys(), "divergence",
             *(f"bic_{l}" for l in labels),
             *(f"objective_{l}" for l in labels), "error"]
        )
        for r in rows:
            cols = design_columns(r.design)
            bics = [
                _fmt(r.scores[l].bic) if l in r.scores else "nan" for l in labels
            ]
            objs = [
                _fmt(r.scores[l].objective) if l in r.scores else "nan"
                for l in labels
            ]
            writer.writerow(
                [*(_fmt(v) for v in cols.values()), _fmt(r.divergence)]
                + bics + objs + [r.error]
            )


def fit_report_dict(result) -> dict:
    """JSON-ready view of a fit: parameter table, J, convergence status."""
    return {
        "objective": result.objective,
        "converged": result.converged,
        "n_iterations": result.n_iterations,
        "message": result.message,
        "parameters": [
            {
                "name": row["name"],
                "value": row["value"],
                "std_error": row["std_error"],
                "ci95": row["ci95"],
            }
            for row in result.summary_rows()
        ],
    }


def write_json(path, payload) -> None:
    Path(path).write_text(
        json.dumps(payload, indent=2, sort_keys=False) + "\n", encoding="utf-8"
    )


def write_manifest(out_dir, files, extra=None) -> Path:
    """Record every artifact a command produced, relative to the run dir."""
    out_dir = Path(out_dir)
    payload = {"files": sorted(str(Path(f).relative_to(out_dir)) for f in files)}
    if extra:
        payload.update(extra)
    path = out_dir / "manifest.json"
    write_json(path, payload)
    return path
