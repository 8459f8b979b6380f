"""CSV and config-file interfaces.

Floats are written with ``repr`` (shortest round-trip form), so a run with
a fixed seed reproduces every CSV byte for byte.  Matrices and vectors are
persisted as headered CSV.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .model import CovarianceModel, build_ar_covariance, factor_covariance

__all__ = [
    "covariance_from_spec",
    "fmt",
    "read_matrix_csv",
    "write_confidence_report_csv",
    "write_fit_csv",
    "write_fixed_point_trace_csv",
    "write_json",
    "write_loo_results_csv",
    "write_matrix_csv",
    "write_rows_csv",
    "write_width_samples_csv",
]


def fmt(value) -> str:
    """Deterministic scalar formatting for CSV cells."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_rows_csv(path, columns, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([fmt(v) for v in row])


def write_json(path, payload) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_matrix_csv(path, matrix, prefix: str = "c") -> None:
    matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    columns = [f"{prefix}{j}" for j in range(matrix.shape[1])]
    write_rows_csv(path, columns, matrix)


def read_matrix_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader if row]
    if not rows:
        raise ConfigError(f"{path}: no data rows")
    mat = np.asarray(rows, dtype=np.float64)
    if mat.shape[1] != len(header):
        raise ConfigError(f"{path}: ragged rows")
    return mat


def covariance_from_spec(spec: dict, base_dir=None) -> CovarianceModel:
    """Build a covariance model from a config mapping.

    Supported forms: {"kind": "ar", "rho": r, "p": p} and
    {"kind": "dense", "path": csv_path} (path relative to ``base_dir``).
    """
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError("covariance spec must be a mapping with a 'kind' key")
    kind = spec["kind"]
    if kind == "ar":
        missing = {"rho", "p"} - set(spec)
        if missing:
            raise ConfigError(f"ar covariance spec missing {sorted(missing)}")
        extra = set(spec) - {"kind", "rho", "p"}
        if extra:
            raise ConfigError(f"ar covariance spec has unknown keys {sorted(extra)}")
        return build_ar_covariance(float(spec["rho"]), int(spec["p"]))
    if kind == "dense":
        if "path" not in spec:
            raise ConfigError("dense covariance spec needs a 'path'")
        path = Path(spec["path"])
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        return factor_covariance(read_matrix_csv(path))
    raise ConfigError(f"unknown covariance kind {kind!r}")


def write_fit_csv(fit, path) -> None:
    """Serialize a solver fit as (coordinate, theta_hat, subgrad) rows."""
    rows = zip(range(fit.theta_hat.size), fit.theta_hat, fit.subgrad)
    write_rows_csv(path, ("coordinate", "theta_hat", "subgrad"), rows)


def write_confidence_report_csv(report, estimate, path) -> None:
    """Rows (coordinate, estimate, lo, hi, covered, p_value); the p_value
    column is empty for interval-only reports."""
    p = report.lo.size
    covered = report.covered if report.covered is not None else [""] * p
    rows = [
        (j, estimate[j], report.lo[j], report.hi[j],
         covered[j] if report.covered is not None else "", "")
        for j in range(p)
    ]
    write_rows_csv(path, ("coordinate", "estimate", "lo", "hi", "covered", "p_value"), rows)


def write_loo_results_csv(results, path, theta_star=None) -> None:
    rows = []
    for r in results:
        covered = ""
        if theta_star is not None:
            covered = bool(r.ci[0] <= theta_star[r.j] <= r.ci[1])
        rows.append((r.j, r.xi, r.ci[0], r.ci[1], covered, r.p_value))
    write_rows_csv(path, ("coordinate", "estimate", "lo", "hi", "covered", "p_value"), rows)


def write_fixed_point_trace_csv(solution, path) -> None:
    rows = [
        (t.iteration, t.tau, t.zeta, t.risk, t.df, t.se_risk, t.se_df)
        for t in solution.trace
    ]
    write_rows_csv(path, ("iter", "tau", "zeta", "risk", "df", "se_risk", "se_df"), rows)


def write_width_samples_csv(estimate, p, path) -> None:
    rows = []
    for i in range(estimate.n_samples):
        v = float(estimate.values[i])
        rows.append((i, v, p * v * v,
                     bool(estimate.ok[i]), int(estimate.iterations[i])))
    write_rows_csv(
        path, ("sample_idx", "value", "p_times_value_sq", "feasible", "iterations"), rows
    )
