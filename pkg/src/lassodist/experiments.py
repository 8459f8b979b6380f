"""Batch simulation harness.

Each ``run_*`` function is a pure function of (config, master seed): the
replica stream is split deterministically, replicas may execute on a
thread pool (the solver kernels release the GIL), and results are merged
in replica-index order, so re-running a configuration reproduces every CSV
byte for byte regardless of thread count.  Flagged replicas (solver or
degeneracy failures) are excluded from aggregates and counted.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import kstest, norm

from . import io
from .errors import ConfigError, DegenerateDofError, NonConvergenceError
from .fixed_point import FixedPointConfig, solve_fixed_point
from .gaussian_width import ConeSpec, WidthSolverConfig, estimate_width
from .inference import debias, debiased_cis, loo_statistic, no_dof_ci, tau_hat
from .model import (
    Normalization,
    ProblemInstance,
    SeedSpec,
    derive_replica_seed,
    effective_covariance,
    generate_data,
    sample_design,
)
from .solvers import SolverConfig, solve_lasso

__all__ = [
    "ExperimentConfig",
    "ResultTable",
    "SCHEMA_VERSION",
    "build_signal",
    "run_coverage_experiment",
    "run_fixed_point_validation",
    "run_qq_experiment",
    "run_width_threshold_experiment",
]

SCHEMA_VERSION = 1

_TIDY_COLUMNS = ("experiment", "replica", "key", "metric", "value")


@dataclass(frozen=True)
class ResultTable:
    """Tidy result rows (experiment, replica, key, metric, value)."""

    columns: tuple
    rows: tuple
    schema_version: int = SCHEMA_VERSION

    def to_csv(self, path) -> None:
        io.write_rows_csv(path, self.columns + ("schema_version",),
                          [row + (self.schema_version,) for row in self.rows])


_CONFIG_FIELDS = {
    "experiment", "p", "n", "s", "mu", "sigma", "lam", "normalization",
    "covariance", "n_sim", "seed", "q", "coordinate", "coordinate_value",
    "n_grid", "mu_grid", "width_samples", "fixed_point", "solver",
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Declarative description of one batch run.

    Together with the master seed this fully determines every output.
    ``coordinate`` (0-based) and ``coordinate_value`` pin one entry of the
    signal for coverage studies; ``n_grid``/``mu_grid`` define the width
    threshold sweep; ``fixed_point`` and ``solver`` override engine
    defaults.
    """

    p: int
    s: int
    mu: float
    sigma: float
    lam: float
    n: int | None = None
    normalization: str = "by_p"
    covariance: dict = field(default_factory=lambda: {"kind": "ar", "rho": 0.5})
    n_sim: int = 100
    seed: int = 0
    q: float = 0.05
    coordinate: int | None = None
    coordinate_value: float | None = None
    n_grid: tuple = ()
    mu_grid: tuple = ()
    width_samples: int = 200
    fixed_point: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw: dict, base_dir=None) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(raw) - _CONFIG_FIELDS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        raw = dict(raw)
        raw.pop("experiment", None)  # informational; the subcommand decides
        for key in ("n_grid", "mu_grid"):
            if key in raw:
                raw[key] = tuple(raw[key])
        try:
            cfg = cls(**raw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        cfg.validate(base_dir)
        return cfg

    def validate(self, base_dir=None) -> None:
        if self.p < 1 or self.s < 0 or self.s > self.p:
            raise ConfigError(f"need 0 <= s <= p with p >= 1, got p={self.p}, s={self.s}")
        if self.n is not None and self.n < 1:
            raise ConfigError(f"n must be >= 1, got {self.n}")
        if self.sigma < 0 or self.lam <= 0:
            raise ConfigError("sigma must be >= 0 and lam > 0")
        if not 0 < self.q < 1:
            raise ConfigError(f"q must be in (0, 1), got {self.q}")
        if self.n_sim < 1:
            raise ConfigError("n_sim must be >= 1")
        try:
            Normalization(self.normalization)
        except ValueError as exc:
            raise ConfigError(f"unknown normalization {self.normalization!r}") from exc
        if self.coordinate is not None and not 0 <= self.coordinate < self.p:
            raise ConfigError("coordinate out of range")
        model = io.covariance_from_spec(self.covariance, base_dir)
        if model.p != self.p:
            raise ConfigError(f"covariance dimension {model.p} != p = {self.p}")

    def covariance_model(self, base_dir=None):
        return io.covariance_from_spec(self.covariance, base_dir)

    def solver_config(self) -> SolverConfig:
        return SolverConfig(**self.solver) if self.solver else SolverConfig()

    def fixed_point_config(self) -> FixedPointConfig:
        keys = dict(self.fixed_point)
        keys.pop("alpha", None)
        keys.pop("method", None)
        if "solver" in keys:
            keys["solver"] = SolverConfig(**keys["solver"])
        return FixedPointConfig(**keys) if keys else FixedPointConfig()

    def seed_spec(self) -> SeedSpec:
        return SeedSpec(self.seed)


def build_signal(p, s, mu, rng, force_index=None, force_value=None) -> np.ndarray:
    """Signal with s active entries of magnitude mu, half positive, placed
    uniformly at random by seeded shuffle.

    ``force_index``/``force_value`` pin one coordinate: a nonzero value
    puts it in the support with that value (counted toward its sign's
    half), 0 keeps it out of the randomly placed support.
    """
    theta = np.zeros(p)
    n_pos = s // 2
    n_neg = s - n_pos
    candidates = np.arange(p)
    if force_index is not None:
        candidates = np.delete(candidates, force_index)
        if force_value:
            theta[force_index] = force_value
            if force_value > 0:
                n_pos -= 1
            else:
                n_neg -= 1
            if n_pos < 0 or n_neg < 0:
                raise ConfigError("forced coordinate sign exceeds its half of the support")
    order = rng.permutation(candidates)
    support = order[: n_pos + n_neg]
    signs = rng.permutation(np.concatenate([np.ones(n_pos), -np.ones(n_neg)]))
    theta[support] = mu * signs
    return theta


def _signal_for(cfg: ExperimentConfig, seed: SeedSpec) -> np.ndarray:
    return build_signal(cfg.p, cfg.s, cfg.mu, seed.rng("mc"),
                        force_index=cfg.coordinate,
                        force_value=cfg.coordinate_value)


def _map_replicas(n_sim, threads, fn):
    if threads <= 1:
        return [fn(i) for i in range(n_sim)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n_sim)))


def _summary(name, cfg, started, extra) -> dict:
    payload = {
        "schema_version": SCHEMA_VERSION,
        "experiment": name,
        "seed": cfg.seed,
        "n_sim": cfg.n_sim,
        "elapsed_s": round(time.time() - started, 3),
    }
    payload.update(extra)
    return payload


def _group_label(value, mu):
    if value == 0:
        return "null"
    return "pos" if value > 0 else "neg"


def run_qq_experiment(cfg: ExperimentConfig, out_dir=None, threads: int = 1) -> ResultTable:
    """Standardized debiased coordinates, with and without the
    degrees-of-freedom adjustment, grouped by the true coordinate value.

    Per replica and coordinate j the adjusted value is
    cond_var(j)^{1/2} (1 - active/n) (theta_d_j - theta_j) / (||resid||/sqrt(n))
    and the unadjusted analogue drops the active-set factor and uses the
    unadjusted estimate.  Replicas with a degenerate residual or an
    uncertified solve are flagged and excluded.
    """
    if cfg.n is None:
        raise ConfigError("qq experiment needs n")
    started = time.time()
    seed = cfg.seed_spec()
    model = cfg.covariance_model()
    theta_star = _signal_for(cfg, seed)
    instance = ProblemInstance(theta_star, cfg.sigma, cfg.lam, cfg.n,
                               Normalization(cfg.normalization))
    eff = effective_covariance(model, instance)
    cond = np.array([eff.cond_var(j) for j in range(cfg.p)])
    solver_cfg = cfg.solver_config()

    def one(i):
        rs = derive_replica_seed(seed, i)
        X = sample_design(model, instance, rs)
        data = generate_data(instance, X, rs)
        fit = solve_lasso(data.X, data.y, cfg.lam, solver_cfg)
        resid = data.y - data.X @ fit.theta_hat
        scale = np.linalg.norm(resid) / np.sqrt(cfg.n)
        if not fit.converged or fit.active_count >= cfg.n or scale < 1e-10:
            return None
        dof = 1.0 - fit.active_count / cfg.n
        adj = debias(data.X, data.y, fit, eff, adjusted=True).theta_d
        unadj = debias(data.X, data.y, fit, eff, adjusted=False).theta_d
        std_adj = np.sqrt(cond) * dof * (adj - theta_star) / scale
        std_unadj = np.sqrt(cond) * (unadj - theta_star) / scale
        return std_adj, std_unadj

    results = _map_replicas(cfg.n_sim, threads, one)
    rows = []
    pooled = {}
    flagged = 0
    groups = [_group_label(v, cfg.mu) for v in theta_star]
    for i, res in enumerate(results):
        if res is None:
            flagged += 1
            rows.append(("qq", i, "replica", "flagged", 1.0))
            continue
        std_adj, std_unadj = res
        for j in range(cfg.p):
            key = f"j={j},group={groups[j]}"
            rows.append(("qq", i, key, "std_adjusted", std_adj[j]))
            rows.append(("qq", i, key, "std_unadjusted", std_unadj[j]))
            pooled.setdefault(("std_adjusted", groups[j]), []).append(std_adj[j])
            pooled.setdefault(("std_unadjusted", groups[j]), []).append(std_unadj[j])
    table = ResultTable(_TIDY_COLUMNS, tuple(rows))

    group_stats = {}
    qq_rows = []
    for (metric, group), vals in sorted(pooled.items()):
        arr = np.sort(np.asarray(vals))
        n_vals = arr.size
        theo = norm.ppf((np.arange(1, n_vals + 1) - 0.5) / n_vals)
        qq_rows.extend(
            (metric, group, k, theo[k], arr[k]) for k in range(n_vals)
        )
        group_stats[f"{metric}/{group}"] = {
            "mean": float(arr.mean()),
            "sd": float(arr.std(ddof=1)),
            "n": int(n_vals),
        }
    if out_dir is not None:
        out = Path(out_dir)
        table.to_csv(out / "qq_values.csv")
        io.write_rows_csv(out / "qq_quantiles.csv",
                          ("metric", "group", "rank", "theoretical", "empirical"),
                          qq_rows)
        io.write_json(out / "summary.json",
                      _summary("qq", cfg, started,
                               {"flagged": flagged, "groups": group_stats}))
    return table


def run_coverage_experiment(cfg: ExperimentConfig, out_dir=None, threads: int = 1) -> ResultTable:
    """Coverage of the three interval constructions for one coordinate:
    the adjusted debiased interval, the unadjusted one, and the
    leave-one-out interval."""
    if cfg.n is None or cfg.coordinate is None or cfg.coordinate_value is None:
        raise ConfigError("coverage experiment needs n, coordinate, coordinate_value")
    started = time.time()
    seed = cfg.seed_spec()
    model = cfg.covariance_model()
    theta_star = _signal_for(cfg, seed)
    j = cfg.coordinate
    truth = theta_star[j]
    instance = ProblemInstance(theta_star, cfg.sigma, cfg.lam, cfg.n,
                               Normalization(cfg.normalization))
    eff = effective_covariance(model, instance)
    solver_cfg = cfg.solver_config()

    def one(i):
        rs = derive_replica_seed(seed, i)
        X = sample_design(model, instance, rs)
        data = generate_data(instance, X, rs)
        fit = solve_lasso(data.X, data.y, cfg.lam, solver_cfg)
        if not fit.converged:
            return None
        try:
            tau = tau_hat(data.y, data.X, fit)
            adj = debias(data.X, data.y, fit, eff, adjusted=True)
            unadj = debias(data.X, data.y, fit, eff, adjusted=False)
            ci_d = debiased_cis(adj, tau, eff, cfg.q, theta_star)
            resid_norm = float(np.linalg.norm(data.y - data.X @ fit.theta_hat))
            ci_nd = no_dof_ci(unadj, resid_norm, cfg.n, eff, cfg.q, theta_star)
            loo = loo_statistic(data.X, data.y, eff, j, cfg.lam, solver_cfg, cfg.q)
        except DegenerateDofError:
            return None
        return {
            "ci_d": (ci_d.lo[j], ci_d.hi[j]),
            "ci_nodof": (ci_nd.lo[j], ci_nd.hi[j]),
            "ci_loo": loo.ci,
            "fcp_d": ci_d.fcp,
        }

    results = _map_replicas(cfg.n_sim, threads, one)
    rows = []
    flagged = 0
    covered = {"ci_d": [], "ci_nodof": [], "ci_loo": []}
    widths = {"ci_d": [], "ci_nodof": [], "ci_loo": []}
    fcps = []
    for i, res in enumerate(results):
        if res is None:
            flagged += 1
            rows.append(("coverage", i, f"j={j}", "flagged", 1.0))
            continue
        for method in ("ci_d", "ci_nodof", "ci_loo"):
            lo, hi = res[method]
            hit = float(lo <= truth <= hi)
            covered[method].append(hit)
            widths[method].append(hi - lo)
            rows.append(("coverage", i, f"j={j}", f"{method}_lo", lo))
            rows.append(("coverage", i, f"j={j}", f"{method}_hi", hi))
            rows.append(("coverage", i, f"j={j}", f"{method}_covered", hit))
        fcps.append(res["fcp_d"])
        rows.append(("coverage", i, "all", "fcp_adjusted", res["fcp_d"]))
    table = ResultTable(_TIDY_COLUMNS, tuple(rows))
    stats = {
        method: {
            "coverage": float(np.mean(covered[method])) if covered[method] else float("nan"),
            "mean_width": float(np.mean(widths[method])) if widths[method] else float("nan"),
        }
        for method in covered
    }
    if out_dir is not None:
        out = Path(out_dir)
        table.to_csv(out / "coverage_values.csv")
        io.write_rows_csv(
            out / "coverage_summary.csv",
            ("method", "coverage", "mean_width", "n_effective"),
            [(m, stats[m]["coverage"], stats[m]["mean_width"], len(covered[m]))
             for m in sorted(stats)],
        )
        io.write_json(out / "summary.json",
                      _summary("coverage", cfg, started, {
                          "flagged": flagged,
                          "coordinate": j,
                          "coordinate_value": truth,
                          "methods": stats,
                          "mean_fcp_adjusted": float(np.mean(fcps)) if fcps else None,
                      }))
    return table


def run_width_threshold_experiment(cfg: ExperimentConfig, out_dir=None,
                                   threads: int = 1) -> ResultTable:
    """Width histogram for the signal's signed support plus a (n, mu) sweep
    of Lasso risk and sparsity across the n/p threshold.

    The support (and therefore the cone) is fixed for the whole run; cells
    rescale the active magnitudes.  An empty grid reduces the run to the
    width estimation alone.
    """
    started = time.time()
    seed = cfg.seed_spec()
    model = cfg.covariance_model()
    pattern = build_signal(cfg.p, cfg.s, 1.0, seed.rng("mc"))
    cone = ConeSpec(np.sign(pattern), model)
    width = estimate_width(cone, cfg.width_samples, seed, WidthSolverConfig())
    solver_cfg = cfg.solver_config()

    rows = [("width", -1, "aggregate", "median", width.median),
            ("width", -1, "aggregate", "mean", width.mean),
            ("width", -1, "aggregate", "p_median_sq", width.p_median_sq),
            ("width", -1, "aggregate", "flagged", float(width.flagged))]
    cells = []
    n_grid = tuple(int(v) for v in cfg.n_grid)
    mu_grid = tuple(float(v) for v in cfg.mu_grid)
    for n in n_grid:
        for mu in mu_grid:
            theta_star = mu * pattern
            instance = ProblemInstance(theta_star, cfg.sigma, cfg.lam, n,
                                       Normalization(cfg.normalization))

            def one(i, instance=instance, theta_star=theta_star):
                rs = derive_replica_seed(seed, i)
                X = sample_design(model, instance, rs)
                data = generate_data(instance, X, rs)
                fit = solve_lasso(data.X, data.y, cfg.lam, solver_cfg)
                err = fit.theta_hat - theta_star
                return (float(err @ err / cfg.p),
                        fit.active_count / instance.n,
                        fit.converged)

            res = _map_replicas(cfg.n_sim, threads, one)
            risks = np.array([r[0] for r in res])
            sparsities = np.array([r[1] for r in res])
            n_bad = sum(1 for r in res if not r[2])
            key = f"n={n},mu={io.fmt(mu)}"
            for i, r in enumerate(res):
                rows.append(("width_threshold", i, key, "l2_risk", r[0]))
                rows.append(("width_threshold", i, key, "sparsity_per_n", r[1]))
            cells.append((n, mu, float(np.median(risks)), float(np.median(sparsities)),
                          n / cfg.p, n_bad))
    table = ResultTable(_TIDY_COLUMNS, tuple(rows))
    if out_dir is not None:
        out = Path(out_dir)
        table.to_csv(out / "width_threshold_values.csv")
        io.write_width_samples_csv(width, cfg.p, out / "width_samples.csv")
        accepted = width.values[width.ok]
        counts, edges = np.histogram(cfg.p * accepted**2, bins=30)
        io.write_rows_csv(out / "width_histogram.csv",
                          ("bin_lo", "bin_hi", "count"),
                          [(edges[k], edges[k + 1], int(counts[k]))
                           for k in range(counts.size)])
        io.write_rows_csv(out / "threshold_cells.csv",
                          ("n", "mu", "median_l2_risk", "median_sparsity_per_n",
                           "aspect_ratio", "nonconverged"),
                          cells)
        io.write_json(out / "summary.json",
                      _summary("width", cfg, started, {
                          "median_width": width.median,
                          "p_median_sq": width.p_median_sq,
                          "width_flagged": width.flagged,
                          "reliable": width.reliable,
                          "cells": len(cells),
                      }))
    return table


def run_fixed_point_validation(cfg: ExperimentConfig, out_dir=None,
                               threads: int = 1) -> ResultTable:
    """Cross-check the fixed-point predictions against simulated data.

    Per replica: residual scale versus tau* zeta*, active fraction versus
    1 - zeta*, the residual-based noise estimate versus tau*, and the KS
    distance between the standardized debiased coordinates and a standard
    normal.  Aborts with the trace attached if the fixed point does not
    converge.
    """
    if cfg.n is None:
        raise ConfigError("fixpoint experiment needs n")
    started = time.time()
    seed = cfg.seed_spec()
    model = cfg.covariance_model()
    theta_star = _signal_for(cfg, seed)
    instance = ProblemInstance(theta_star, cfg.sigma, cfg.lam, cfg.n,
                               Normalization(cfg.normalization))
    eff = effective_covariance(model, instance)
    fp_cfg = cfg.fixed_point_config()
    alpha = float(cfg.fixed_point.get("alpha", 0.0))
    method = cfg.fixed_point.get("method", "mc")
    solution = solve_fixed_point(theta_star, eff, cfg.lam, cfg.sigma, cfg.n,
                                 cfg=fp_cfg, seed=seed, alpha=alpha, method=method)
    if not solution.converged:
        if out_dir is not None:
            io.write_fixed_point_trace_csv(solution, Path(out_dir) / "fixed_point_trace.csv")
        raise NonConvergenceError(
            f"fixed point did not converge in {solution.iterations} iterations "
            f"(residuals {solution.residual_tau:.3e}, {solution.residual_zeta:.3e})"
        )
    ts, zs = solution.tau_star, solution.zeta_star
    cond = np.array([eff.cond_var(j) for j in range(cfg.p)])
    solver_cfg = cfg.solver_config()

    def one(i):
        rs = derive_replica_seed(seed, i)
        X = sample_design(model, instance, rs)
        data = generate_data(instance, X, rs)
        fit = solve_lasso(data.X, data.y, cfg.lam, solver_cfg)
        if not fit.converged:
            return None
        resid_scale = float(np.linalg.norm(data.y - data.X @ fit.theta_hat) / np.sqrt(cfg.n))
        sparsity = fit.active_count / cfg.n
        try:
            tau_est = tau_hat(data.y, data.X, fit)
            adj = debias(data.X, data.y, fit, eff, adjusted=True)
        except DegenerateDofError:
            return None
        z = (adj.theta_d - theta_star) * np.sqrt(cond) / ts
        ks = float(kstest(z, "norm").statistic)
        return {
            "resid_scale_rel_err": abs(resid_scale - ts * zs) / (ts * zs),
            "sparsity_abs_err": abs(sparsity - (1.0 - zs)),
            "tau_hat_rel_err": abs(tau_est - ts) / ts,
            "debias_ks": ks,
        }

    results = _map_replicas(cfg.n_sim, threads, one)
    rows = [("fixpoint", -1, "solution", "tau_star", ts),
            ("fixpoint", -1, "solution", "zeta_star", zs),
            ("fixpoint", -1, "solution", "iterations", float(solution.iterations))]
    metrics = {}
    flagged = 0
    for i, res in enumerate(results):
        if res is None:
            flagged += 1
            rows.append(("fixpoint", i, "replica", "flagged", 1.0))
            continue
        for name, value in res.items():
            rows.append(("fixpoint", i, "replica", name, value))
            metrics.setdefault(name, []).append(value)
    table = ResultTable(_TIDY_COLUMNS, tuple(rows))
    medians = {name: float(np.median(vals)) for name, vals in metrics.items()}
    if out_dir is not None:
        out = Path(out_dir)
        table.to_csv(out / "fixpoint_values.csv")
        io.write_fixed_point_trace_csv(solution, out / "fixed_point_trace.csv")
        io.write_json(out / "summary.json",
                      _summary("fixpoint", cfg, started, {
                          "flagged": flagged,
                          "tau_star": ts,
                          "zeta_star": zs,
                          "median_errors": medians,
                          "width_warning": solution.width_warning,
                      }))
    return table
