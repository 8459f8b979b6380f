import numpy as np
import pytest
from scipy.integrate import quad
from scipy.optimize import minimize_scalar
from scipy.stats import norm

from lassodist import (
    FixedPointConfig,
    InvalidParameterError,
    OmegaCurve,
    SeedSpec,
    SolverConfig,
    WidthRegimeWarning,
    build_ar_covariance,
    eps_star,
    estimate_risk_df,
    factor_covariance,
    omega_star,
    risk_df_identity_closed_form,
    solve_fixed_point,
)


def quad_risk_df(theta_vals, lam, tau, zeta, delta):
    """Independent quadrature oracle for the identity-covariance (R, df)."""
    thr = lam / zeta

    def soft(x):
        return np.sign(x) * max(abs(x) - thr, 0.0)

    risks, dfs = [], []
    for m in theta_vals:
        cuts = sorted([(-thr - m) / tau, (thr - m) / tau])
        pts = [-np.inf, cuts[0], cuts[1], np.inf]
        f = lambda g: (soft(m + tau * g) - m) ** 2 * norm.pdf(g)
        risks.append(sum(quad(f, pts[i], pts[i + 1], epsabs=1e-13, epsrel=1e-13)[0]
                         for i in range(3)))
        fd = lambda g: norm.pdf(g)
        dfs.append(quad(fd, -np.inf, cuts[0])[0] + quad(fd, cuts[1], np.inf)[0])
    return np.mean(risks) / delta, np.mean(dfs) / delta


class TestClosedForm:
    @pytest.mark.parametrize("tau,zeta,lam,delta", [
        (1.0, 0.8, 2.0, 0.5),
        (2.5, 0.3, 4.0, 0.25),
        (0.7, 1.0, 0.9, 2.0),
    ])
    def test_matches_quadrature(self, tau, zeta, lam, delta):
        theta = np.array([0.0, 1.5, -3.0, 0.2])
        est = risk_df_identity_closed_form(theta, lam, tau, zeta, delta)
        r_ref, d_ref = quad_risk_df(theta, lam, tau, zeta, delta)
        assert abs(est.risk - r_ref) < 1e-8
        assert abs(est.df - d_ref) < 1e-8
        assert est.se_risk == 0.0 and est.se_df == 0.0

    def test_small_tau_strong_signal_vs_quadrature(self):
        # all |theta_j| far above the threshold, tau nearly degenerate
        theta = np.array([5.0, -7.0, 6.0])
        est = risk_df_identity_closed_form(theta, 1.0, 1e-3, 0.5, 0.5)
        r_ref, d_ref = quad_risk_df(theta, 1.0, 1e-3, 0.5, 0.5)
        assert abs(est.risk - r_ref) < 1e-8
        assert abs(est.df - d_ref) < 1e-8

    def test_huge_threshold_limit(self):
        theta = np.array([1.0, -2.0, 0.5, 0.0])
        delta = 0.5
        est = risk_df_identity_closed_form(theta, 1e6, 1.0, 1.0, delta)
        assert est.risk == pytest.approx(np.mean(theta**2) / delta, rel=1e-9)
        assert est.df == pytest.approx(0.0, abs=1e-12)

    def test_null_signal_formulas(self):
        tau, zeta, lam, delta = 1.3, 0.6, 1.1, 0.5
        c = lam / (zeta * tau)
        est = risk_df_identity_closed_form(np.zeros(4), lam, tau, zeta, delta)
        assert est.df == pytest.approx(2 * norm.cdf(-c) / delta, rel=1e-12)
        expect_risk = 2 * tau**2 * ((1 + c**2) * norm.cdf(-c) - c * norm.pdf(c)) / delta
        assert est.risk == pytest.approx(expect_risk, rel=1e-10)


class TestEstimateRiskDf:
    def test_null_identity_against_scalar_integral(self):
        p, n = 80, 40
        model = factor_covariance(np.eye(p))
        lam, tau, zeta = 1.0, 1.2, 0.7
        est = estimate_risk_df(np.zeros(p), model, lam, tau, zeta, n,
                               4000, SeedSpec(1))
        oracle = risk_df_identity_closed_form(np.zeros(p), lam, tau, zeta, n / p)
        assert abs(est.df - oracle.df) <= 3 * est.se_df
        assert abs(est.risk - oracle.risk) <= 3 * est.se_risk
        assert est.flagged == 0

    def test_huge_threshold_collapses(self, ar_model_10):
        theta = np.arange(10.0) - 4
        n = 5
        est = estimate_risk_df(theta, ar_model_10, 1e7, 1.0, 1.0, n, 50, SeedSpec(2))
        target = float(theta @ ar_model_10.sigma @ theta) / n
        assert est.risk == pytest.approx(target, rel=1e-6)
        assert est.df == 0.0

    def test_common_random_numbers(self, ar_model_10):
        theta = np.zeros(10)
        a = estimate_risk_df(theta, ar_model_10, 1.0, 1.0, 0.8, 5, 200, SeedSpec(3))
        b = estimate_risk_df(theta, ar_model_10, 1.0, 1.0, 0.8, 5, 200, SeedSpec(3))
        assert a.risk == b.risk and a.df == b.df

    def test_two_seeds_consistent(self, ar_model_10):
        theta = np.r_[np.full(2, 1.5), np.zeros(8)]
        a = estimate_risk_df(theta, ar_model_10, 1.0, 1.1, 0.8, 5, 3000, SeedSpec(4))
        b = estimate_risk_df(theta, ar_model_10, 1.0, 1.1, 0.8, 5, 3000, SeedSpec(5))
        assert abs(a.risk - b.risk) < 6 * max(a.se_risk, b.se_risk)
        assert abs(a.df - b.df) < 6 * max(a.se_df, b.se_df)

    def test_invalid_params(self, ar_model_10):
        with pytest.raises(InvalidParameterError):
            estimate_risk_df(np.zeros(10), ar_model_10, 1.0, 0.0, 0.5, 5, 10, SeedSpec(0))
        with pytest.raises(InvalidParameterError):
            estimate_risk_df(np.zeros(10), ar_model_10, 1.0, 1.0, 0.5, 5, 0, SeedSpec(0))


class TestSolveFixedPoint:
    def test_null_model_large_lambda(self):
        p = 50
        model = factor_covariance(np.eye(p))
        sol = solve_fixed_point(np.zeros(p), model, 1e4, 1.0, 25, seed=SeedSpec(6),
                                cfg=FixedPointConfig(n_mc=100, growth=1))
        assert sol.converged
        assert sol.tau_star == pytest.approx(1.0, abs=1e-6)
        assert sol.zeta_star == pytest.approx(1.0, abs=1e-6)

    def test_identity_mc_matches_closed_form(self):
        p, n = 200, 100
        theta = np.zeros(p)
        theta[:20] = 2.0
        model = factor_covariance(np.eye(p))
        cf = solve_fixed_point(theta, None, 1.5, 1.0, n, method="closed_form",
                               cfg=FixedPointConfig(fp_tol=1e-10))
        mc = solve_fixed_point(theta, model, 1.5, 1.0, n, seed=SeedSpec(7),
                               cfg=FixedPointConfig(n_mc=2000, growth=2, fp_tol=1e-6))
        assert cf.converged and mc.converged
        assert abs(mc.tau_star**2 - cf.tau_star**2) <= 3 * mc.se_risk + 1e-5
        assert abs(mc.zeta_star - cf.zeta_star) <= 3 * mc.se_df + 1e-5

    def test_tau_at_least_sigma(self, ar_model_10):
        theta = np.r_[np.full(3, 1.0), np.zeros(7)]
        sol = solve_fixed_point(theta, ar_model_10, 0.5, 0.8, 6, seed=SeedSpec(8),
                                cfg=FixedPointConfig(n_mc=300, growth=1))
        assert sol.tau_star >= 0.8

    def test_residuals_on_fresh_seed(self, ar_model_10):
        theta = np.r_[np.full(2, 1.0), np.zeros(8)]
        cfg = FixedPointConfig(n_mc=500, growth=2, fp_tol=1e-5)
        sol = solve_fixed_point(theta, ar_model_10, 1.0, 1.0, 6, seed=SeedSpec(9), cfg=cfg)
        assert sol.converged
        fresh = estimate_risk_df(theta, ar_model_10, 1.0, sol.tau_star, sol.zeta_star,
                                 6, 2000, SeedSpec(10))
        assert abs(sol.tau_star**2 - 1.0 - fresh.risk) < cfg.fp_tol + 3 * fresh.se_risk
        assert abs(sol.zeta_star - 1.0 + fresh.df) < cfg.fp_tol + 3 * fresh.se_df

    def test_homogeneity(self):
        p, n = 120, 60
        theta = np.zeros(p)
        theta[:12] = 1.5
        base = solve_fixed_point(theta, None, 1.2, 1.0, n, method="closed_form")
        scaled = solve_fixed_point(2 * theta, None, 2.4, 2.0, n, method="closed_form")
        assert scaled.tau_star == pytest.approx(2 * base.tau_star, rel=1e-4)
        assert scaled.zeta_star == pytest.approx(base.zeta_star, abs=1e-4)

    def test_trace_recorded(self, ar_model_10):
        sol = solve_fixed_point(np.zeros(10), ar_model_10, 2.0, 1.0, 5,
                                seed=SeedSpec(11), cfg=FixedPointConfig(n_mc=100, growth=1))
        assert len(sol.trace) == sol.iterations
        assert sol.trace[0].zeta == 1.0

    def test_nonconvergence_reported(self, ar_model_10):
        sol = solve_fixed_point(np.ones(10), ar_model_10, 0.5, 1.0, 5, seed=SeedSpec(12),
                                cfg=FixedPointConfig(n_mc=50, growth=1, max_outer=2,
                                                     fp_tol=1e-12))
        assert not sol.converged
        assert len(sol.trace) == 2

    def test_width_regime_warning(self):
        # dense signal far above the width threshold for this aspect ratio
        p, n = 150, 15
        theta = np.full(p, 10.0)
        model = factor_covariance(np.eye(p))
        with pytest.warns(WidthRegimeWarning):
            sol = solve_fixed_point(theta, model, 0.5, 1.0, n, seed=SeedSpec(13),
                                    cfg=FixedPointConfig(n_mc=60, growth=1, max_outer=25))
        assert sol.width_warning
        assert not sol.converged

    def test_sigma_positive_required(self, ar_model_10):
        with pytest.raises(InvalidParameterError):
            solve_fixed_point(np.zeros(10), ar_model_10, 1.0, 0.0, 5)

    def test_smoothed_runs_and_tracks_plain(self):
        p, n = 150, 75
        theta = np.zeros(p)
        theta[:15] = 2.0
        model = factor_covariance(np.eye(p))
        cfg = FixedPointConfig(n_mc=1500, growth=1, fp_tol=1e-6)
        plain = solve_fixed_point(theta, model, 1.5, 1.0, n, seed=SeedSpec(14), cfg=cfg)
        smooth = solve_fixed_point(theta, model, 1.5, 1.0, n, seed=SeedSpec(14),
                                   cfg=cfg, alpha=1e-3)
        assert smooth.converged
        assert abs(smooth.tau_star - plain.tau_star) < 0.05 * plain.tau_star


class TestOmegaCurve:
    def test_limits(self):
        assert omega_star(1e-6) < 0.01
        assert omega_star(1 - 1e-9) > 0.999

    def test_against_statistical_dimension_oracle(self):
        # independent derivation: normalized statistical dimension of the
        # l1 descent cone, minimized over its scalar parameter
        for eps in (0.05, 0.2, 0.5, 0.8):
            def obj(t):
                return eps * (1 + t * t) + 2 * (1 - eps) * (
                    (1 + t * t) * norm.sf(t) - t * norm.pdf(t))
            res = minimize_scalar(obj, bounds=(0, 40), method="bounded",
                                  options={"xatol": 1e-12})
            assert omega_star(eps) == pytest.approx(np.sqrt(res.fun), abs=1e-9)

    def test_strictly_increasing_grid(self):
        grid = np.linspace(0.01, 0.99, 99)
        vals = [omega_star(e) for e in grid]
        assert all(b > a for a, b in zip(vals, vals[1:]))
        assert all(0 < v < 1 for v in vals)

    def test_invalid_eps(self):
        for eps in (0.0, 1.0, -0.2, 2.0):
            with pytest.raises(InvalidParameterError):
                omega_star(eps)

    def test_alpha_consistency(self):
        curve = OmegaCurve()
        a = curve.alpha(0.3)
        w2 = 0.3 + 2 * 0.7 * norm.sf(a)
        assert curve.value(0.3) == pytest.approx(np.sqrt(w2), abs=1e-12)


class TestEpsStar:
    def test_saturates_at_one(self):
        assert eps_star(1.0, 1.0) == 1.0
        assert eps_star(2.0, 5.0) == 1.0

    def test_round_trip_kappa_one(self):
        assert omega_star(eps_star(1.0, 0.25)) == pytest.approx(0.5, abs=1e-8)

    def test_round_trip_grid(self):
        for eps in np.arange(0.1, 0.95, 0.1):
            w = omega_star(eps)
            assert eps_star(1.0, w * w) == pytest.approx(eps, abs=1e-6)

    def test_decreasing_in_condition_number(self):
        vals = [eps_star(k, 0.5) for k in (1.0, 2.0, 4.0, 8.0)]
        assert all(b < a for a, b in zip(vals, vals[1:]))

    def test_invalid(self):
        with pytest.raises(InvalidParameterError):
            eps_star(0.5, 1.0)
        with pytest.raises(InvalidParameterError):
            eps_star(1.0, 0.0)
