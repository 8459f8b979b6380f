import numpy as np
import pytest

from lassodist import (
    InvalidParameterError,
    SolverConfig,
    StaleFitError,
    build_ar_covariance,
    extract_subgradient,
    factor_covariance,
    fixed_design_prox,
    lasso_objective,
    moreau_l1,
    prox_objective,
    smoothed_prox,
    solve_lasso,
    solve_smoothed_lasso,
)

cvxpy = pytest.importorskip("cvxpy")


def cvx_lasso(X, y, lam):
    n, p = X.shape
    th = cvxpy.Variable(p)
    obj = cvxpy.sum_squares(y - X @ th) / (2 * n) + lam * cvxpy.norm1(th) / n
    prob = cvxpy.Problem(cvxpy.Minimize(obj))
    prob.solve(solver=cvxpy.CLARABEL)
    return prob.value, th.value


def cvx_prox(y_f, model, lam, zeta):
    p = model.p
    th = cvxpy.Variable(p)
    obj = zeta / 2 * cvxpy.sum_squares(y_f - model.sqrt @ th) + lam * cvxpy.norm1(th)
    prob = cvxpy.Problem(cvxpy.Minimize(obj))
    prob.solve(solver=cvxpy.CLARABEL)
    return prob.value, th.value


def soft(v, t):
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


class TestSolveLasso:
    def test_orthonormal_soft_threshold(self):
        X = np.eye(2)
        y = np.array([3.0, -0.2])
        fit = solve_lasso(X, y, 1.0)
        np.testing.assert_allclose(fit.theta_hat, [2.0, 0.0], atol=1e-10)
        assert fit.active_count == 1

    def test_null_fit_threshold(self, rng):
        X = rng.standard_normal((15, 8))
        y = rng.standard_normal(15)
        lam = np.max(np.abs(X.T @ y)) * 1.0001
        fit = solve_lasso(X, y, lam)
        np.testing.assert_array_equal(fit.theta_hat, np.zeros(8))
        assert np.max(np.abs(fit.subgrad)) <= 1.0

    def test_matches_reference_solver(self, rng):
        X = rng.standard_normal((20, 40))
        theta = np.zeros(40)
        theta[:5] = rng.standard_normal(5) * 3
        y = X @ theta + 0.5 * rng.standard_normal(20)
        fit = solve_lasso(X, y, 1.2)
        ref_obj, _ = cvx_lasso(X, y, 1.2)
        assert fit.objective <= ref_obj + 1e-6
        assert abs(fit.objective - ref_obj) < 1e-6

    def test_kkt_certified(self, rng):
        X = rng.standard_normal((30, 50))
        y = rng.standard_normal(30)
        fit = solve_lasso(X, y, 0.8)
        assert fit.converged
        assert fit.kkt_residual <= 1e-6
        t = fit.subgrad
        assert np.max(np.abs(t)) <= 1 + 1e-6
        active = np.abs(fit.theta_hat) > 1e-8
        np.testing.assert_allclose(t[active], np.sign(fit.theta_hat[active]), atol=1e-6)

    def test_objective_monotone_over_sweeps(self, rng):
        X = rng.standard_normal((25, 35))
        y = rng.standard_normal(25) * 2
        cfg_one = SolverConfig(tol=1e-14, max_iter=1, kkt_tol=1e-14)
        theta = None
        objs = []
        for _ in range(20):
            fit = solve_lasso(X, y, 0.5, cfg_one, theta_init=theta)
            theta = fit.theta_hat
            objs.append(fit.objective)
        assert all(objs[k + 1] <= objs[k] + 1e-12 for k in range(len(objs) - 1))

    def test_warm_start_invariance(self, rng):
        X = rng.standard_normal((40, 25))
        y = rng.standard_normal(40)
        cold = solve_lasso(X, y, 0.7)
        other = solve_lasso(X, y, 2.0)
        warm = solve_lasso(X, y, 0.7, theta_init=other.theta_hat)
        np.testing.assert_allclose(warm.theta_hat, cold.theta_hat, atol=1e-7)
        assert abs(warm.objective - cold.objective) <= 10 * 1e-8 * max(1, abs(cold.objective))

    def test_nonconvergence_flagged_not_raised(self, rng):
        X = rng.standard_normal((20, 60))
        y = rng.standard_normal(20) * 5
        fit = solve_lasso(X, y, 0.01, SolverConfig(max_iter=2, tol=1e-15, kkt_tol=1e-12))
        assert not fit.converged
        assert fit.theta_hat.shape == (60,)

    def test_invalid_lambda(self, rng):
        with pytest.raises(InvalidParameterError):
            solve_lasso(np.eye(3), np.ones(3), 0.0)

    def test_nonfinite_rejected(self):
        X = np.eye(3)
        y = np.array([1.0, np.inf, 0.0])
        with pytest.raises(InvalidParameterError):
            solve_lasso(X, y, 1.0)


class TestFixedDesignProx:
    def test_identity_separable(self):
        m = factor_covariance(np.eye(3))
        fit = fixed_design_prox(np.array([2.0, -0.5, 0.0]), m, 1.0, 1.0)
        np.testing.assert_allclose(fit.theta_hat, [1.0, 0.0, 0.0], atol=1e-12)

    def test_identity_equals_soft_threshold_tightly(self, rng):
        m = factor_covariance(np.eye(12))
        y_f = rng.standard_normal(12) * 3
        lam, zeta = 1.3, 0.62
        fit = fixed_design_prox(y_f, m, lam, zeta)
        np.testing.assert_allclose(fit.theta_hat, soft(y_f, lam / zeta), atol=1e-10)

    def test_tiny_lambda_limit(self, ar_model_10, rng):
        y_f = rng.standard_normal(10)
        fit = fixed_design_prox(y_f, ar_model_10, 1e-9, 1.0,
                                SolverConfig(tol=1e-12, kkt_tol=1e-6, max_iter=20000))
        np.testing.assert_allclose(fit.theta_hat, ar_model_10.inv_sqrt @ y_f, atol=1e-6)

    def test_matches_reference_solver(self, ar_model_10, rng):
        y_f = rng.standard_normal(10) * 2
        fit = fixed_design_prox(y_f, ar_model_10, 0.9, 0.7)
        ref_obj, _ = cvx_prox(y_f, ar_model_10, 0.9, 0.7)
        assert abs(fit.objective - ref_obj) < 1e-6
        assert fit.kkt_residual <= 1e-6

    def test_prox_nonexpansive(self, ar_model_10, rng):
        for _ in range(10):
            a = rng.standard_normal(10) * 2
            b = rng.standard_normal(10) * 2
            fa = fixed_design_prox(a, ar_model_10, 1.0, 0.8)
            fb = fixed_design_prox(b, ar_model_10, 1.0, 0.8)
            lhs = np.linalg.norm(ar_model_10.sqrt @ (fa.theta_hat - fb.theta_hat))
            assert lhs <= np.linalg.norm(a - b) + 1e-8

    def test_invalid_zeta(self, ar_model_10):
        with pytest.raises(InvalidParameterError):
            fixed_design_prox(np.zeros(10), ar_model_10, 1.0, 0.0)


class TestMoreau:
    def test_alpha_zero_is_l1(self, rng):
        theta = rng.standard_normal(20)
        assert moreau_l1(theta, 0.0) == pytest.approx(np.abs(theta).sum())

    def test_linear_branch(self):
        alpha = 0.3
        assert moreau_l1(np.array([2 * alpha]), alpha) == pytest.approx(1.5 * alpha)

    def test_sandwich(self, rng):
        theta = rng.standard_normal(50)
        alpha = 0.1
        val = moreau_l1(theta, alpha)
        l1 = np.abs(theta).sum()
        assert l1 - 50 * alpha / 2 <= val <= l1

    def test_negative_alpha(self):
        with pytest.raises(InvalidParameterError):
            moreau_l1(np.ones(3), -0.1)


class TestSmoothedLasso:
    def test_alpha_limit_matches_lasso(self, rng):
        X = rng.standard_normal((20, 40))
        y = rng.standard_normal(20) * 2
        plain = solve_lasso(X, y, 1.0)
        smooth = solve_smoothed_lasso(X, y, 1.0, 1e-8)
        np.testing.assert_allclose(smooth.theta_hat, plain.theta_hat, atol=1e-3)

    def test_orthonormal_huber_prox_closed_form(self):
        X = np.eye(4)
        y = np.array([3.0, 0.5, -0.2, 1.4])
        lam, alpha = 1.0, 0.5
        fit = solve_smoothed_lasso(X, y, lam, alpha)
        # coordinatewise: |y| <= alpha + lam -> y*alpha/(alpha+lam), else y -+ lam
        expect = np.where(np.abs(y) <= alpha + lam,
                          y * alpha / (alpha + lam),
                          y - np.sign(y) * lam)
        np.testing.assert_allclose(fit.theta_hat, expect, atol=1e-10)

    def test_lambda_zero_least_squares(self, rng):
        X = rng.standard_normal((30, 6))
        y = rng.standard_normal(30)
        fit = solve_smoothed_lasso(X, y, 0.0, 0.5)
        np.testing.assert_allclose(fit.theta_hat, np.linalg.lstsq(X, y, rcond=None)[0],
                                   atol=1e-7)

    def test_alpha_required_positive(self, rng):
        with pytest.raises(InvalidParameterError):
            solve_smoothed_lasso(np.eye(3), np.ones(3), 1.0, 0.0)


class TestSmoothedProx:
    def test_alpha_zero_delegates(self, ar_model_10, rng):
        y_f = rng.standard_normal(10)
        a = smoothed_prox(y_f, ar_model_10, 1.0, 0.8, 0.0)
        b = fixed_design_prox(y_f, ar_model_10, 1.0, 0.8)
        np.testing.assert_array_equal(a.theta_hat, b.theta_hat)

    def test_identity_huber_prox(self, rng):
        m = factor_covariance(np.eye(8))
        y_f = rng.standard_normal(8) * 2
        lam, zeta, alpha = 0.8, 0.5, 0.3
        fit = smoothed_prox(y_f, m, lam, zeta, alpha)
        thr = lam / zeta
        expect = np.where(np.abs(y_f) <= alpha + thr,
                          y_f * alpha / (alpha + thr),
                          y_f - np.sign(y_f) * thr)
        np.testing.assert_allclose(fit.theta_hat, expect, atol=1e-10)

    def test_stationarity(self, ar_model_10, rng):
        y_f = rng.standard_normal(10)
        fit = smoothed_prox(y_f, ar_model_10, 1.0, 0.6, 0.05)
        assert fit.kkt_residual <= 1e-6
        # residual measures the gradient balance of the smoothed objective
        grad = -0.6 * ar_model_10.sqrt @ (y_f - ar_model_10.sqrt @ fit.theta_hat) \
            + 1.0 * np.clip(fit.theta_hat / 0.05, -1, 1)
        assert np.max(np.abs(grad)) <= 1e-6 * 1.0 + 1e-8

    def test_objective_reported(self, ar_model_10, rng):
        y_f = rng.standard_normal(10)
        fit = smoothed_prox(y_f, ar_model_10, 1.0, 0.6, 0.2)
        assert fit.objective == pytest.approx(
            prox_objective(y_f, ar_model_10, 1.0, 0.6, fit.theta_hat, 0.2))


class TestSubgradient:
    def test_null_fit(self, rng):
        X = rng.standard_normal((15, 8))
        y = rng.standard_normal(15)
        lam = np.max(np.abs(X.T @ y)) * 1.01
        t = extract_subgradient(X, y, np.zeros(8), lam)
        np.testing.assert_allclose(t, X.T @ y / lam)
        assert np.max(np.abs(t)) <= 1.0

    def test_active_signs(self, rng):
        X = rng.standard_normal((40, 10))
        y = rng.standard_normal(40) * 2
        fit = solve_lasso(X, y, 1.0)
        t = extract_subgradient(X, y, fit.theta_hat, 1.0)
        active = np.abs(fit.theta_hat) > 1e-8
        np.testing.assert_allclose(t[active], np.sign(fit.theta_hat[active]), atol=1e-6)

    def test_bound_on_solved_instance(self, rng):
        X = rng.standard_normal((25, 50))
        y = rng.standard_normal(25)
        fit = solve_lasso(X, y, 0.6)
        t = extract_subgradient(X, y, fit.theta_hat, 0.6)
        assert np.max(np.abs(t)) <= 1 + 1e-6

    def test_stale_fit_raises(self, rng):
        X = rng.standard_normal((20, 10))
        y = rng.standard_normal(20) * 3
        with pytest.raises(StaleFitError):
            extract_subgradient(X, y, np.ones(10), 0.5)


class TestRandomInstanceProperties:
    def test_kkt_bounds_random_instances(self, rng):
        for _ in range(25):
            n = int(rng.integers(10, 40))
            p = int(rng.integers(5, 60))
            X = rng.standard_normal((n, p))
            y = rng.standard_normal(n) * rng.uniform(0.5, 3)
            lam = rng.uniform(0.05, 2.0)
            fit = solve_lasso(X, y, lam)
            assert fit.kkt_residual <= 1e-6
            obj_ref = lasso_objective(X, y, lam, fit.theta_hat)
            assert fit.objective == pytest.approx(obj_ref)

    def test_prox_kkt_random_instances(self, rng):
        for _ in range(25):
            p = int(rng.integers(3, 30))
            model = build_ar_covariance(float(rng.uniform(-0.7, 0.7)), p)
            y_f = rng.standard_normal(p) * rng.uniform(0.5, 3)
            fit = fixed_design_prox(y_f, model, rng.uniform(0.1, 2), rng.uniform(0.2, 1.0))
            assert fit.kkt_residual <= 1e-6
