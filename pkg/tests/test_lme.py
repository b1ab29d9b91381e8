import math

import numpy as np
import pytest

from lmebn import LmeConfig, LmeProblem, NumericError, fit_lme, lme_group_predict, profiled_deviance
from lmebn.lme import LmeFit, _identity_theta
from _oracles import (
    dense_lme_loglik,
    dense_profile_loglik,
    grid_search_lme,
    lam_from_vech,
    lstsq_ols,
    one_way_grid_best,
)


def balanced_intercept_problem(rng, n_groups=4, per_group=6, s2b=1.0, s2e=0.5):
    groups = np.repeat(np.arange(n_groups), per_group)
    b = rng.normal(scale=math.sqrt(s2b), size=n_groups)
    y = 3.0 + b[groups] + rng.normal(scale=math.sqrt(s2e), size=len(groups))
    x = np.ones((len(groups), 1))
    return LmeProblem(y, x, groups, n_groups)


def slope_problem(rng, n=24, n_groups=3):
    groups = np.repeat(np.arange(n_groups), n // n_groups)
    xs = rng.normal(size=n)
    slopes = 2.0 + rng.normal(size=n_groups)
    inters = 1.0 + rng.normal(size=n_groups)
    y = inters[groups] + slopes[groups] * xs + 0.5 * rng.normal(size=n)
    x = np.column_stack([np.ones(n), xs])
    return LmeProblem(y, x, groups, n_groups)


class TestProfiledDeviance:
    def test_theta_zero_equals_ols_deviance(self, rng):
        prob = slope_problem(rng)
        out = profiled_deviance(prob, np.zeros(3))
        coef, sigma2, loglik = lstsq_ols(prob.x, prob.y)
        assert out.deviance == pytest.approx(-2.0 * loglik, abs=1e-8)
        assert out.beta == pytest.approx(coef, abs=1e-8)
        assert np.allclose(out.blups, 0.0)

    def test_single_group_beta_is_gls(self, rng):
        n = 18
        xs = rng.normal(size=n)
        y = 1.0 + 2.0 * xs + rng.normal(size=n)
        prob = LmeProblem(y, np.column_stack([np.ones(n), xs]), np.zeros(n, dtype=int), 1)
        theta = np.array([0.7, -0.2, 0.4])
        out = profiled_deviance(prob, theta)
        _, beta, _ = dense_profile_loglik(y, prob.x, prob.groups, 1, lam_from_vech(theta, 2))
        assert out.beta == pytest.approx(beta, abs=1e-6)

    def test_identity_theta_matches_dense(self, rng):
        prob = balanced_intercept_problem(rng)
        out = profiled_deviance(prob, np.ones(1))
        ll, _, _ = dense_profile_loglik(
            prob.y, prob.x, prob.groups, prob.n_groups, np.ones((1, 1))
        )
        assert out.deviance == pytest.approx(-2.0 * ll, abs=1e-6)

    def test_general_theta_matches_dense(self, rng):
        prob = slope_problem(rng)
        for theta in ([0.5, 0.1, 0.9], [1.5, -0.7, 0.01], [0.0, 0.3, 1.0]):
            out = profiled_deviance(prob, np.array(theta))
            ll, beta, sigma2 = dense_profile_loglik(
                prob.y, prob.x, prob.groups, prob.n_groups, lam_from_vech(theta, 2)
            )
            assert out.deviance == pytest.approx(-2.0 * ll, abs=1e-6)
            assert out.beta == pytest.approx(beta, abs=1e-6)
            assert out.sigma2 == pytest.approx(sigma2, abs=1e-9)


class TestFitLme:
    def test_noiseless_shared_line(self):
        n, g = 30, 3
        groups = np.tile(np.arange(g), n // g)
        xs = np.linspace(-2, 2, n)
        y = 2.0 + 3.0 * xs
        prob = LmeProblem(y, np.column_stack([np.ones(n), xs]), groups, g)
        fit = fit_lme(prob)
        assert fit.beta == pytest.approx([2.0, 3.0], abs=1e-4)
        assert fit.sigma2 <= 1e-6
        assert np.abs(fit.blups).max() < 1e-3

    def test_one_way_matches_grid_search(self, rng):
        prob = balanced_intercept_problem(rng)
        fit = fit_lme(prob)
        best_ll, _ = one_way_grid_best(prob.y, prob.groups, prob.n_groups)
        assert fit.loglik == pytest.approx(best_ll, abs=1e-4)

    def test_general_instance_matches_dense_grid(self, rng):
        prob = slope_problem(rng)
        fit = fit_lme(prob)
        spans = [(0.0, 6.0), (-4.0, 4.0), (0.0, 6.0)]
        best_ll, _ = grid_search_lme(
            prob.y, prob.x, prob.groups, prob.n_groups, spans, refinements=4, points=9
        )
        assert fit.loglik >= best_ll - 1e-3
        assert fit.loglik == pytest.approx(best_ll, abs=1e-3)

    def test_loglik_equals_dense_evaluation(self, rng):
        for make in (balanced_intercept_problem, slope_problem):
            prob = make(rng)
            fit = fit_lme(prob)
            dense = dense_lme_loglik(
                prob.y, prob.x, prob.groups, prob.n_groups,
                fit.beta, fit.cov_re, fit.sigma2,
            )
            assert fit.loglik == pytest.approx(dense, abs=1e-6)

    def test_blup_mean_near_zero_balanced(self, rng):
        prob = balanced_intercept_problem(rng, n_groups=6, per_group=8)
        fit = fit_lme(prob)
        norm = np.linalg.norm(fit.blups.mean(axis=0))
        assert norm <= 1e-3 * (1.0 + np.linalg.norm(fit.beta))

    def test_shrinkage_between_pooled_and_group_means(self, rng):
        for seed in range(8):
            local = np.random.default_rng(seed)
            prob = balanced_intercept_problem(local, n_groups=5, per_group=7)
            fit = fit_lme(prob)
            pooled = prob.y.mean()
            for g in range(prob.n_groups):
                own = prob.y[prob.groups == g].mean()
                fitted = fit.beta[0] + fit.blups[g, 0]
                lo, hi = min(pooled, own), max(pooled, own)
                assert lo - 1e-8 <= fitted <= hi + 1e-8

    def test_boundary_fit_approaches_pooled_ols(self, rng):
        # each group sees the exact same (x, y) block, so the between-group
        # variance is zero, the factor collapses, and the fixed effects
        # match pooled OLS
        per, g = 20, 3
        xs_block = rng.normal(size=per)
        y_block = 1.0 + 2.0 * xs_block + 0.4 * rng.normal(size=per)
        xs = np.tile(xs_block, g)
        y = np.tile(y_block, g)
        groups = np.repeat(np.arange(g), per)
        prob = LmeProblem(y, np.column_stack([np.ones(len(y)), xs]), groups, g)
        fit = fit_lme(prob)
        assert fit.boundary
        assert np.abs(fit.cov_re).max() <= 1e-6 * fit.sigma2
        coef, _, _ = lstsq_ols(prob.x, prob.y)
        rel = np.abs(fit.beta - coef) / (1.0 + np.abs(coef))
        assert rel.max() < 1e-4

    def test_variance_decomposition_against_monte_carlo(self, rng):
        prob = slope_problem(rng)
        fit = fit_lme(prob)
        draw = np.random.default_rng(99)
        m = 200_000
        row = np.array([1.0, 0.7])
        b = draw.multivariate_normal(np.zeros(2), fit.cov_re, size=m)
        eps = draw.normal(scale=math.sqrt(fit.sigma2), size=m)
        sim = (fit.beta + b) @ row + eps
        expected = row @ fit.cov_re @ row + fit.sigma2
        se = sim.var(ddof=1) * math.sqrt(2.0 / (m - 1))
        assert abs(sim.var(ddof=1) - expected) < 3 * se

    def test_empty_group_gets_zero_blup(self, rng):
        prob = balanced_intercept_problem(rng, n_groups=3)
        padded = LmeProblem(prob.y, prob.x, prob.groups, 5)
        fit = fit_lme(padded)
        assert np.allclose(fit.blups[3:], 0.0)

    def test_deterministic(self, rng):
        prob = slope_problem(rng)
        a = fit_lme(prob)
        b = fit_lme(prob)
        assert np.array_equal(a.beta, b.beta)
        assert a.loglik == b.loglik

    def test_collinear_parents_rejected(self, rng):
        n = 20
        xs = rng.normal(size=n)
        x = np.column_stack([np.ones(n), xs, xs])
        prob = LmeProblem(rng.normal(size=n), x, np.zeros(n, dtype=int), 1)
        with pytest.raises(NumericError, match="collinear"):
            fit_lme(prob)

    def test_too_few_rows_rejected(self):
        prob = LmeProblem([1.0], np.ones((1, 1)), [0], 1)
        with pytest.raises(NumericError):
            fit_lme(prob)

    def test_eval_budget_respected(self, rng):
        prob = slope_problem(rng)
        cfg = LmeConfig(max_evals_per_q2=2)
        fit = fit_lme(prob, cfg)
        assert not fit.converged
        # per start: budget cap plus one simplex initialization of overshoot
        per_start = 2 * prob.q * prob.q // 2 + prob.q * (prob.q + 1) // 2 + 2
        assert fit.n_evals <= 2 * per_start

    def test_sigma_psd_and_invariants(self, rng):
        for seed in range(6):
            prob = slope_problem(np.random.default_rng(seed))
            fit = fit_lme(prob)
            eig = np.linalg.eigvalsh(fit.cov_re)
            assert eig.min() >= -1e-10
            assert fit.sigma2 > 0


class TestGroupPredict:
    def fit(self):
        beta = np.array([1.0, 2.0])
        blups = np.array([[0.5, -1.0], [0.0, 0.0]])
        return LmeFit(
            beta=beta, blups=blups, sigma2=0.5, cov_re=np.eye(2),
            loglik=0.0, converged=True, boundary=False,
        )

    def test_zero_blup_equals_fixed(self):
        fit = self.fit()
        assert lme_group_predict(fit, 1, np.array([3.0])) == pytest.approx(1.0 + 2.0 * 3.0)

    def test_offset_group(self):
        fit = self.fit()
        # (1 + 0.5) + (2 - 1) * 3 = 4.5
        assert lme_group_predict(fit, 0, np.array([3.0])) == pytest.approx(4.5)

    def test_zero_parent_gives_intercept_sum(self):
        fit = self.fit()
        assert lme_group_predict(fit, 0, np.array([0.0])) == pytest.approx(1.5)

    def test_identity_start_theta(self):
        assert np.array_equal(_identity_theta(2), np.array([1.0, 0.0, 1.0]))
