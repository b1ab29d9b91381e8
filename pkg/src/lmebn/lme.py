"""Maximum-likelihood fitting of grouped random-coefficient regressions.

One response, a fixed design with leading intercept column, and a random
intercept plus one random slope per regressor, independent across groups
with a shared covariance. The covariance is parameterized through its
relative lower-triangular factor (Sigma = sigma2 * L L'); beta and sigma2
are profiled out in closed form and the factor entries are optimized by a
derivative-free simplex descent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import NumericError


@dataclass(frozen=True)
class LmeConfig:
    """Optimizer settings; the evaluation budget scales with the design width."""

    max_evals_per_q2: int = 200
    rel_tol: float = 1e-8
    sigma2_floor: float = 1e-12
    boundary_tol: float = 1e-7


@dataclass(frozen=True)
class LmeProblem:
    """Response, fixed design (intercept first), and group labels.

    The random-effect design row of each observation equals its fixed
    design row, so the per-group random effect has the same width q.
    """

    y: np.ndarray
    x: np.ndarray
    groups: np.ndarray
    n_groups: int

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.float64)
        x = np.asarray(self.x, dtype=np.float64)
        groups = np.asarray(self.groups)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "groups", groups.astype(np.int64))
        if y.ndim != 1 or x.ndim != 2 or x.shape[0] != y.shape[0]:
            raise ValueError("response and design shapes disagree")
        if y.shape[0] < 1:
            raise ValueError("empty problem")
        if groups.shape != y.shape:
            raise ValueError("group labels must align with the response")
        if self.n_groups < 1:
            raise ValueError("need at least one group")
        if groups.size and (groups.min() < 0 or groups.max() >= self.n_groups):
            raise ValueError("group labels out of range")
        if not np.allclose(x[:, 0], 1.0):
            raise ValueError("first design column must be the intercept")

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def q(self) -> int:
        return self.x.shape[1]


@dataclass(frozen=True)
class LmeFit:
    """ML optimum: fixed effects, per-group effect modes, covariances."""

    beta: np.ndarray          # (q,)
    blups: np.ndarray         # (n_groups, q)
    sigma2: float
    cov_re: np.ndarray        # (q, q) random-effect covariance
    loglik: float
    converged: bool
    boundary: bool
    theta: np.ndarray | None = field(repr=False, default=None)
    n_evals: int = 0

    @property
    def q(self) -> int:
        return self.beta.shape[0]

    @property
    def n_groups(self) -> int:
        return self.blups.shape[0]

    def group_coefficients(self, group: int) -> np.ndarray:
        """Group-specific coefficient vector (fixed effects plus BLUP)."""
        return self.beta + self.blups[group]


@dataclass(frozen=True)
class ProfiledDeviance:
    deviance: float
    beta: np.ndarray
    sigma2: float
    blups: np.ndarray


def _suff_stats(problem: LmeProblem):
    q = problem.q
    cmat = np.zeros((problem.n_groups, q, q))
    dvec = np.zeros((problem.n_groups, q))
    for g in range(problem.n_groups):
        rows = problem.groups == g
        xg = problem.x[rows]
        cmat[g] = xg.T @ xg
        dvec[g] = xg.T @ problem.y[rows]
    yty = float(problem.y @ problem.y)
    return cmat, dvec, yty


def _identity_theta(q: int) -> np.ndarray:
    theta = np.zeros(q * (q + 1) // 2)
    idx = 0
    for i in range(q):
        for j in range(i + 1):
            if i == j:
                theta[idx] = 1.0
            idx += 1
    return theta


def _moment_start(problem: LmeProblem) -> np.ndarray | None:
    """Relative factor seeded from the spread of per-group regressions.

    The between-group covariance of per-group OLS coefficients over the
    pooled residual variance estimates the relative covariance directly;
    it lands the simplex search in the right basin when the groups differ
    a lot. None when some group is too small to regress.
    """
    q = problem.q
    coefs = np.zeros((problem.n_groups, q))
    resid_var = []
    for g in range(problem.n_groups):
        rows = problem.groups == g
        ng = int(rows.sum())
        if ng < q + 1:
            return None
        xg = problem.x[rows]
        yg = problem.y[rows]
        c, *_ = np.linalg.lstsq(xg, yg, rcond=None)
        if not np.all(np.isfinite(c)):
            return None
        coefs[g] = c
        r = yg - xg @ c
        resid_var.append(float(r @ r) / ng)
    s2 = max(float(np.mean(resid_var)), 1e-12)
    centered = coefs - coefs.mean(axis=0)
    cov_b = centered.T @ centered / problem.n_groups
    lam = np.linalg.cholesky(cov_b / s2 + 1e-8 * np.eye(q))
    theta = np.empty(q * (q + 1) // 2)
    idx = 0
    for i in range(q):
        for j in range(i + 1):
            theta[idx] = lam[i, j]
            idx += 1
    return theta


def profiled_deviance(
    problem: LmeProblem,
    theta: np.ndarray,
    config: LmeConfig | None = None,
) -> ProfiledDeviance:
    """Deviance at a given relative factor, with profiled (beta, sigma2, blups).

    A numerically singular fixed-effect system yields deviance +inf so a
    surrounding optimizer steps away from it.
    """
    cfg = config or LmeConfig()
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (problem.q * (problem.q + 1) // 2,):
        raise ValueError("theta has wrong length for this design width")
    cmat, dvec, yty = _suff_stats(problem)
    dev, beta, u, sigma2, _, ok = kernels.pls_deviance(
        cmat, dvec, yty, problem.n, theta, cfg.sigma2_floor
    )
    if not ok:
        return ProfiledDeviance(
            np.inf, np.full(problem.q, np.nan), np.nan,
            np.zeros((problem.n_groups, problem.q)),
        )
    lam = kernels.theta_to_lam(theta, problem.q)
    blups = u @ lam.T
    return ProfiledDeviance(float(dev), beta, float(sigma2), blups)


def fit_lme(problem: LmeProblem, config: LmeConfig | None = None) -> LmeFit:
    """Maximize the marginal likelihood over the relative covariance factor.

    Starts at the identity factor; boundary (singular covariance) fits are
    legal and flagged. Deterministic for identical inputs and config.
    """
    cfg = config or LmeConfig()
    q = problem.q
    if problem.n <= q:
        raise NumericError(
            f"need more observations than design columns (n={problem.n}, q={q})"
        )
    if np.linalg.matrix_rank(problem.x) < q:
        raise NumericError("collinear parents: fixed design is rank deficient")

    cmat, dvec, yty = _suff_stats(problem)
    starts = [_identity_theta(q)]
    moment = _moment_start(problem)
    if moment is not None:
        starts.append(moment)
    budget = cfg.max_evals_per_q2 * q * q // len(starts)
    theta, dev, n_evals, converged = None, np.inf, 0, False
    for start in starts:
        t, d, used, conv = kernels.nm_minimize_deviance(
            cmat, dvec, yty, problem.n, start, budget, cfg.rel_tol, cfg.sigma2_floor
        )
        n_evals += used
        if d < dev:
            theta, dev, converged = t, d, conv
    dev, beta, u, sigma2, _, ok = kernels.pls_deviance(
        cmat, dvec, yty, problem.n, theta, cfg.sigma2_floor
    )
    if not ok:
        raise NumericError("collinear parents: penalized system is singular")
    lam = kernels.theta_to_lam(theta, q)
    blups = u @ lam.T
    cov_re = float(sigma2) * (lam @ lam.T)
    boundary = bool(np.min(np.diag(lam)) <= cfg.boundary_tol)
    return LmeFit(
        beta=beta,
        blups=blups,
        sigma2=float(sigma2),
        cov_re=cov_re,
        loglik=-0.5 * float(dev),
        converged=bool(converged),
        boundary=boundary,
        theta=theta,
        n_evals=int(n_evals),
    )


def lme_group_predict(fit: LmeFit, group: int, parent_values: np.ndarray) -> float:
    """Group-specific linear predictor at the given parent values."""
    if not 0 <= group < fit.n_groups:
        raise ValueError(f"group {group} out of range")
    coef = fit.group_coefficients(group)
    parent_values = np.asarray(parent_values, dtype=np.float64)
    if parent_values.shape != (fit.q - 1,):
        raise ValueError("parent values must match the number of slopes")
    return float(coef[0] + coef[1:] @ parent_values)
