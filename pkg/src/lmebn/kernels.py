"""Numeric kernels for local-distribution fitting.

The hot loops live here: penalized least squares for the mixed-effects
deviance, the simplex minimizer driving it, and ordinary least squares
Gaussian likelihoods. Every kernel is plain loop/numpy code compiled with
numba's ``@njit`` when available; setting ``LMEBN_NO_NUMBA=1`` (or a failed
numba import) selects the uncompiled fallback. Both paths run the same
source, so they agree up to float rounding. ``benchmarks/bench_kernels.py``
times the two side by side.
"""

from __future__ import annotations

import math
import os

import numpy as np


def _numba_disabled() -> bool:
    return os.environ.get("LMEBN_NO_NUMBA", "").strip().lower() in {"1", "true", "yes"}


NUMBA_ENABLED = False
if not _numba_disabled():
    try:
        from numba import njit as _njit

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        pass


def _maybe_jit(fn):
    if NUMBA_ENABLED:
        return _njit(cache=True)(fn)
    return fn


LOG_2PI = math.log(2.0 * math.pi)


def _chol_lower(a):
    """Cholesky factor of a symmetric matrix; ok=False when not PD."""
    n = a.shape[0]
    low = np.zeros((n, n))
    for j in range(n):
        s = a[j, j]
        for k in range(j):
            s -= low[j, k] * low[j, k]
        if s <= 0.0:
            return low, False
        low[j, j] = math.sqrt(s)
        for i in range(j + 1, n):
            t = a[i, j]
            for k in range(j):
                t -= low[i, k] * low[j, k]
            low[i, j] = t / low[j, j]
    return low, True


chol_lower = _maybe_jit(_chol_lower)


def _chol_solve(low, b):
    """Solve (L L^T) x = b given the lower Cholesky factor L."""
    n = low.shape[0]
    x = b.copy()
    for i in range(n):
        s = x[i]
        for k in range(i):
            s -= low[i, k] * x[k]
        x[i] = s / low[i, i]
    for i in range(n - 1, -1, -1):
        s = x[i]
        for k in range(i + 1, n):
            s -= low[k, i] * x[k]
        x[i] = s / low[i, i]
    return x


chol_solve = _maybe_jit(_chol_solve)


def _ols_loglik(xtx, xty, yty, n, var_floor):
    """ML Gaussian regression from sufficient statistics.

    Returns (coef, sigma2, loglik, ok); ok=False on a rank-deficient
    design, in which case the caller falls back to a pseudoinverse fit.
    """
    q = xtx.shape[0]
    low, ok = chol_lower(xtx)
    if not ok:
        return np.zeros(q), 0.0, 0.0, False
    coef = chol_solve(low, xty)
    rss = yty - 2.0 * np.dot(coef, xty) + np.dot(coef, np.dot(xtx, coef))
    if rss < 0.0:
        rss = 0.0
    sigma2 = rss / n
    if sigma2 < var_floor:
        sigma2 = var_floor
    loglik = -0.5 * n * (LOG_2PI + math.log(sigma2)) - 0.5 * rss / sigma2
    return coef, sigma2, loglik, ok


ols_loglik = _maybe_jit(_ols_loglik)


def _theta_to_lam(theta, q):
    """Relative-covariance factor from packed lower-tri entries.

    Diagonal entries are clamped at zero, which doubles as the projection
    step for the bound-constrained simplex search.
    """
    lam = np.zeros((q, q))
    idx = 0
    for i in range(q):
        for j in range(i + 1):
            v = theta[idx]
            if i == j and v < 0.0:
                v = 0.0
            lam[i, j] = v
            idx += 1
    return lam


theta_to_lam = _maybe_jit(_theta_to_lam)


def _pls_deviance(cmat, dvec, yty, n, theta, sigma2_floor):
    """Profiled ML deviance of the grouped random-coefficient model.

    ``cmat[g] = X_g' X_g`` and ``dvec[g] = X_g' y_g`` are per-group
    sufficient statistics; the random-effect design equals the fixed one.
    With the relative factor L built from ``theta`` the fixed effects and
    residual variance are profiled out in closed form by solving the
    penalized normal equations group block by group block.

    Returns (deviance, beta, u, sigma2, logdet, ok). ``u[g]`` are the
    spherical random-effect modes; the BLUP for group g is ``L @ u[g]``.
    ok=False marks a singular fixed-effect system (collinear design) and
    the deviance is +inf so a minimizer steps away.
    """
    ngroups = cmat.shape[0]
    q = cmat.shape[1]
    lam = theta_to_lam(theta, q)
    beta = np.zeros(q)
    u = np.zeros((ngroups, q))

    smat = np.zeros((q, q))
    tvec = np.zeros(q)
    logdet = 0.0
    afac = np.zeros((ngroups, q, q))
    for g in range(ngroups):
        cl = np.dot(cmat[g], lam)
        amat = np.dot(lam.T, cl)
        for i in range(q):
            amat[i, i] += 1.0
        low, ok = chol_lower(amat)
        if not ok:
            return np.inf, beta, u, 0.0, 0.0, False
        afac[g] = low
        for i in range(q):
            logdet += 2.0 * math.log(low[i, i])
        ld = np.dot(lam.T, dvec[g])
        w = chol_solve(low, ld)
        tvec += dvec[g] - np.dot(cl, w)
        m = np.empty((q, q))
        clt = cl.T.copy()
        for c in range(q):
            m[:, c] = chol_solve(low, clt[:, c])
        smat += cmat[g] - np.dot(cl, m)

    slow, ok = chol_lower(smat)
    if not ok:
        return np.inf, beta, u, 0.0, 0.0, False
    beta = chol_solve(slow, tvec)

    r2 = yty
    for g in range(ngroups):
        rhs = np.dot(lam.T, dvec[g] - np.dot(cmat[g], beta))
        ug = chol_solve(afac[g], rhs)
        u[g] = ug
        coef = beta + np.dot(lam, ug)
        r2 += np.dot(coef, np.dot(cmat[g], coef)) - 2.0 * np.dot(coef, dvec[g])
        r2 += np.dot(ug, ug)
    if r2 < 0.0:
        r2 = 0.0
    sigma2 = r2 / n
    if sigma2 < sigma2_floor:
        sigma2 = sigma2_floor
    deviance = logdet + n * (LOG_2PI + math.log(sigma2)) + r2 / sigma2
    return deviance, beta, u, sigma2, logdet, True


pls_deviance = _maybe_jit(_pls_deviance)


def _nm_pass(cmat, dvec, yty, n, theta0, f0, step, max_evals, rel_tol, sigma2_floor):
    """One Nelder-Mead descent from theta0 with the given simplex step.

    Stops when the simplex deviance spread drops below ``rel_tol`` relative
    to the best value or the evaluation budget runs out. Returns
    (theta_best, deviance_best, n_evals, converged).
    """
    p = theta0.shape[0]
    verts = np.empty((p + 1, p))
    fvals = np.empty(p + 1)
    verts[0] = theta0
    fvals[0] = f0
    nev = 0
    for v in range(1, p + 1):
        verts[v] = theta0
        verts[v, v - 1] += step
        dev, _, _, _, _, _ = pls_deviance(cmat, dvec, yty, n, verts[v], sigma2_floor)
        fvals[v] = dev
        nev += 1

    converged = False
    while nev < max_evals:
        order = np.argsort(fvals)
        fbest = fvals[order[0]]
        fworst = fvals[order[p]]
        if fworst - fbest <= rel_tol * (1.0 + abs(fbest)):
            converged = True
            break

        centroid = np.zeros(p)
        for rank in range(p):
            centroid += verts[order[rank]]
        centroid /= p
        worst = order[p]
        second = fvals[order[p - 1]]

        refl = centroid + (centroid - verts[worst])
        frefl, _, _, _, _, _ = pls_deviance(cmat, dvec, yty, n, refl, sigma2_floor)
        nev += 1
        if frefl < fbest:
            exp = centroid + 2.0 * (centroid - verts[worst])
            fexp, _, _, _, _, _ = pls_deviance(cmat, dvec, yty, n, exp, sigma2_floor)
            nev += 1
            if fexp < frefl:
                verts[worst] = exp
                fvals[worst] = fexp
            else:
                verts[worst] = refl
                fvals[worst] = frefl
        elif frefl < second:
            verts[worst] = refl
            fvals[worst] = frefl
        else:
            if frefl < fvals[worst]:
                contr = centroid + 0.5 * (refl - centroid)
            else:
                contr = centroid + 0.5 * (verts[worst] - centroid)
            fcon, _, _, _, _, _ = pls_deviance(cmat, dvec, yty, n, contr, sigma2_floor)
            nev += 1
            if fcon < min(frefl, fvals[worst]):
                verts[worst] = contr
                fvals[worst] = fcon
            else:
                best = order[0]
                for v in range(p + 1):
                    if v == best:
                        continue
                    verts[v] = verts[best] + 0.5 * (verts[v] - verts[best])
                    dev, _, _, _, _, _ = pls_deviance(
                        cmat, dvec, yty, n, verts[v], sigma2_floor
                    )
                    fvals[v] = dev
                    nev += 1

    ibest = np.argmin(fvals)
    return verts[ibest].copy(), fvals[ibest], nev, converged


nm_pass = _maybe_jit(_nm_pass)


def _nm_minimize_deviance(cmat, dvec, yty, n, theta0, max_evals, rel_tol, sigma2_floor):
    """Simplex descent with restarts, seeded against the no-effect point.

    The zero factor (pooled regression) is always evaluated, so the result
    can never score below it; restart passes with shrinking steps pull the
    simplex off the plateaus it stalls on in higher dimensions. Returns
    (theta_best, deviance_best, n_evals, converged).
    """
    p = theta0.shape[0]
    f0, _, _, _, _, _ = pls_deviance(cmat, dvec, yty, n, theta0, sigma2_floor)
    zero = np.zeros(p)
    fz, _, _, _, _, _ = pls_deviance(cmat, dvec, yty, n, zero, sigma2_floor)
    nev = 2
    if fz < f0:
        best_theta, best_f = zero.copy(), fz
    else:
        best_theta, best_f = theta0.copy(), f0

    steps = np.array([0.5, 0.2, 0.05])
    converged = False
    for r in range(steps.shape[0]):
        if nev >= max_evals:
            break
        theta, f, used, conv = nm_pass(
            cmat, dvec, yty, n, best_theta, best_f, steps[r],
            max_evals - nev, rel_tol, sigma2_floor,
        )
        nev += used
        improved = best_f - f
        if f < best_f:
            best_theta, best_f = theta, f
        if conv and improved <= rel_tol * (1.0 + abs(best_f)):
            converged = True
            break
    return best_theta, best_f, nev, converged


nm_minimize_deviance = _maybe_jit(_nm_minimize_deviance)
