"""Prediction and group classification on fitted models.

The exact engine works on the compiled per-group joint Gaussians through
standard conditioning; the likelihood-weighting engine mirrors it with
importance-weighted forward samples and is cross-checked against it. All
density work happens in log domain with max-shift normalization.
"""

from __future__ import annotations

from dataclasses import dataclass

import math

import numpy as np

from .errors import NumericError
from .graph import topological_order
from .model import BnModel, GroupJoint, GroupedDataset, compile_joint, local_group_params

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class Evidence:
    """Observed continuous values by node name, plus optional group label."""

    values: dict[str, float]
    group_label: str | None = None


def _mvn_logpdf_rows(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    """Log density of each row of x under one multivariate normal."""
    d = mean.shape[0]
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise NumericError("covariance block is not positive definite")
    z = np.linalg.solve(chol, (x - mean).T)
    quad = np.sum(z * z, axis=0)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    return -0.5 * (d * LOG_2PI + logdet + quad)


def _log_posterior_groups(joint: GroupJoint, x: np.ndarray, obs_idx) -> np.ndarray:
    """Unnormalized then normalized log posterior over groups given a subset.

    x has shape (rows, len(obs_idx)); returns (rows, G) normalized probs.
    """
    rows = x.shape[0]
    g = joint.n_groups
    logw = np.empty((rows, g))
    for j in range(g):
        if len(obs_idx):
            logw[:, j] = _mvn_logpdf_rows(
                x, joint.means[j][obs_idx], joint.covs[j][np.ix_(obs_idx, obs_idx)]
            )
        else:
            logw[:, j] = 0.0
        logw[:, j] += math.log(float(joint.probs[j])) if joint.probs[j] > 0 else -np.inf
    shift = logw.max(axis=1, keepdims=True)
    w = np.exp(logw - shift)
    return w / w.sum(axis=1, keepdims=True)


def classify_group(model: BnModel, x: np.ndarray, joint: GroupJoint | None = None):
    """Posterior over groups for one complete row; argmax breaks ties by label."""
    joint = joint if joint is not None else compile_joint(model)
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    post = _log_posterior_groups(joint, x, list(range(len(joint.nodes))))[0]
    best = min(
        (label for i, label in enumerate(model.group_labels) if post[i] == post.max()),
    )
    return post, best


def exact_conditional_mean(
    model: BnModel,
    evidence: Evidence,
    target: str,
    joint: GroupJoint | None = None,
) -> float:
    """Posterior mean of one node given observed values (and maybe the group).

    Group known: the Gaussian conditional mean inside that group. Unknown:
    the mixture of per-group conditional means weighted by the group
    posterior given the observed subset.
    """
    joint = joint if joint is not None else compile_joint(model)
    if target in evidence.values:
        raise ValueError(f"target {target!r} is observed")
    nodes = joint.nodes
    t = nodes.index(target)
    obs_idx = [nodes.index(k) for k in sorted(evidence.values)]
    x_obs = np.array([evidence.values[nodes[i]] for i in obs_idx])

    def cond_mean(j: int) -> float:
        mu = joint.means[j]
        cov = joint.covs[j]
        if not obs_idx:
            return float(mu[t])
        coo = cov[np.ix_(obs_idx, obs_idx)]
        cto = cov[t, obs_idx]
        try:
            w = np.linalg.solve(coo, x_obs - mu[obs_idx])
        except np.linalg.LinAlgError:
            raise NumericError("singular observed-block covariance")
        return float(mu[t] + cto @ w)

    if evidence.group_label is not None:
        j = model.group_labels.index(evidence.group_label)
        return cond_mean(j)
    post = _log_posterior_groups(joint, x_obs.reshape(1, -1), obs_idx)[0]
    return float(sum(post[j] * cond_mean(j) for j in range(joint.n_groups)))


@dataclass(frozen=True)
class LwEstimate:
    means: dict[str, float]
    effective_sample_size: float


def likelihood_weighting(
    model: BnModel,
    evidence: Evidence,
    targets,
    n_samples: int = 10_000,
    seed=0,
) -> LwEstimate:
    """Importance-weighted posterior means of the target nodes.

    Unobserved nodes are forward-sampled in topological order (the group
    from its prior when unknown); each particle's log weight accumulates
    the densities of the observed nodes at their observed values.
    """
    if model.group_prior is None:
        raise ValueError("model has no group prior; attach one first")
    if n_samples < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(seed)
    nodes = model.nodes
    index = {n: i for i, n in enumerate(nodes)}
    order = [n for n in topological_order(model.dag) if n != model.dag.group_node]
    prior = np.asarray(model.group_prior, dtype=np.float64)

    if evidence.group_label is not None:
        j = model.group_labels.index(evidence.group_label)
        groups = np.full(n_samples, j)
        logw = np.full(n_samples, math.log(float(prior[j])) if prior[j] > 0 else -np.inf)
    else:
        groups = rng.choice(model.n_groups, size=n_samples, p=prior)
        logw = np.zeros(n_samples)

    x = np.zeros((n_samples, len(nodes)))
    for node in order:
        i = index[node]
        local = model.locals[node]
        pidx = [index[p] for p in local.parents]
        observed = node in evidence.values
        noise = None if observed else rng.standard_normal(n_samples)
        for j in range(model.n_groups):
            rows = groups == j
            if not rows.any():
                continue
            intercept, slopes, variance = local_group_params(local, j)
            pred = intercept + (x[rows][:, pidx] @ slopes if pidx else 0.0)
            if observed:
                val = evidence.values[node]
                x[rows, i] = val
                resid = val - pred
                logw[rows] += (
                    -0.5 * (LOG_2PI + math.log(variance))
                    - 0.5 * resid * resid / variance
                )
            else:
                x[rows, i] = pred + noise[rows] * math.sqrt(variance)

    shift = logw.max()
    if not np.isfinite(shift):
        raise NumericError(
            "all likelihood weights vanished; increase the sample count or use the exact engine"
        )
    w = np.exp(logw - shift)
    wsum = float(w.sum())
    if wsum <= 0.0:
        raise NumericError(
            "all likelihood weights vanished; increase the sample count or use the exact engine"
        )
    ess = wsum * wsum / float(w @ w)
    means = {t: float((w @ x[:, index[t]]) / wsum) for t in targets}
    return LwEstimate(means, ess)


def predict_all(
    model: BnModel,
    dataset: GroupedDataset,
    know_group: bool,
    engine: str = "exact",
    n_samples: int = 10_000,
    seed=0,
) -> np.ndarray:
    """Leave-one-node-out predictions for every row and node.

    Each entry (row, node) is the posterior mean of that node given all
    other continuous values, plus the row's group label when known.
    """
    if engine not in ("exact", "lw"):
        raise ValueError(f"unknown engine {engine!r}")
    nodes = model.nodes
    col = {n: dataset.columns.index(n) for n in nodes}
    out = np.zeros((dataset.n, len(nodes)))
    if engine == "lw":
        for r in range(dataset.n):
            for ti, t in enumerate(nodes):
                ev = Evidence(
                    {n: float(dataset.x[r, col[n]]) for n in nodes if n != t},
                    dataset.group_labels[dataset.groups[r]] if know_group else None,
                )
                est = likelihood_weighting(model, ev, [t], n_samples, seed)
                out[r, ti] = est.means[t]
                seed = seed + 1 if isinstance(seed, int) else seed
        return out

    joint = compile_joint(model)
    x = dataset.x[:, [col[n] for n in nodes]]
    g = joint.n_groups
    nn = len(nodes)
    for ti in range(nn):
        obs_idx = [i for i in range(nn) if i != ti]
        x_obs = x[:, obs_idx]
        cond = np.zeros((g, dataset.n))
        for j in range(g):
            mu = joint.means[j]
            cov = joint.covs[j]
            coo = cov[np.ix_(obs_idx, obs_idx)]
            cto = cov[ti, obs_idx]
            try:
                w = np.linalg.solve(coo, cto)
            except np.linalg.LinAlgError:
                raise NumericError("singular observed-block covariance")
            cond[j] = mu[ti] + (x_obs - mu[obs_idx]) @ w
        if know_group:
            for j in range(g):
                rows = dataset.groups == j
                out[rows, ti] = cond[j][rows]
        else:
            post = _log_posterior_groups(joint, x_obs, obs_idx)
            out[:, ti] = np.sum(post.T * cond, axis=0)
    return out
