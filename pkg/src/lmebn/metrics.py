"""Accuracy metrics: structural distance, KL divergence, predictive error,
classification score, and the samples-per-parameter ratio.

KL is defined over the joint of the continuous variables and the group:
a prior term plus the prior-weighted Gaussian KL per group. Pooled models
enter through an attached group prior so that all three strategies are
measured on the same scale; a Monte-Carlo KL over the continuous marginal
alone is available as a secondary diagnostic.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericError
from .graph import Dag, to_cpdag
from .model import BnModel, GroupJoint, compile_joint
from .simgen import TrueBn


@dataclass(frozen=True)
class MetricRow:
    shd: int
    kl: float
    kl_mc_xonly: float
    rmad_known_f: float
    rmad_unknown_f: float
    f1: float
    n_over_p: float


def shd(g1: Dag, g2: Dag) -> int:
    """Structural Hamming distance between the equivalence classes.

    Counts, per node pair, insertions, deletions, and orientation changes
    between the two completed partially directed graphs.
    """
    if set(g1.nodes) != set(g2.nodes):
        raise ValueError("graphs must share one node set")
    c1 = to_cpdag(g1)
    c2 = to_cpdag(g2)
    dist = 0
    for a, b in itertools.combinations(sorted(g1.nodes), 2):
        if c1.edge_status(a, b) != c2.edge_status(a, b):
            dist += 1
    return dist


def extend_with_isolated_group_node(dag: Dag, group_node: str) -> Dag:
    """Add the group node with no arcs (pooled models do not model it)."""
    if group_node in dag.nodes:
        return dag
    return Dag(dag.nodes + (group_node,), dag.arcs, group_node=group_node)


def gaussian_kl(mu0, s0, mu1, s1) -> float:
    """KL(N(mu0, s0) || N(mu1, s1)) in nats, closed form."""
    mu0 = np.asarray(mu0, dtype=np.float64)
    mu1 = np.asarray(mu1, dtype=np.float64)
    s0 = np.atleast_2d(np.asarray(s0, dtype=np.float64))
    s1 = np.atleast_2d(np.asarray(s1, dtype=np.float64))
    d = mu0.shape[0]
    try:
        c1 = np.linalg.cholesky(s1)
        c0 = np.linalg.cholesky(s0)
    except np.linalg.LinAlgError:
        raise NumericError("covariance inputs must be positive definite")
    trace = float(np.trace(np.linalg.solve(c1.T, np.linalg.solve(c1, s0))))
    diff = mu1 - mu0
    z = np.linalg.solve(c1, diff)
    quad = float(z @ z)
    logdet = 2.0 * float(np.sum(np.log(np.diag(c1))) - np.sum(np.log(np.diag(c0))))
    return 0.5 * (trace + quad - d + logdet)


def joint_kl(true_joint: GroupJoint, learned_joint: GroupJoint) -> float:
    """KL over (continuous variables, group), true relative to learned."""
    if set(true_joint.nodes) != set(learned_joint.nodes):
        raise ValueError("joints must cover the same nodes")
    perm = [learned_joint.nodes.index(n) for n in true_joint.nodes]
    if true_joint.n_groups != learned_joint.n_groups:
        raise ValueError("joints must have the same group count")
    total = 0.0
    for j in range(true_joint.n_groups):
        pj = float(true_joint.probs[j])
        if pj == 0.0:
            continue
        qj = float(learned_joint.probs[j])
        if qj == 0.0:
            return np.inf
        mu1 = learned_joint.means[j][perm]
        s1 = learned_joint.covs[j][np.ix_(perm, perm)]
        total += pj * (
            math.log(pj / qj)
            + gaussian_kl(true_joint.means[j], true_joint.covs[j], mu1, s1)
        )
    return total


def model_kl(true: TrueBn, learned: BnModel) -> float:
    """Joint KL from the generating model to a learned one."""
    return joint_kl(compile_joint(true.to_bn_model()), compile_joint(learned))


def _mixture_logpdf(joint: GroupJoint, x: np.ndarray, perm=None) -> np.ndarray:
    from .infer import _mvn_logpdf_rows

    g = joint.n_groups
    logp = np.full((x.shape[0], g), -np.inf)
    for j in range(g):
        if joint.probs[j] <= 0:
            continue
        mu = joint.means[j] if perm is None else joint.means[j][perm]
        cov = joint.covs[j] if perm is None else joint.covs[j][np.ix_(perm, perm)]
        logp[:, j] = math.log(float(joint.probs[j])) + _mvn_logpdf_rows(x, mu, cov)
    shift = logp.max(axis=1, keepdims=True)
    return shift[:, 0] + np.log(np.exp(logp - shift).sum(axis=1))


def mc_joint_kl(true_joint: GroupJoint, learned_joint: GroupJoint, n_samples: int, seed):
    """Monte-Carlo estimate (and standard error) of the joint KL."""
    from .infer import _mvn_logpdf_rows

    rng = np.random.default_rng(seed)
    perm = [learned_joint.nodes.index(n) for n in true_joint.nodes]
    groups = rng.choice(true_joint.n_groups, size=n_samples, p=np.asarray(true_joint.probs))
    diffs = np.empty(n_samples)
    for j in range(true_joint.n_groups):
        rows = groups == j
        m = int(rows.sum())
        if not m:
            continue
        chol = np.linalg.cholesky(true_joint.covs[j])
        x = true_joint.means[j] + rng.standard_normal((m, len(true_joint.nodes))) @ chol.T
        logp_true = math.log(float(true_joint.probs[j])) + _mvn_logpdf_rows(
            x, true_joint.means[j], true_joint.covs[j]
        )
        if learned_joint.probs[j] <= 0:
            diffs[rows] = np.inf
            continue
        logp_learned = math.log(float(learned_joint.probs[j])) + _mvn_logpdf_rows(
            x, learned_joint.means[j][perm], learned_joint.covs[j][np.ix_(perm, perm)]
        )
        diffs[rows] = logp_true - logp_learned
    est = float(diffs.mean())
    se = float(diffs.std(ddof=1) / math.sqrt(n_samples))
    return est, se


def mc_xmarginal_kl(true_joint: GroupJoint, learned_joint: GroupJoint, n_samples: int, seed):
    """Monte-Carlo KL between the continuous marginals (group integrated out)."""
    rng = np.random.default_rng(seed)
    perm = [learned_joint.nodes.index(n) for n in true_joint.nodes]
    groups = rng.choice(true_joint.n_groups, size=n_samples, p=np.asarray(true_joint.probs))
    x = np.empty((n_samples, len(true_joint.nodes)))
    for j in range(true_joint.n_groups):
        rows = groups == j
        m = int(rows.sum())
        if not m:
            continue
        chol = np.linalg.cholesky(true_joint.covs[j])
        x[rows] = true_joint.means[j] + rng.standard_normal((m, len(true_joint.nodes))) @ chol.T
    diffs = _mixture_logpdf(true_joint, x) - _mixture_logpdf(learned_joint, x, perm)
    est = float(diffs.mean())
    se = float(diffs.std(ddof=1) / math.sqrt(n_samples))
    return est, se


def rmad(observed: np.ndarray, predicted: np.ndarray, zero_tol: float = 1e-12):
    """Mean over nodes of the mean absolute relative prediction error.

    Observations smaller than ``zero_tol`` in magnitude are skipped (the
    ratio is undefined there); the skip count is returned alongside.
    """
    observed = np.asarray(observed, dtype=np.float64)
    predicted = np.asarray(predicted, dtype=np.float64)
    if observed.shape != predicted.shape:
        raise ValueError("observed and predicted shapes differ")
    valid = np.abs(observed) >= zero_tol
    skipped = int(observed.size - valid.sum())
    per_node = np.zeros(observed.shape[1])
    for i in range(observed.shape[1]):
        rows = valid[:, i]
        if not rows.any():
            per_node[i] = np.nan
            continue
        ratio = np.abs((observed[rows, i] - predicted[rows, i]) / observed[rows, i])
        per_node[i] = ratio.mean()
    return float(np.nanmean(per_node)), skipped


def macro_f1(truth, predicted, n_classes: int) -> float:
    """Mean one-vs-rest F1; with two classes, the F1 of the first class.

    A class never predicted and never present contributes zero.
    """
    truth = np.asarray(truth, dtype=np.int64)
    predicted = np.asarray(predicted, dtype=np.int64)
    if truth.shape != predicted.shape:
        raise ValueError("label vectors must align")

    def one_vs_rest(c: int) -> float:
        tp = int(np.sum((predicted == c) & (truth == c)))
        fp = int(np.sum((predicted == c) & (truth != c)))
        fn = int(np.sum((predicted != c) & (truth == c)))
        if 2 * tp + fp + fn == 0:
            return 0.0
        return 2.0 * tp / (2 * tp + fp + fn)

    if n_classes == 2:
        return one_vs_rest(0)
    return float(np.mean([one_vs_rest(c) for c in range(n_classes)]))


def samples_per_parameter(sizes, true_bn: TrueBn) -> float:
    """Total sample size over the generating model's parameter count."""
    return float(sum(int(s) for s in sizes)) / true_bn.parameter_count()
