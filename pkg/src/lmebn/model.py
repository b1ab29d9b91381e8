"""Bayesian-network model classes over grouped continuous data.

Three pooling strategies share one surface: complete pooling (one linear
Gaussian per node, group ignored), no pooling (an independent regression
per group), and partial pooling (mixed-effects locals with shrinkage
toward the shared coefficients). Fitted models compile, per group, to an
exact joint Gaussian used by the evaluation metrics and by inference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Union

import numpy as np

from .errors import DataError, NumericError
from .graph import Dag, topological_order
from .lme import LmeConfig, LmeFit, LmeProblem, fit_lme

STRATEGIES = ("gbn", "cgbn", "lme")

LOG_2PI = math.log(2.0 * math.pi)

# relative floor for degenerate per-group fits; keeps the no-pooling model
# runnable when a group has fewer rows than local parameters
DEGENERATE_VAR_SCALE = 1e-6
ABS_VAR_FLOOR = 1e-12


@dataclass(frozen=True)
class GroupedDataset:
    """Complete table of continuous columns plus one group-label column.

    Arrays are treated as immutable after construction.
    """

    columns: tuple[str, ...]
    x: np.ndarray              # (n, N) float64
    groups: np.ndarray         # (n,) int codes into group_labels
    group_labels: tuple[str, ...]

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        groups = np.asarray(self.groups, dtype=np.int64)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "groups", groups)
        if x.ndim != 2 or x.shape[1] != len(self.columns):
            raise DataError("data matrix does not match the declared columns")
        if groups.shape != (x.shape[0],):
            raise DataError("group column does not align with the data rows")
        if len(set(self.columns)) != len(self.columns):
            raise DataError("duplicate column names")
        if not np.all(np.isfinite(x)):
            bad = np.argwhere(~np.isfinite(x))[0]
            raise DataError(
                f"missing or non-finite value at row {bad[0]}, column {self.columns[bad[1]]!r}"
            )
        if groups.size and (groups.min() < 0 or groups.max() >= len(self.group_labels)):
            raise DataError("group code outside the declared label set")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def n_groups(self) -> int:
        return len(self.group_labels)

    def group_counts(self) -> np.ndarray:
        return np.bincount(self.groups, minlength=self.n_groups)

    def column(self, name: str) -> np.ndarray:
        return self.x[:, self.columns.index(name)]


@dataclass(frozen=True)
class PooledLocal:
    """One shared linear Gaussian for all groups."""

    parents: tuple[str, ...]
    intercept: float
    coefs: np.ndarray          # (k,)
    variance: float


@dataclass(frozen=True)
class PerGroupLocal:
    """An independent linear Gaussian per group."""

    parents: tuple[str, ...]
    intercepts: np.ndarray     # (G,)
    coefs: np.ndarray          # (G, k)
    variances: np.ndarray      # (G,)
    degenerate: np.ndarray     # (G,) bool; variance clamp / pseudoinverse used


@dataclass(frozen=True)
class MixedLocal:
    """Mixed-effects local: shared coefficients plus per-group deviations."""

    parents: tuple[str, ...]
    fit: LmeFit


LocalDistribution = Union[PooledLocal, PerGroupLocal, MixedLocal]


def local_group_params(local: LocalDistribution, group: int):
    """(intercept, slopes, variance) of a local distribution within a group."""
    if isinstance(local, PooledLocal):
        return local.intercept, local.coefs, local.variance
    if isinstance(local, PerGroupLocal):
        return local.intercepts[group], local.coefs[group], local.variances[group]
    coef = local.fit.group_coefficients(group)
    return coef[0], coef[1:], local.fit.sigma2


@dataclass(frozen=True)
class BnModel:
    """A fitted network: DAG, strategy, group prior, one local per node."""

    dag: Dag
    strategy: str
    group_labels: tuple[str, ...]
    group_prior: np.ndarray | None
    locals: dict[str, LocalDistribution]
    score: float | None = None

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.group_prior is not None:
            prior = np.asarray(self.group_prior, dtype=np.float64)
            object.__setattr__(self, "group_prior", prior)
            if prior.shape != (len(self.group_labels),):
                raise ValueError("group prior does not match the label set")
            if abs(float(prior.sum()) - 1.0) > 1e-9 or (prior < 0).any():
                raise ValueError("group prior is not a probability vector")
        expected = {
            "gbn": PooledLocal, "cgbn": PerGroupLocal, "lme": MixedLocal,
        }[self.strategy]
        for node, local in self.locals.items():
            if not isinstance(local, expected):
                raise ValueError(
                    f"strategy {self.strategy!r} requires {expected.__name__} locals, "
                    f"got {type(local).__name__} for {node!r}"
                )

    @property
    def nodes(self) -> tuple[str, ...]:
        return self.dag.continuous_nodes

    @property
    def n_groups(self) -> int:
        return len(self.group_labels)

    @property
    def has_degenerate_locals(self) -> bool:
        return any(
            isinstance(l, PerGroupLocal) and bool(l.degenerate.any())
            for l in self.locals.values()
        )


@dataclass(frozen=True)
class GroupJoint:
    """Per-group joint Gaussian over the continuous nodes, plus group probs."""

    nodes: tuple[str, ...]
    means: np.ndarray          # (G, N)
    covs: np.ndarray           # (G, N, N)
    probs: np.ndarray          # (G,)

    @property
    def n_groups(self) -> int:
        return self.means.shape[0]


def nparams(strategy: str, k: int, n_groups: int) -> int:
    """Free-parameter count of one local distribution with k parents."""
    if k < 0 or n_groups < 1:
        raise ValueError("need k >= 0 and at least one group")
    if strategy == "gbn":
        return k + 2
    if strategy == "cgbn":
        return (k + 2) * n_groups
    if strategy == "lme":
        return (k * k + 5 * k + 6) // 2
    raise ValueError(f"unknown strategy {strategy!r}")


def _design(data: GroupedDataset, parents: tuple[str, ...], rows=None) -> np.ndarray:
    cols = [data.columns.index(p) for p in parents]
    x = data.x if rows is None else data.x[rows]
    return np.column_stack([np.ones(x.shape[0]), x[:, cols]]) if cols else np.ones(
        (x.shape[0], 1)
    )


def ols_ml(x: np.ndarray, y: np.ndarray, var_floor: float = ABS_VAR_FLOOR):
    """OLS coefficients with the ML (divide by n) residual variance.

    Falls back to the pseudoinverse on rank-deficient designs; returns
    (coef, variance, loglik, degenerate).
    """
    n, q = x.shape
    degenerate = n < q + 1
    xtx = x.T @ x
    xty = x.T @ y
    try:
        coef = np.linalg.solve(xtx, xty)
        if not np.all(np.isfinite(coef)):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        coef = np.linalg.pinv(x) @ y
        degenerate = True
    resid = y - x @ coef
    rss = float(resid @ resid)
    sigma2 = rss / n if n else var_floor
    if sigma2 < var_floor:
        sigma2 = var_floor
        degenerate = True
    loglik = -0.5 * n * (LOG_2PI + math.log(sigma2)) - 0.5 * rss / sigma2
    return coef, sigma2, loglik, degenerate


def _fit_pooled(data, node, parents) -> PooledLocal:
    x = _design(data, parents)
    y = data.column(node)
    coef, sigma2, _, _ = ols_ml(x, y)
    return PooledLocal(parents, float(coef[0]), coef[1:].copy(), float(sigma2))


def _fit_per_group(data, node, parents) -> PerGroupLocal:
    g = data.n_groups
    k = len(parents)
    y_all = data.column(node)
    node_var = float(np.var(y_all)) if data.n > 1 else 1.0
    floor = max(DEGENERATE_VAR_SCALE * node_var, ABS_VAR_FLOOR)
    intercepts = np.zeros(g)
    coefs = np.zeros((g, k))
    variances = np.full(g, floor)
    degenerate = np.zeros(g, dtype=bool)
    for j in range(g):
        rows = data.groups == j
        nj = int(rows.sum())
        if nj == 0:
            degenerate[j] = True
            continue
        x = _design(data, parents, rows)
        coef, sigma2, _, deg = ols_ml(x, y_all[rows], var_floor=floor)
        intercepts[j] = coef[0]
        coefs[j] = coef[1:]
        variances[j] = sigma2
        degenerate[j] = deg
    return PerGroupLocal(parents, intercepts, coefs, variances, degenerate)


def _fit_mixed(data, node, parents, lme_config) -> MixedLocal:
    x = _design(data, parents)
    problem = LmeProblem(data.column(node), x, data.groups, data.n_groups)
    try:
        fit = fit_lme(problem, lme_config)
    except NumericError as exc:
        raise NumericError(f"node {node!r}, parents {list(parents)}: {exc}") from exc
    return MixedLocal(parents, fit)


def fit_parameters(
    dag: Dag,
    data: GroupedDataset,
    strategy: str,
    lme_config: LmeConfig | None = None,
) -> BnModel:
    """Fit all local distributions of a fixed DAG under one strategy.

    Complete pooling regresses on all rows and ignores the group column;
    no pooling fits each group separately (degenerate groups are clamped
    and flagged, not rejected); partial pooling fits the mixed model. The
    group prior is the empirical group frequency, left absent for the
    pooled strategy which does not model the group at all.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    group_node = dag.group_node
    if strategy == "gbn":
        if group_node is not None:
            raise ValueError("complete pooling expects a graph without the group node")
    else:
        if group_node is None:
            raise ValueError(f"strategy {strategy!r} needs the group node in the graph")
        missing = [
            n for n in dag.continuous_nodes if group_node not in dag.parents(n)
        ]
        if missing:
            raise ValueError(f"group node must be a parent of every node; missing {missing}")
    unknown = set(dag.continuous_nodes) - set(data.columns)
    if unknown:
        raise DataError(f"graph nodes absent from the data: {sorted(unknown)}")

    locals_: dict[str, LocalDistribution] = {}
    for node in dag.continuous_nodes:
        parents = dag.continuous_parents(node)
        if strategy == "gbn":
            locals_[node] = _fit_pooled(data, node, parents)
        elif strategy == "cgbn":
            locals_[node] = _fit_per_group(data, node, parents)
        else:
            locals_[node] = _fit_mixed(data, node, parents, lme_config)

    prior = None
    if strategy != "gbn":
        prior = data.group_counts() / data.n
    return BnModel(dag, strategy, data.group_labels, prior, locals_)


def with_group_prior(model: BnModel, prior: np.ndarray) -> BnModel:
    """Attach a group prior (used to extend pooled models for evaluation)."""
    return replace(model, group_prior=np.asarray(prior, dtype=np.float64))


def empirical_prior(data: GroupedDataset) -> np.ndarray:
    return data.group_counts() / data.n


def compile_joint(model: BnModel) -> GroupJoint:
    """Exact per-group joint Gaussian implied by the local distributions.

    Mixed locals enter through their group-specific coefficient vectors;
    the effect-covariance itself is not propagated, so all three
    strategies compile the same way and stay comparable.
    """
    if model.group_prior is None:
        raise ValueError("model has no group prior; attach one before compiling")
    nodes = model.nodes
    index = {n: i for i, n in enumerate(nodes)}
    order = [n for n in topological_order(model.dag) if n != model.dag.group_node]
    g = model.n_groups
    nn = len(nodes)
    means = np.zeros((g, nn))
    covs = np.zeros((g, nn, nn))
    for j in range(g):
        for node in order:
            i = index[node]
            local = model.locals[node]
            intercept, slopes, variance = local_group_params(local, j)
            pidx = [index[p] for p in local.parents]
            if pidx:
                means[j, i] = intercept + slopes @ means[j, pidx]
                cross = slopes @ covs[j][np.ix_(pidx, range(nn))]
                covs[j, i, :] = cross
                covs[j, :, i] = cross
                covs[j, i, i] = slopes @ covs[j][np.ix_(pidx, pidx)] @ slopes + variance
            else:
                means[j, i] = intercept
                covs[j, i, i] = variance
        try:
            np.linalg.cholesky(covs[j])
        except np.linalg.LinAlgError:
            raise NumericError(
                f"compiled covariance for group {model.group_labels[j]!r} is not positive definite"
            )
    return GroupJoint(nodes, means, covs, np.asarray(model.group_prior, dtype=np.float64).copy())


def log_density(model: BnModel, row: np.ndarray, group_label: str) -> float:
    """Joint log density of one complete row and its group label."""
    if model.group_prior is None:
        raise ValueError("model has no group prior; attach one first")
    if group_label not in model.group_labels:
        raise DataError(f"unknown group label {group_label!r}")
    j = model.group_labels.index(group_label)
    row = np.asarray(row, dtype=np.float64)
    nodes = model.nodes
    if row.shape != (len(nodes),):
        raise ValueError("row length does not match the model nodes")
    index = {n: i for i, n in enumerate(nodes)}
    total = math.log(float(model.group_prior[j]))
    for node in nodes:
        local = model.locals[node]
        intercept, slopes, variance = local_group_params(local, j)
        pred = intercept + slopes @ row[[index[p] for p in local.parents]]
        resid = row[index[node]] - pred
        total += -0.5 * (LOG_2PI + math.log(variance)) - 0.5 * resid * resid / variance
    return float(total)


def sample_model(model: BnModel, count: int, seed) -> GroupedDataset:
    """Ancestral sampling: group from the prior, then nodes in topo order."""
    if model.group_prior is None:
        raise ValueError("model has no group prior; attach one first")
    rng = np.random.default_rng(seed)
    nodes = model.nodes
    index = {n: i for i, n in enumerate(nodes)}
    order = [n for n in topological_order(model.dag) if n != model.dag.group_node]
    groups = rng.choice(model.n_groups, size=count, p=np.asarray(model.group_prior))
    x = np.zeros((count, len(nodes)))
    for node in order:
        i = index[node]
        local = model.locals[node]
        pidx = [index[p] for p in local.parents]
        noise = rng.standard_normal(count)
        for j in range(model.n_groups):
            rows = groups == j
            if not rows.any():
                continue
            intercept, slopes, variance = local_group_params(local, j)
            pred = intercept + (x[rows][:, pidx] @ slopes if pidx else 0.0)
            x[rows, i] = pred + noise[rows] * math.sqrt(variance)
    return GroupedDataset(nodes, x, groups.astype(np.int64), model.group_labels)
