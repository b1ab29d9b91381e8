"""Decomposable BIC scoring with a per-node cache.

Each node's score is its maximized local log-likelihood minus
(log n / 2) times the local free-parameter count, with n the total number
of rows regardless of strategy. The group node itself contributes no term:
its arcs are fixed by the strategy constraints, so its score is a constant
shift that cannot change the ranking of candidate graphs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import NumericError
from .graph import Dag
from .lme import LmeConfig, LmeProblem, fit_lme
from .model import GroupedDataset, nparams, ols_ml, _design, DEGENERATE_VAR_SCALE, ABS_VAR_FLOOR

import numpy as np


@dataclass(frozen=True)
class NodeScore:
    node: str
    parents: tuple[str, ...]
    loglik: float
    penalty: float

    @property
    def total(self) -> float:
        return self.loglik - self.penalty


@dataclass
class ScoreCache:
    """Memo of node scores keyed by (node, canonical parent set, strategy).

    Entries are plain recomputation results, so hits are bit-identical to
    recomputing. A single search task owns and writes one cache; concurrent
    readers are safe because entries are immutable once stored.
    """

    entries: dict[tuple, NodeScore] = field(default_factory=dict)
    hits: int = 0
    misses: int = 0

    def key(self, node: str, parents, strategy: str) -> tuple:
        return (node, tuple(sorted(parents)), strategy)


def bic_node(
    data: GroupedDataset,
    node: str,
    parents,
    strategy: str,
    cache: ScoreCache | None = None,
    lme_config: LmeConfig | None = None,
) -> NodeScore:
    """BIC contribution of one node given its continuous parents.

    For the grouped strategies the discrete group parent is implicit: it
    multiplies the parameter count (no pooling) or switches the local
    model to the mixed-effects likelihood (partial pooling).
    """
    parents = tuple(sorted(parents))
    if cache is not None:
        key = cache.key(node, parents, strategy)
        hit = cache.entries.get(key)
        if hit is not None:
            cache.hits += 1
            return hit

    y = data.column(node)
    x = _design(data, parents)
    n = data.n
    if strategy == "gbn":
        _, _, loglik, _ = ols_ml(x, y)
    elif strategy == "cgbn":
        node_var = float(np.var(y)) if n > 1 else 1.0
        floor = max(DEGENERATE_VAR_SCALE * node_var, ABS_VAR_FLOOR)
        loglik = 0.0
        for j in range(data.n_groups):
            rows = data.groups == j
            if not rows.any():
                continue
            _, _, ll, _ = ols_ml(x[rows], y[rows], var_floor=floor)
            loglik += ll
    elif strategy == "lme":
        problem = LmeProblem(y, x, data.groups, data.n_groups)
        try:
            fit = fit_lme(problem, lme_config)
        except NumericError as exc:
            raise NumericError(f"node {node!r}, parents {list(parents)}: {exc}") from exc
        loglik = fit.loglik
    else:
        raise ValueError(f"unknown strategy {strategy!r}")

    penalty = 0.5 * math.log(n) * nparams(strategy, len(parents), data.n_groups)
    result = NodeScore(node, parents, float(loglik), float(penalty))
    if cache is not None:
        cache.entries[key] = result
        cache.misses += 1
    return result


def bic_total(
    data: GroupedDataset,
    dag: Dag,
    strategy: str,
    cache: ScoreCache | None = None,
    lme_config: LmeConfig | None = None,
) -> float:
    """Sum of per-node BIC scores over the continuous nodes."""
    total = 0.0
    for node in dag.continuous_nodes:
        total += bic_node(
            data, node, dag.continuous_parents(node), strategy, cache, lme_config
        ).total
    return total
