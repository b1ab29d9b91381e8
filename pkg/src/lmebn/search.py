"""Greedy hill-climbing over DAGs with the decomposable BIC score.

The grouped strategies pin the group node as a parent of every continuous
node; moves are only ever proposed among the continuous nodes. Ties are
broken deterministically so identical inputs yield identical graphs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import ArcConstraints, Dag, Move, _has_path
from .lme import LmeConfig
from .model import GroupedDataset
from .score import ScoreCache, bic_node

GROUP_NODE = "F"

_MOVE_RANK = {"add": 0, "delete": 1, "reverse": 2}


@dataclass(frozen=True)
class SearchConfig:
    max_iterations: int = 200
    max_parents: int | None = None
    restarts: int = 0
    restart_arcs: int = 0      # 0 means one random arc per node
    seed: int = 0
    lme: LmeConfig = field(default_factory=LmeConfig)

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass(frozen=True)
class HillClimbResult:
    dag: Dag
    score: float
    trace: tuple[float, ...]
    cache: ScoreCache


def strategy_constraints(columns, strategy: str, group_node: str = GROUP_NODE) -> ArcConstraints:
    """Required/forbidden arcs implied by the pooling strategy."""
    if strategy == "gbn":
        return ArcConstraints()
    required = frozenset((group_node, x) for x in columns)
    forbidden = frozenset((x, group_node) for x in columns)
    return ArcConstraints(required=required, forbidden=forbidden)


def initial_dag(columns, strategy: str, group_node: str = GROUP_NODE) -> Dag:
    """Constrained empty graph: only the required group arcs, if any."""
    if strategy == "gbn":
        return Dag(tuple(columns), frozenset())
    nodes = tuple(columns) + (group_node,)
    arcs = frozenset((group_node, x) for x in columns)
    return Dag(nodes, arcs, group_node=group_node)


def _legal_moves(dag: Dag, max_parents: int | None):
    """Candidate moves among continuous nodes, in deterministic order."""
    xs = dag.continuous_nodes
    moves = []
    for u in xs:
        for v in xs:
            if u == v:
                continue
            if dag.has_arc(u, v):
                moves.append(Move("delete", (u, v)))
                if not _has_path(dag.arcs - {(u, v)}, u, v) and (
                    max_parents is None
                    or len(dag.continuous_parents(u)) < max_parents
                ):
                    moves.append(Move("reverse", (u, v)))
            elif not dag.has_arc(v, u):
                if _has_path(dag.arcs, v, u):
                    continue
                if max_parents is not None and len(dag.continuous_parents(v)) >= max_parents:
                    continue
                moves.append(Move("add", (u, v)))
    moves.sort(key=lambda m: (_MOVE_RANK[m.kind], m.arc))
    return moves


def _move_delta(data, dag, move, strategy, cache, lme_config):
    """Score change of a move via single-node rescoring."""
    u, v = move.arc
    if move.kind == "add":
        old = bic_node(data, v, dag.continuous_parents(v), strategy, cache, lme_config)
        new_parents = tuple(sorted(dag.continuous_parents(v) + (u,)))
        new = bic_node(data, v, new_parents, strategy, cache, lme_config)
        return new.total - old.total
    if move.kind == "delete":
        old = bic_node(data, v, dag.continuous_parents(v), strategy, cache, lme_config)
        new_parents = tuple(p for p in dag.continuous_parents(v) if p != u)
        new = bic_node(data, v, new_parents, strategy, cache, lme_config)
        return new.total - old.total
    # reverse changes both endpoints
    old_v = bic_node(data, v, dag.continuous_parents(v), strategy, cache, lme_config)
    old_u = bic_node(data, u, dag.continuous_parents(u), strategy, cache, lme_config)
    new_v = bic_node(
        data, v, tuple(p for p in dag.continuous_parents(v) if p != u),
        strategy, cache, lme_config,
    )
    new_u = bic_node(
        data, u, tuple(sorted(dag.continuous_parents(u) + (v,))),
        strategy, cache, lme_config,
    )
    return (new_v.total + new_u.total) - (old_v.total + old_u.total)


def _apply(dag: Dag, move: Move) -> Dag:
    u, v = move.arc
    if move.kind == "add":
        return Dag(dag.nodes, dag.arcs | {(u, v)}, dag.group_node)
    if move.kind == "delete":
        return Dag(dag.nodes, dag.arcs - {(u, v)}, dag.group_node)
    return Dag(dag.nodes, (dag.arcs - {(u, v)}) | {(v, u)}, dag.group_node)


def _ascend(data, dag, strategy, config, cache):
    score = sum(
        bic_node(data, n, dag.continuous_parents(n), strategy, cache, config.lme).total
        for n in dag.continuous_nodes
    )
    trace = [score]
    for _ in range(config.max_iterations):
        best = None
        for move in _legal_moves(dag, config.max_parents):
            delta = _move_delta(data, dag, move, strategy, cache, config.lme)
            if delta <= 0.0:
                continue
            key = (-delta, _MOVE_RANK[move.kind], move.arc)
            if best is None or key < best[0]:
                best = (key, move)
        if best is None:
            break
        dag = _apply(dag, best[1])
        score += -best[0][0]
        trace.append(score)
    return dag, score, trace


def _random_start(columns, strategy, n_arcs, rng) -> Dag:
    dag = initial_dag(columns, strategy)
    xs = list(columns)
    for _ in range(n_arcs):
        u, v = rng.choice(len(xs), size=2, replace=False)
        u, v = xs[u], xs[v]
        if dag.has_arc(u, v) or dag.has_arc(v, u) or _has_path(dag.arcs, v, u):
            continue
        dag = Dag(dag.nodes, dag.arcs | {(u, v)}, dag.group_node)
    return dag


def hill_climb(
    data: GroupedDataset,
    strategy: str,
    config: SearchConfig | None = None,
) -> HillClimbResult:
    """Greedy ascent from the constrained empty graph.

    At each step every legal add/delete/reverse among the continuous nodes
    is scored through the cache and the largest positive improvement is
    applied; ties break on (delta, add < delete < reverse, arc order).
    Optional random restarts keep the best final score.
    """
    config = config or SearchConfig()
    if strategy not in ("gbn", "cgbn", "lme"):
        raise ValueError(f"unknown strategy {strategy!r}")
    if strategy != "gbn" and data.n_groups < 2:
        raise ValueError(f"strategy {strategy!r} needs at least two groups")
    cache = ScoreCache()
    dag, score, trace = _ascend(data, initial_dag(data.columns, strategy), strategy, config, cache)
    if config.restarts:
        rng = np.random.default_rng(config.seed)
        n_arcs = config.restart_arcs or len(data.columns)
        for _ in range(config.restarts):
            start = _random_start(data.columns, strategy, n_arcs, rng)
            rdag, rscore, rtrace = _ascend(data, start, strategy, config, cache)
            if rscore > score:
                dag, score, trace = rdag, rscore, rtrace
    return HillClimbResult(dag, score, tuple(trace), cache)
