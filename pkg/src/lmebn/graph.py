"""Directed acyclic graphs over continuous nodes plus one discrete group node.

Provides acyclicity checks, deterministic topological ordering, conversion
to the completed partially directed graph of the Markov-equivalence class,
and constraint-aware single-arc moves for local search. All values are
immutable after construction and safe to share across tasks.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Iterable, Literal

from .errors import LmebnError

Arc = tuple[str, str]

MOVE_KINDS = ("add", "delete", "reverse")


class MoveRejected(LmebnError):
    """A graph move was rejected; ``reason`` says why.

    Reasons: ``cycle``, ``constraint``, ``duplicate-arc``, ``missing-arc``.
    """

    def __init__(self, reason: str, message: str):
        super().__init__(message)
        self.reason = reason


@dataclass(frozen=True)
class Dag:
    """Directed acyclic graph with an optional group node that has no parents."""

    nodes: tuple[str, ...]
    arcs: frozenset[Arc]
    group_node: str | None = None

    def __post_init__(self):
        node_set = set(self.nodes)
        if len(node_set) != len(self.nodes):
            raise ValueError("duplicate node ids")
        if self.group_node is not None and self.group_node not in node_set:
            raise ValueError(f"group node {self.group_node!r} not among nodes")
        for u, v in self.arcs:
            if u == v:
                raise ValueError(f"self-loop on {u!r}")
            if u not in node_set or v not in node_set:
                raise ValueError(f"arc ({u!r}, {v!r}) uses unknown node")
            if v == self.group_node:
                raise ValueError("group node cannot have parents")
        if not is_acyclic(self):
            raise ValueError("graph contains a directed cycle")

    def parents(self, node: str) -> tuple[str, ...]:
        return tuple(sorted(u for u, v in self.arcs if v == node))

    def children(self, node: str) -> tuple[str, ...]:
        return tuple(sorted(v for u, v in self.arcs if u == node))

    def continuous_parents(self, node: str) -> tuple[str, ...]:
        return tuple(p for p in self.parents(node) if p != self.group_node)

    @property
    def continuous_nodes(self) -> tuple[str, ...]:
        return tuple(n for n in self.nodes if n != self.group_node)

    def has_arc(self, u: str, v: str) -> bool:
        return (u, v) in self.arcs


@dataclass(frozen=True)
class Cpdag:
    """Partially directed graph: compelled arcs plus reversible edges."""

    nodes: tuple[str, ...]
    directed: frozenset[Arc]
    undirected: frozenset[frozenset[str]]

    def __post_init__(self):
        dir_pairs = {frozenset(a) for a in self.directed}
        if dir_pairs & set(self.undirected):
            raise ValueError("directed and undirected edge sets overlap")

    def edge_status(self, a: str, b: str) -> str:
        """One of 'none', 'undirected', '>', '<' for the pair (a, b)."""
        if frozenset((a, b)) in self.undirected:
            return "undirected"
        if (a, b) in self.directed:
            return ">"
        if (b, a) in self.directed:
            return "<"
        return "none"


@dataclass(frozen=True)
class ArcConstraints:
    """Whitelist/blacklist over arcs; required arcs are never removed."""

    required: frozenset[Arc] = field(default_factory=frozenset)
    forbidden: frozenset[Arc] = field(default_factory=frozenset)

    def __post_init__(self):
        if self.required & self.forbidden:
            raise ValueError("required and forbidden arc sets overlap")


@dataclass(frozen=True)
class Move:
    kind: Literal["add", "delete", "reverse"]
    arc: Arc


def is_acyclic(dag: Dag) -> bool:
    """True iff the graph has no directed cycle (Kahn peeling)."""
    indeg = {n: 0 for n in dag.nodes}
    children: dict[str, list[str]] = {n: [] for n in dag.nodes}
    for u, v in dag.arcs:
        indeg[v] += 1
        children[u].append(v)
    stack = [n for n in dag.nodes if indeg[n] == 0]
    seen = 0
    while stack:
        n = stack.pop()
        seen += 1
        for c in children[n]:
            indeg[c] -= 1
            if indeg[c] == 0:
                stack.append(c)
    return seen == len(dag.nodes)


def topological_order(dag: Dag) -> tuple[str, ...]:
    """Parents-first ordering with lexicographic tie-breaks."""
    indeg = {n: 0 for n in dag.nodes}
    children: dict[str, list[str]] = {n: [] for n in dag.nodes}
    for u, v in dag.arcs:
        indeg[v] += 1
        children[u].append(v)
    ready = [n for n in dag.nodes if indeg[n] == 0]
    heapq.heapify(ready)
    order: list[str] = []
    while ready:
        n = heapq.heappop(ready)
        order.append(n)
        for c in children[n]:
            indeg[c] -= 1
            if indeg[c] == 0:
                heapq.heappush(ready, c)
    if len(order) != len(dag.nodes):
        raise ValueError("graph contains a directed cycle")
    return tuple(order)


def _has_path(arcs: frozenset[Arc], src: str, dst: str) -> bool:
    children: dict[str, list[str]] = {}
    for u, v in arcs:
        children.setdefault(u, []).append(v)
    stack = [src]
    seen = {src}
    while stack:
        n = stack.pop()
        if n == dst:
            return True
        for c in children.get(n, ()):
            if c not in seen:
                seen.add(c)
                stack.append(c)
    return False


def apply_move(dag: Dag, move: Move, constraints: ArcConstraints | None = None) -> Dag:
    """Apply a single-arc move, raising :class:`MoveRejected` when illegal."""
    cons = constraints or ArcConstraints()
    u, v = move.arc
    if u not in dag.nodes or v not in dag.nodes:
        raise MoveRejected("missing-arc", f"arc endpoints {move.arc} not in graph")
    if move.kind == "add":
        if (u, v) in dag.arcs:
            raise MoveRejected("duplicate-arc", f"arc {u}->{v} already present")
        if (u, v) in cons.forbidden:
            raise MoveRejected("constraint", f"arc {u}->{v} is forbidden")
        if v == dag.group_node:
            raise MoveRejected("constraint", f"group node {v} cannot gain parents")
        if _has_path(dag.arcs, v, u):
            raise MoveRejected("cycle", f"adding {u}->{v} creates a cycle")
        return Dag(dag.nodes, dag.arcs | {(u, v)}, dag.group_node)
    if move.kind == "delete":
        if (u, v) not in dag.arcs:
            raise MoveRejected("missing-arc", f"arc {u}->{v} not present")
        if (u, v) in cons.required:
            raise MoveRejected("constraint", f"arc {u}->{v} is required")
        return Dag(dag.nodes, dag.arcs - {(u, v)}, dag.group_node)
    if move.kind == "reverse":
        if (u, v) not in dag.arcs:
            raise MoveRejected("missing-arc", f"arc {u}->{v} not present")
        if (u, v) in cons.required:
            raise MoveRejected("constraint", f"arc {u}->{v} is required")
        if (v, u) in cons.forbidden:
            raise MoveRejected("constraint", f"arc {v}->{u} is forbidden")
        if u == dag.group_node:
            raise MoveRejected("constraint", f"group node {u} cannot gain parents")
        without = dag.arcs - {(u, v)}
        if _has_path(without, u, v):
            raise MoveRejected("cycle", f"reversing {u}->{v} creates a cycle")
        return Dag(dag.nodes, without | {(v, u)}, dag.group_node)
    raise ValueError(f"unknown move kind {move.kind!r}")


def _vstructures(nodes: Iterable[str], arcs: frozenset[Arc]) -> set[tuple[str, str, str]]:
    """Colliders a->c<-b with a, b non-adjacent, as (min(a,b), max(a,b), c)."""
    parents: dict[str, list[str]] = {}
    for u, v in arcs:
        parents.setdefault(v, []).append(u)
    adjacent = {frozenset(a) for a in arcs}
    out = set()
    for c, ps in parents.items():
        ps = sorted(ps)
        for i in range(len(ps)):
            for j in range(i + 1, len(ps)):
                a, b = ps[i], ps[j]
                if frozenset((a, b)) not in adjacent:
                    out.add((a, b, c))
    return out


def _extendable(
    nodes: tuple[str, ...],
    directed: set[Arc],
    undirected: set[frozenset[str]],
) -> bool:
    """True iff the partially directed graph has a consistent DAG extension.

    Consistent extension: same skeleton, every directed edge kept, no new
    colliders introduced at formerly undirected edges. Classic sink-peeling
    algorithm: repeatedly remove a node with no outgoing directed edges
    whose undirected neighbours are adjacent to all its other neighbours.
    """
    alive = set(nodes)
    dir_edges = set(directed)
    und_edges = set(undirected)

    def neighbours(x):
        out = set()
        for u, v in dir_edges:
            if u == x:
                out.add(v)
            elif v == x:
                out.add(u)
        for e in und_edges:
            if x in e:
                out |= e - {x}
        return out

    def adjacent(a, b):
        return (a, b) in dir_edges or (b, a) in dir_edges or frozenset((a, b)) in und_edges

    while alive:
        sink = None
        for x in sorted(alive):
            if any(u == x for u, _ in dir_edges):
                continue
            und_nbrs = {next(iter(e - {x})) for e in und_edges if x in e}
            nbrs = neighbours(x)
            if all(
                adjacent(y, z)
                for y in und_nbrs
                for z in nbrs - {y}
            ):
                sink = x
                break
        if sink is None:
            return False
        alive.discard(sink)
        dir_edges = {(u, v) for u, v in dir_edges if sink not in (u, v)}
        und_edges = {e for e in und_edges if sink not in e}
    return True


def to_cpdag(dag: Dag) -> Cpdag:
    """Completed partially directed graph of the equivalence class.

    Collider arcs are compelled by definition, and arcs out of the group
    node are background knowledge (it can never be a child). Any other arc
    is compelled exactly when the opposite orientation admits no consistent
    extension of the seeded pattern, i.e. when every member of the class
    agrees on it.
    """
    directed: set[Arc] = set()
    undirected: set[frozenset[str]] = set()
    compelled_seed: set[Arc] = set()
    for a, b, c in _vstructures(dag.nodes, dag.arcs):
        compelled_seed.add((a, c))
        compelled_seed.add((b, c))
    if dag.group_node is not None:
        for u, v in dag.arcs:
            if u == dag.group_node:
                compelled_seed.add((u, v))
    for arc in dag.arcs:
        if arc in compelled_seed:
            directed.add(arc)
        else:
            undirected.add(frozenset(arc))

    base_vstructs = _vstructures(dag.nodes, dag.arcs)
    skeleton_adj = {frozenset(a) for a in dag.arcs}

    def class_member_possible(extra: Arc) -> bool:
        """Could some class member carry ``extra``?

        The directed part must create no collider outside the source DAG's
        (sink peeling only guards colliders involving undirected edges),
        the group node must keep zero parents, and a consistent extension
        of the rest must exist.
        """
        if extra[1] == dag.group_node:
            return False
        cand = directed | {extra}
        heads: dict[str, list[str]] = {}
        for a, b in cand:
            heads.setdefault(b, []).append(a)
        for c, ps in heads.items():
            ps = sorted(ps)
            for i in range(len(ps)):
                for j in range(i + 1, len(ps)):
                    if frozenset((ps[i], ps[j])) in skeleton_adj:
                        continue
                    if (ps[i], ps[j], c) not in base_vstructs:
                        return False
        return _extendable(dag.nodes, cand, undirected - {frozenset(extra)})

    final_directed: set[Arc] = set(directed)
    final_undirected: set[frozenset[str]] = set()
    for edge in undirected:
        u, v = sorted(edge)
        # orientation in the source DAG vs its reverse
        fwd = (u, v) if (u, v) in dag.arcs else (v, u)
        rev = (fwd[1], fwd[0])
        if class_member_possible(rev):
            final_undirected.add(edge)
        else:
            final_directed.add(fwd)
    return Cpdag(dag.nodes, frozenset(final_directed), frozenset(final_undirected))
