"""Ground-truth model and data generation for the simulation study.

Random connected DAGs with a target average parent count, per-group
regression coefficients drawn around a shared center, residual variances
chosen so the parents explain 85% of each node's within-group variance,
balanced/unbalanced group allocations, and the homogeneous transform that
copies one group's parameters to all groups.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError
from .graph import Dag, topological_order
from .model import BnModel, GroupedDataset, PerGroupLocal, sample_model
from .search import GROUP_NODE

EXPLAINED_VARIANCE = 0.85
MAX_DAG_ATTEMPTS = 10_000


def node_names(n: int) -> tuple[str, ...]:
    width = max(2, len(str(n)))
    return tuple(f"X{i + 1:0{width}d}" for i in range(n))


def group_label_names(n_groups: int) -> tuple[str, ...]:
    width = max(2, len(str(n_groups)))
    return tuple(f"g{j + 1:0{width}d}" for j in range(n_groups))


@dataclass(frozen=True)
class TrueBn:
    """Generating model: DAG with the group node, per-group linear locals."""

    dag: Dag                   # includes the group node as parent of all
    coefs: dict[str, np.ndarray]      # node -> (G, k+1), intercept first
    variances: dict[str, np.ndarray]  # node -> (G,)
    group_labels: tuple[str, ...]

    @property
    def n_groups(self) -> int:
        return len(self.group_labels)

    @property
    def nodes(self) -> tuple[str, ...]:
        return self.dag.continuous_nodes

    def to_bn_model(self) -> BnModel:
        """View as a fitted per-group model with the uniform group prior."""
        locals_ = {}
        for node in self.nodes:
            parents = self.dag.continuous_parents(node)
            c = self.coefs[node]
            locals_[node] = PerGroupLocal(
                parents,
                c[:, 0].copy(),
                c[:, 1:].copy(),
                self.variances[node].copy(),
                np.zeros(self.n_groups, dtype=bool),
            )
        prior = np.full(self.n_groups, 1.0 / self.n_groups)
        return BnModel(self.dag, "cgbn", self.group_labels, prior, locals_)

    def parameter_count(self) -> int:
        """Free parameters of the generating model, multinomial included."""
        total = self.n_groups - 1
        for node in self.nodes:
            k = len(self.dag.continuous_parents(node))
            total += (k + 2) * self.n_groups
        return total


def arc_probability(n: int, avg_parents: float) -> float:
    return avg_parents * 2.0 / n


def random_connected_dag(n: int, avg_parents: float, seed) -> Dag:
    """Random DAG over the continuous nodes with a weakly connected skeleton.

    Each of the n(n-1)/2 node-pair slots is filled independently with
    probability 2*avg_parents/n; orientation follows a uniformly random
    node permutation, which keeps slot independence while forcing
    acyclicity. Unconnected skeletons are rejected and resampled.
    """
    if n < 2:
        raise ConfigError("need at least two nodes")
    p = arc_probability(n, avg_parents)
    if p > 1.0:
        raise ConfigError(
            f"arc probability {p:.3f} > 1 for N={n}, average parents {avg_parents}"
        )
    names = node_names(n)
    rng = np.random.default_rng(seed)
    for _ in range(MAX_DAG_ATTEMPTS):
        perm = rng.permutation(n)
        pos = np.empty(n, dtype=np.int64)
        pos[perm] = np.arange(n)
        arcs = set()
        for i in range(n):
            for j in range(i + 1, n):
                if rng.random() < p:
                    if pos[i] < pos[j]:
                        arcs.add((names[i], names[j]))
                    else:
                        arcs.add((names[j], names[i]))
        if _weakly_connected(n, names, arcs):
            return Dag(names, frozenset(arcs))
    raise ConfigError(
        f"no connected skeleton after {MAX_DAG_ATTEMPTS} draws (N={n}, avg={avg_parents})"
    )


def _weakly_connected(n: int, names, arcs) -> bool:
    if n == 1:
        return True
    nbrs: dict[str, set[str]] = {name: set() for name in names}
    for u, v in arcs:
        nbrs[u].add(v)
        nbrs[v].add(u)
    stack = [names[0]]
    seen = {names[0]}
    while stack:
        x = stack.pop()
        for y in nbrs[x]:
            if y not in seen:
                seen.add(y)
                stack.append(y)
    return len(seen) == n


def with_group_node(dag: Dag, group_node: str = GROUP_NODE) -> Dag:
    """Add the group node with an arc into every continuous node."""
    nodes = dag.nodes + (group_node,)
    arcs = set(dag.arcs) | {(group_node, x) for x in dag.nodes}
    return Dag(nodes, frozenset(arcs), group_node=group_node)


def sample_true_bn(dag: Dag, n_groups: int, seed) -> TrueBn:
    """Draw per-group coefficients and the 85%-rule residual variances.

    For each node and group: a coefficient-noise scale from chi^2(1), a
    group deviation from N(0, I), then coefficients around 2 + deviation.
    Residual variances make the parents explain 85% of the node's variance
    within each group, computed from the analytic parent covariance of the
    already-parameterized ancestors; parentless nodes get unit variance.
    """
    if dag.group_node is not None:
        raise ValueError("pass the continuous-only graph; the group node is added here")
    if n_groups < 1:
        raise ValueError("need at least one group")
    rng = np.random.default_rng(seed)
    full = with_group_node(dag)
    order = [n for n in topological_order(dag)]
    index = {n: i for i, n in enumerate(dag.nodes)}
    nn = len(dag.nodes)
    means = np.zeros((n_groups, nn))
    covs = np.zeros((n_groups, nn, nn))
    coefs: dict[str, np.ndarray] = {}
    variances: dict[str, np.ndarray] = {}
    for node in order:
        parents = full.continuous_parents(node)
        k = len(parents)
        pidx = [index[p] for p in parents]
        i = index[node]
        node_coefs = np.zeros((n_groups, k + 1))
        node_vars = np.zeros(n_groups)
        for j in range(n_groups):
            coef_noise = rng.chisquare(1)
            deviation = rng.standard_normal(k + 1)
            beta = rng.normal(2.0 + deviation, np.sqrt(coef_noise))
            node_coefs[j] = beta
            if k:
                slopes = beta[1:]
                var_pred = float(slopes @ covs[j][np.ix_(pidx, pidx)] @ slopes)
                node_vars[j] = var_pred * (1.0 - EXPLAINED_VARIANCE) / EXPLAINED_VARIANCE
            else:
                node_vars[j] = 1.0
            means[j, i] = beta[0] + (beta[1:] @ means[j, pidx] if k else 0.0)
            if k:
                cross = beta[1:] @ covs[j][np.ix_(pidx, range(nn))]
                covs[j, i, :] = cross
                covs[j, :, i] = cross
                covs[j, i, i] = var_pred + node_vars[j]
            else:
                covs[j, i, i] = node_vars[j]
        coefs[node] = node_coefs
        variances[node] = node_vars
    return TrueBn(full, coefs, variances, group_label_names(n_groups))


def group_sizes(scenario: str, n_groups: int, group_size: int) -> tuple[int, ...]:
    """Per-group row counts for one generated data set.

    Balanced (and homogeneous) scenarios give every group the same count.
    The unbalanced scenario concentrates 30% of the total in each of the
    first two groups and splits the rest evenly, largest remainder first.
    """
    if scenario in ("balanced", "homogeneous"):
        return (group_size,) * n_groups
    if scenario != "unbalanced":
        raise ConfigError(f"unknown scenario {scenario!r}")
    if n_groups not in (5, 10, 20):
        raise ConfigError("unbalanced allocation requires 5, 10, or 20 groups")
    n = n_groups * group_size
    big = int(round(0.3 * n))
    rest = n - 2 * big
    others = n_groups - 2
    base = rest // others
    leftover = rest - base * others
    sizes = [big, big] + [base] * others
    for idx in range(leftover):
        sizes[2 + idx] += 1
    assert sum(sizes) == n
    return tuple(sizes)


def make_homogeneous(bn: TrueBn) -> TrueBn:
    """Copy the first group's parameters to every group."""
    coefs = {
        node: np.tile(c[0], (bn.n_groups, 1)) for node, c in bn.coefs.items()
    }
    variances = {
        node: np.full(bn.n_groups, v[0]) for node, v in bn.variances.items()
    }
    return replace(bn, coefs=coefs, variances=variances)


def generate_dataset(bn: TrueBn, sizes, seed) -> GroupedDataset:
    """Ancestral-sample the given number of rows per group, then shuffle."""
    sizes = tuple(int(s) for s in sizes)
    if len(sizes) != bn.n_groups:
        raise ValueError("sizes must list one count per group")
    rng = np.random.default_rng(seed)
    nodes = bn.nodes
    index = {n: i for i, n in enumerate(nodes)}
    order = [n for n in topological_order(bn.dag) if n != bn.dag.group_node]
    total = sum(sizes)
    x = np.zeros((total, len(nodes)))
    groups = np.repeat(np.arange(bn.n_groups, dtype=np.int64), sizes)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    for node in order:
        i = index[node]
        parents = bn.dag.continuous_parents(node)
        pidx = [index[p] for p in parents]
        for j in range(bn.n_groups):
            lo, hi = offsets[j], offsets[j + 1]
            if lo == hi:
                continue
            beta = bn.coefs[node][j]
            pred = beta[0] + (x[lo:hi][:, pidx] @ beta[1:] if pidx else 0.0)
            x[lo:hi, i] = pred + rng.standard_normal(hi - lo) * np.sqrt(
                bn.variances[node][j]
            )
    shuffle = rng.permutation(total)
    return GroupedDataset(nodes, x[shuffle], groups[shuffle], bn.group_labels)
