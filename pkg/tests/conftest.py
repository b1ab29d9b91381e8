import numpy as np
import pytest

from lmebn import Dag, GroupedDataset


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


def make_dag(arcs, nodes=None, group_node=None):
    if nodes is None:
        nodes = sorted({n for a in arcs for n in a})
    return Dag(tuple(nodes), frozenset(arcs), group_node=group_node)


def make_dataset(x, groups, columns=None, labels=None):
    x = np.asarray(x, dtype=np.float64)
    groups = np.asarray(groups, dtype=np.int64)
    if columns is None:
        columns = tuple(f"X{i + 1:02d}" for i in range(x.shape[1]))
    if labels is None:
        labels = tuple(f"g{j + 1:02d}" for j in range(groups.max() + 1))
    return GroupedDataset(tuple(columns), x, groups, tuple(labels))


@pytest.fixture
def two_group_line(rng):
    """n=40 over two groups; X2 depends on X1 with group-specific slopes."""
    n = 40
    groups = np.repeat([0, 1], n // 2)
    x1 = rng.normal(size=n)
    slope = np.where(groups == 0, 1.5, 2.5)
    inter = np.where(groups == 0, -1.0, 1.0)
    x2 = inter + slope * x1 + 0.3 * rng.normal(size=n)
    return make_dataset(np.column_stack([x1, x2]), groups)
