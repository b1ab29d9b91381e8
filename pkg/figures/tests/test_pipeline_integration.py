"""End-to-end: render every figure from a pipeline-produced results CSV."""

import csv

import pytest

lmebn_cli = pytest.importorskip("lmebn.cli")

from lmebn_figures import FIGURE_IDS, render_figures
from lmebn_figures.render import REQUIRED_COLUMNS


@pytest.fixture(scope="module")
def pipeline_results(tmp_path_factory):
    out = tmp_path_factory.mktemp("pipeline") / "results.csv"
    rows = []
    for scenario in ("balanced", "unbalanced", "homogeneous"):
        config = lmebn_cli.parse_experiment_config({
            "n_nodes": [10],
            "avg_parents": [1],
            "n_groups": [5],
            "group_size": [10],
            "scenario": scenario,
            "replicates": 2,
            "seed": 314,
            "eval_rows": 60,
            "mc_kl_samples": 200,
        })
        rows.extend(lmebn_cli.run_experiment(config))
    lmebn_cli.write_results_csv(rows, out)
    return out


def test_all_figures_render_from_pipeline_csv(pipeline_results, tmp_path):
    with open(pipeline_results) as fh:
        header = next(csv.reader(fh))
    assert header == list(REQUIRED_COLUMNS)
    written = render_figures(pipeline_results, tmp_path / "figs")
    names = {p.name for p in written}
    assert names == {f"{fid}.{ext}" for fid in FIGURE_IDS for ext in ("png", "svg")}
    for p in written:
        assert p.stat().st_size > 0
