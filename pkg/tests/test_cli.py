import csv
import json
from pathlib import Path

import numpy as np
import pytest

import lmebn
import lmebn.cli as cli
from lmebn import DataError, compile_joint
from conftest import make_dataset


def write_config(path, **overrides):
    cfg = {
        "n_nodes": [10],
        "avg_parents": [1],
        "n_groups": [5],
        "group_size": [10],
        "scenario": "balanced",
        "replicates": 2,
        "seed": 7,
        "eval_rows": 50,
        "mc_kl_samples": 200,
    }
    cfg.update(overrides)
    Path(path).write_text(json.dumps(cfg))
    return cfg


class TestConfig:
    def test_unknown_keys_rejected(self, tmp_path):
        p = tmp_path / "c.json"
        write_config(p, bogus=1)
        with pytest.raises(lmebn.ConfigError, match="unknown keys: bogus"):
            cli.load_experiment_config(p)

    def test_unbalanced_disallows_two_groups(self, tmp_path):
        p = tmp_path / "c.json"
        write_config(p, scenario="unbalanced", n_groups=[2])
        with pytest.raises(lmebn.ConfigError, match="unbalanced"):
            cli.load_experiment_config(p)

    def test_all_problems_reported_at_once(self, tmp_path):
        p = tmp_path / "c.json"
        write_config(p, n_nodes=[7], scenario="weird", replicates=0)
        with pytest.raises(lmebn.ConfigError) as err:
            cli.load_experiment_config(p)
        msg = str(err.value)
        assert "n_nodes" in msg and "scenario" in msg and "replicates" in msg


class TestCsvFormats:
    def test_dataset_round_trip(self, tmp_path, two_group_line):
        p = tmp_path / "d.csv"
        cli.write_dataset_csv(two_group_line, p)
        back = cli.read_dataset_csv(p)
        assert back.columns == two_group_line.columns
        assert np.array_equal(back.x, two_group_line.x)
        assert np.array_equal(back.groups, two_group_line.groups)

    def test_missing_group_column(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("A,B\n1,2\n")
        with pytest.raises(DataError, match="missing group column"):
            cli.read_dataset_csv(p)

    def test_non_numeric_cell_coordinates(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("A,F\n1.0,g1\nfoo,g1\n")
        with pytest.raises(DataError, match="row 3, column 'A'"):
            cli.read_dataset_csv(p)

    def test_missing_value_coordinates(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("A,F\n1.0,g1\n,g1\n")
        with pytest.raises(DataError, match="row 3.*missing"):
            cli.read_dataset_csv(p)


class TestModelJson:
    @pytest.mark.parametrize("strategy", ["gbn", "cgbn", "lme"])
    def test_round_trip_identical_joints(self, tmp_path, strategy):
        dag = lmebn.random_connected_dag(4, 1, 3)
        bn = lmebn.sample_true_bn(dag, 3, 4)
        data = lmebn.generate_dataset(bn, (20, 20, 20), 5)
        model = cli.learn_model(data, strategy)
        blob = cli.model_to_json(model)
        path = tmp_path / "m.json"
        cli._write_json(blob, path)
        back = cli.model_from_json(json.loads(path.read_text()))
        j1 = compile_joint(model)
        j2 = compile_joint(back)
        assert np.abs(j1.means - j2.means).max() <= 1e-12
        assert np.abs(j1.covs - j2.covs).max() <= 1e-12
        assert back.strategy == strategy
        assert back.score == model.score

    def test_true_bn_round_trip(self, tmp_path):
        dag = lmebn.random_connected_dag(4, 1, 6)
        bn = lmebn.sample_true_bn(dag, 2, 7)
        blob = cli.true_bn_to_json(bn, {"sizes": [10, 10]})
        path = tmp_path / "t.json"
        cli._write_json(blob, path)
        back, meta = cli.true_bn_from_json(json.loads(path.read_text()))
        assert meta["sizes"] == [10, 10]
        for node in bn.nodes:
            assert np.array_equal(back.coefs[node], bn.coefs[node])
            assert np.array_equal(back.variances[node], bn.variances[node])
        assert back.dag.arcs == bn.dag.arcs


class TestSubcommands:
    def test_generate_file_counts_and_shapes(self, tmp_path):
        cfg = tmp_path / "c.json"
        write_config(cfg, replicates=2, n_groups=[5], group_size=[10])
        out = tmp_path / "out"
        assert cli.main(["generate", "--config", str(cfg), "--out", str(out)]) == 0
        reps = sorted(out.glob("*/rep*/train.csv"))
        assert len(reps) == 2
        data = cli.read_dataset_csv(reps[0])
        assert data.n == 50  # five groups of ten
        assert len(list(out.glob("*/rep*/true_model.json"))) == 2
        assert len(list(out.glob("*/rep*/eval.csv"))) == 2
        assert (out / "manifest.json").exists()

    def test_generate_rejects_unbalanced_two_groups(self, tmp_path):
        cfg = tmp_path / "c.json"
        write_config(cfg, scenario="unbalanced", n_groups=[2])
        assert cli.main(["generate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1

    def test_generate_byte_identical_reruns(self, tmp_path):
        cfg = tmp_path / "c.json"
        write_config(cfg, replicates=1)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        cli.main(["generate", "--config", str(cfg), "--out", str(out1)])
        cli.main(["generate", "--config", str(cfg), "--out", str(out2)])
        for rel in ["train.csv", "eval.csv", "true_model.json"]:
            f1 = next(out1.glob(f"*/rep*/{rel}"))
            f2 = next(out2.glob(f"*/rep*/{rel}"))
            assert f1.read_bytes() == f2.read_bytes()

    def test_learn_gbn_has_no_group_node(self, tmp_path, two_group_line):
        data_path = tmp_path / "d.csv"
        cli.write_dataset_csv(two_group_line, data_path)
        model_path = tmp_path / "m.json"
        assert cli.main([
            "learn", "--data", str(data_path), "--strategy", "gbn",
            "--out", str(model_path),
        ]) == 0
        blob = json.loads(model_path.read_text())
        assert "F" not in blob["nodes"]

    def test_learn_lme_has_group_arcs(self, tmp_path, two_group_line):
        data_path = tmp_path / "d.csv"
        cli.write_dataset_csv(two_group_line, data_path)
        model_path = tmp_path / "m.json"
        cli.main([
            "learn", "--data", str(data_path), "--strategy", "lme",
            "--out", str(model_path),
        ])
        blob = json.loads(model_path.read_text())
        arcs = {tuple(a) for a in blob["arcs"]}
        for x in two_group_line.columns:
            assert ("F", x) in arcs

    def test_learn_bad_csv_exit_code(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("A,F\nx,g1\n")
        rc = cli.main(["learn", "--data", str(bad), "--strategy", "gbn",
                       "--out", str(tmp_path / "m.json")])
        assert rc == 2

    def test_evaluate_true_model_is_near_perfect(self, tmp_path):
        dag = lmebn.random_connected_dag(4, 1, 8)
        bn = lmebn.sample_true_bn(dag, 3, 9)
        eval_data = lmebn.sample_model(bn.to_bn_model(), 300, 10)
        tm = tmp_path / "true.json"
        cli._write_json(cli.true_bn_to_json(bn, {"sizes": [20, 20, 20], "N": 4}), tm)
        lm = tmp_path / "learned.json"
        learned = bn.to_bn_model()
        cli._write_json(cli.model_to_json(learned), lm)
        ev = tmp_path / "eval.csv"
        cli.write_dataset_csv(eval_data, ev)
        out = tmp_path / "results.csv"
        rc = cli.main([
            "evaluate", "--true-model", str(tm), "--model", str(lm),
            "--data", str(ev), "--out", str(out), "--mc-kl-samples", "500",
            "--seed", "3",
        ])
        assert rc == 0
        rows = list(csv.DictReader(open(out)))
        assert len(rows) == 1
        assert rows[0]["shd"] == "0"
        assert float(rows[0]["kl_joint"]) == pytest.approx(0.0, abs=1e-9)
        assert set(rows[0]) == set(cli.RESULT_COLUMNS)

    def test_predict_roundtrip(self, tmp_path, two_group_line):
        data_path = tmp_path / "d.csv"
        cli.write_dataset_csv(two_group_line, data_path)
        model_path = tmp_path / "m.json"
        cli.main(["learn", "--data", str(data_path), "--strategy", "cgbn",
                  "--out", str(model_path)])
        pred_path = tmp_path / "p.csv"
        rc = cli.main(["predict", "--model", str(model_path), "--data", str(data_path),
                       "--out", str(pred_path), "--engine", "exact", "--know-f"])
        assert rc == 0
        rows = list(csv.reader(open(pred_path)))
        assert len(rows) == two_group_line.n + 1


@pytest.fixture(scope="module")
def small_run():
    cfg = cli.parse_experiment_config({
        "n_nodes": [10], "avg_parents": [1], "n_groups": [2, 5],
        "group_size": [10], "scenario": "balanced", "replicates": 2,
        "seed": 99, "eval_rows": 40, "mc_kl_samples": 100,
    })
    rows = cli.run_experiment(cfg)
    return cfg, rows


class TestExperiment:

    def test_row_count_and_order(self, small_run):
        cfg, rows = small_run
        assert len(rows) == 2 * 2 * 3
        key = [(r["F"], r["replicate"], r["strategy"]) for r in rows]
        want_strategies = ["gbn", "cgbn", "lme"]
        assert key == [
            (f, rep, s) for f in (2, 5) for rep in (0, 1) for s in want_strategies
        ]

    def test_rows_have_finite_metrics(self, small_run):
        _, rows = small_run
        for r in rows:
            assert r["error"] == ""
            assert r["shd"] >= 0
            assert np.isfinite(r["kl_joint"]) and r["kl_joint"] >= -1e-9
            assert 0.0 <= r["f1"] <= 1.0
            assert r["rmad_known_f"] >= 0 and r["rmad_unknown_f"] >= 0
            assert r["n_over_p"] > 0

    def test_results_csv_deterministic_modulo_runtime(self, small_run, tmp_path):
        cfg, rows = small_run
        rows2 = cli.run_experiment(cfg)
        p1, p2 = tmp_path / "r1.csv", tmp_path / "r2.csv"
        cli.write_results_csv(rows, p1)
        cli.write_results_csv(rows2, p2)

        def strip_runtime(path):
            out = []
            for row in csv.DictReader(open(path)):
                row["runtime_ms"] = ""
                out.append(tuple(row[c] for c in cli.RESULT_COLUMNS))
            return out

        assert strip_runtime(p1) == strip_runtime(p2)

    def test_homogeneous_scenario_has_identical_group_joints(self):
        cfg = cli.parse_experiment_config({
            "n_nodes": [10], "avg_parents": [1], "n_groups": [2],
            "group_size": [10], "scenario": "homogeneous", "replicates": 1,
            "seed": 5, "eval_rows": 10, "mc_kl_samples": 100,
        })
        bn, sizes, train, eval_data = cli.generate_cell(
            10, 1, 2, 10, "homogeneous", 0, 5, 10, 0
        )
        joint = compile_joint(bn.to_bn_model())
        assert np.allclose(joint.means[0], joint.means[1])
        assert np.allclose(joint.covs[0], joint.covs[1])
