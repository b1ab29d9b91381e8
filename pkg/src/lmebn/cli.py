"""Command-line entry points, file formats, and the experiment grid runner.

Subcommands: generate, learn, evaluate, experiment, predict. Data sets are
CSV with a header row and a group-label column (default "F"); models and
generating models are JSON; experiment results are one CSV row per
(cell, replicate, strategy). Every random stream derives from the master
seed plus the cell/replicate coordinates, so reruns reproduce outputs
exactly (timing columns aside).
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, LmebnError, NumericError
from .graph import Dag
from .infer import compile_joint, predict_all
from .lme import LmeFit
from .metrics import (
    extend_with_isolated_group_node,
    mc_xmarginal_kl,
    model_kl,
    rmad,
    samples_per_parameter,
    shd,
)
from .model import (
    BnModel,
    GroupedDataset,
    MixedLocal,
    PerGroupLocal,
    PooledLocal,
    empirical_prior,
    fit_parameters,
    sample_model,
    with_group_prior,
)
from .search import GROUP_NODE, SearchConfig, hill_climb
from .simgen import (
    TrueBn,
    generate_dataset,
    group_sizes,
    make_homogeneous,
    random_connected_dag,
    sample_true_bn,
    with_group_node,
)

FORMAT_VERSION = 1

RESULT_COLUMNS = (
    "N", "avg_parents", "F", "n_j", "scenario", "replicate", "strategy",
    "shd", "kl_joint", "kl_mc_xonly", "rmad_known_f", "rmad_unknown_f",
    "f1", "n_over_p", "runtime_ms", "error",
)

ALLOWED_N = (10, 20, 50)
ALLOWED_AVG = (1, 2, 4)
ALLOWED_GROUPS = (2, 5, 10, 20, 50)
ALLOWED_SIZES = (10, 20, 50, 100)
SCENARIOS = ("balanced", "unbalanced", "homogeneous")
UNBALANCED_GROUPS = (5, 10, 20)


# ---------------------------------------------------------------------------
# experiment configuration

@dataclass(frozen=True)
class ExperimentConfig:
    n_nodes: tuple[int, ...]
    avg_parents: tuple[float, ...]
    n_groups: tuple[int, ...]
    group_size: tuple[int, ...]
    scenario: str
    replicates: int
    seed: int
    eval_rows: int = 1000
    mc_kl_samples: int = 2000

    def cells(self):
        return list(
            itertools.product(self.n_nodes, self.avg_parents, self.n_groups, self.group_size)
        )


_CONFIG_KEYS = {
    "n_nodes", "avg_parents", "n_groups", "group_size", "scenario",
    "replicates", "seed", "eval_rows", "mc_kl_samples",
}


def load_experiment_config(path: str | Path) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_experiment_config(raw)


def parse_experiment_config(raw: dict) -> ExperimentConfig:
    """Validate the config mapping, reporting every bad field at once."""
    problems = []
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(raw) - _CONFIG_KEYS)
    if unknown:
        problems.append(f"unknown keys: {', '.join(unknown)}")
    missing = sorted(
        k for k in ("n_nodes", "avg_parents", "n_groups", "group_size", "scenario", "replicates", "seed")
        if k not in raw
    )
    if missing:
        problems.append(f"missing keys: {', '.join(missing)}")

    def int_list(key, allowed):
        vals = raw.get(key, [])
        if not isinstance(vals, list) or not vals:
            problems.append(f"{key}: expected a non-empty list")
            return ()
        bad = [v for v in vals if v not in allowed]
        if bad:
            problems.append(f"{key}: values {bad} outside the study grid {list(allowed)}")
        return tuple(vals)

    n_nodes = int_list("n_nodes", ALLOWED_N)
    avg = int_list("avg_parents", ALLOWED_AVG)
    groups = int_list("n_groups", ALLOWED_GROUPS)
    sizes = int_list("group_size", ALLOWED_SIZES)
    scenario = raw.get("scenario")
    if scenario not in SCENARIOS:
        problems.append(f"scenario: {scenario!r} not one of {list(SCENARIOS)}")
    elif scenario == "unbalanced":
        bad = [g for g in groups if g not in UNBALANCED_GROUPS]
        if bad:
            problems.append(
                f"n_groups: unbalanced allocation is only defined for {list(UNBALANCED_GROUPS)}, got {bad}"
            )
    replicates = raw.get("replicates")
    if not isinstance(replicates, int) or replicates < 1:
        problems.append("replicates: expected a positive integer")
    seed = raw.get("seed")
    if not isinstance(seed, int):
        problems.append("seed: expected an integer")
    eval_rows = raw.get("eval_rows", 1000)
    if not isinstance(eval_rows, int) or eval_rows < 1:
        problems.append("eval_rows: expected a positive integer")
    mc_kl = raw.get("mc_kl_samples", 2000)
    if not isinstance(mc_kl, int) or mc_kl < 2:
        problems.append("mc_kl_samples: expected an integer >= 2")
    for n in n_nodes:
        for a in avg:
            if isinstance(n, int) and a * 2 / n > 1:
                problems.append(f"avg_parents {a} too dense for N={n} (arc probability > 1)")
    if problems:
        raise ConfigError("invalid config: " + "; ".join(problems))
    return ExperimentConfig(
        n_nodes, avg, groups, sizes, scenario, replicates, seed, eval_rows, mc_kl
    )


def _seed_for(master: int, *path: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(master)] + [int(p) for p in path])


# ---------------------------------------------------------------------------
# CSV and JSON formats

def write_dataset_csv(data: GroupedDataset, path: str | Path, group_col: str = GROUP_NODE):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(data.columns) + [group_col])
        for i in range(data.n):
            writer.writerow(
                [repr(float(v)) for v in data.x[i]] + [data.group_labels[data.groups[i]]]
            )


def read_dataset_csv(path: str | Path, group_col: str = GROUP_NODE) -> GroupedDataset:
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise DataError(f"{path}: empty file")
            rows = list(reader)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if group_col not in header:
        raise DataError(f"{path}: missing group column {group_col!r}")
    gi = header.index(group_col)
    columns = tuple(c for i, c in enumerate(header) if i != gi)
    values = np.zeros((len(rows), len(columns)))
    labels: list[str] = []
    for r, row in enumerate(rows):
        if len(row) != len(header):
            raise DataError(f"{path}: row {r + 2} has {len(row)} fields, expected {len(header)}")
        ci = 0
        for i, cell in enumerate(row):
            if i == gi:
                labels.append(cell)
                continue
            if cell.strip() == "":
                raise DataError(f"{path}: row {r + 2}, column {header[i]!r}: missing value")
            try:
                values[r, ci] = float(cell)
            except ValueError:
                raise DataError(
                    f"{path}: row {r + 2}, column {header[i]!r}: non-numeric value {cell!r}"
                )
            ci += 1
    label_set = tuple(sorted(set(labels)))
    code = {lab: i for i, lab in enumerate(label_set)}
    groups = np.array([code[lab] for lab in labels], dtype=np.int64)
    return GroupedDataset(columns, values, groups, label_set)


def _tri_rows(mat: np.ndarray) -> list[list[float]]:
    return [[float(mat[i, j]) for j in range(i + 1)] for i in range(mat.shape[0])]


def _tri_to_full(rows: list[list[float]]) -> np.ndarray:
    q = len(rows)
    out = np.zeros((q, q))
    for i, row in enumerate(rows):
        for j, v in enumerate(row):
            out[i, j] = v
            out[j, i] = v
    return out


def _local_to_json(local) -> dict:
    if isinstance(local, PooledLocal):
        return {
            "variant": "pooled",
            "parents": list(local.parents),
            "intercept": local.intercept,
            "coefs": [float(c) for c in local.coefs],
            "variance": local.variance,
        }
    if isinstance(local, PerGroupLocal):
        return {
            "variant": "per_group",
            "parents": list(local.parents),
            "intercepts": [float(v) for v in local.intercepts],
            "coefs": [[float(c) for c in row] for row in local.coefs],
            "variances": [float(v) for v in local.variances],
            "degenerate": [bool(b) for b in local.degenerate],
        }
    if isinstance(local, MixedLocal):
        fit = local.fit
        return {
            "variant": "mixed",
            "parents": list(local.parents),
            "beta": [float(v) for v in fit.beta],
            "blups": [[float(v) for v in row] for row in fit.blups],
            "sigma2": fit.sigma2,
            "cov_re": _tri_rows(fit.cov_re),
            "loglik": fit.loglik,
            "converged": fit.converged,
            "boundary": fit.boundary,
        }
    raise ValueError(f"unknown local type {type(local)!r}")


def _local_from_json(obj: dict):
    parents = tuple(obj["parents"])
    variant = obj["variant"]
    if variant == "pooled":
        return PooledLocal(
            parents, float(obj["intercept"]), np.array(obj["coefs"], dtype=np.float64),
            float(obj["variance"]),
        )
    if variant == "per_group":
        coefs = np.array(obj["coefs"], dtype=np.float64)
        if coefs.ndim == 1:
            coefs = coefs.reshape(len(obj["intercepts"]), 0)
        return PerGroupLocal(
            parents,
            np.array(obj["intercepts"], dtype=np.float64),
            coefs,
            np.array(obj["variances"], dtype=np.float64),
            np.array(obj["degenerate"], dtype=bool),
        )
    if variant == "mixed":
        blups = np.array(obj["blups"], dtype=np.float64)
        fit = LmeFit(
            beta=np.array(obj["beta"], dtype=np.float64),
            blups=blups if blups.ndim == 2 else blups.reshape(-1, len(obj["beta"])),
            sigma2=float(obj["sigma2"]),
            cov_re=_tri_to_full(obj["cov_re"]),
            loglik=float(obj["loglik"]),
            converged=bool(obj["converged"]),
            boundary=bool(obj["boundary"]),
        )
        return MixedLocal(parents, fit)
    raise DataError(f"unknown local variant {variant!r}")


def model_to_json(model: BnModel) -> dict:
    return {
        "version": FORMAT_VERSION,
        "kind": "bn_model",
        "strategy": model.strategy,
        "nodes": list(model.dag.nodes),
        "arcs": [list(a) for a in sorted(model.dag.arcs)],
        "group_node": model.dag.group_node,
        "group_labels": list(model.group_labels),
        "group_prior": (
            None if model.group_prior is None else [float(p) for p in model.group_prior]
        ),
        "score": model.score,
        "locals": {node: _local_to_json(model.locals[node]) for node in sorted(model.locals)},
    }


def model_from_json(obj: dict) -> BnModel:
    if obj.get("kind") != "bn_model":
        raise DataError("not a model file")
    dag = Dag(
        tuple(obj["nodes"]),
        frozenset(tuple(a) for a in obj["arcs"]),
        group_node=obj.get("group_node"),
    )
    prior = obj.get("group_prior")
    return BnModel(
        dag,
        obj["strategy"],
        tuple(obj["group_labels"]),
        None if prior is None else np.array(prior, dtype=np.float64),
        {node: _local_from_json(loc) for node, loc in obj["locals"].items()},
        score=obj.get("score"),
    )


def true_bn_to_json(bn: TrueBn, meta: dict | None = None) -> dict:
    return {
        "version": FORMAT_VERSION,
        "kind": "true_bn",
        "nodes": list(bn.dag.nodes),
        "arcs": [list(a) for a in sorted(bn.dag.arcs)],
        "group_node": bn.dag.group_node,
        "group_labels": list(bn.group_labels),
        "coefficients": {
            node: [[float(v) for v in row] for row in bn.coefs[node]] for node in sorted(bn.coefs)
        },
        "variances": {
            node: [float(v) for v in bn.variances[node]] for node in sorted(bn.variances)
        },
        "meta": meta or {},
    }


def true_bn_from_json(obj: dict) -> tuple[TrueBn, dict]:
    if obj.get("kind") != "true_bn":
        raise DataError("not a generating-model file")
    dag = Dag(
        tuple(obj["nodes"]),
        frozenset(tuple(a) for a in obj["arcs"]),
        group_node=obj.get("group_node"),
    )
    coefs = {n: np.array(v, dtype=np.float64) for n, v in obj["coefficients"].items()}
    variances = {n: np.array(v, dtype=np.float64) for n, v in obj["variances"].items()}
    return TrueBn(dag, coefs, variances, tuple(obj["group_labels"])), obj.get("meta", {})


def _write_json(obj: dict, path: str | Path):
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _read_json(path: str | Path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# pipeline pieces shared by the subcommands

def generate_cell(
    n_nodes: int,
    avg_parents: float,
    n_groups: int,
    group_size: int,
    scenario: str,
    replicate: int,
    master_seed: int,
    eval_rows: int,
    cell_index: int = 0,
):
    """One replicate's generating model, training data, and eval data."""
    base = (cell_index, replicate)
    dag = random_connected_dag(
        n_nodes, avg_parents, _seed_for(master_seed, *base, 0)
    )
    bn = sample_true_bn(dag, n_groups, _seed_for(master_seed, *base, 1))
    if scenario == "homogeneous":
        bn = make_homogeneous(bn)
    sizes = group_sizes(scenario, n_groups, group_size)
    train = generate_dataset(bn, sizes, _seed_for(master_seed, *base, 2))
    eval_data = sample_model(bn.to_bn_model(), eval_rows, _seed_for(master_seed, *base, 3))
    return bn, sizes, train, eval_data


def learn_model(data: GroupedDataset, strategy: str, search_config: SearchConfig | None = None) -> BnModel:
    """Hill-climb the structure, fit parameters, attach the group prior."""
    result = hill_climb(data, strategy, search_config)
    model = fit_parameters(result.dag, data, strategy, (search_config or SearchConfig()).lme)
    if model.group_prior is None:
        model = with_group_prior(model, empirical_prior(data))
    return replace(model, score=result.score)


def evaluate_model(
    true_bn: TrueBn,
    sizes,
    learned: BnModel,
    eval_data: GroupedDataset,
    mc_kl_samples: int,
    mc_seed,
) -> dict:
    """All metric columns for one learned model."""
    learned_dag = learned.dag
    if learned_dag.group_node is None:
        learned_dag = extend_with_isolated_group_node(learned_dag, true_bn.dag.group_node)
    row: dict[str, object] = {}
    row["shd"] = shd(true_bn.dag, learned_dag)
    row["kl_joint"] = model_kl(true_bn, learned)
    true_joint = compile_joint(true_bn.to_bn_model())
    learned_joint = compile_joint(learned)
    row["kl_mc_xonly"] = mc_xmarginal_kl(true_joint, learned_joint, mc_kl_samples, mc_seed)[0]
    pred_known = predict_all(learned, eval_data, know_group=True)
    pred_unknown = predict_all(learned, eval_data, know_group=False)
    observed = eval_data.x[:, [eval_data.columns.index(n) for n in learned.nodes]]
    row["rmad_known_f"] = rmad(observed, pred_known)[0]
    row["rmad_unknown_f"] = rmad(observed, pred_unknown)[0]
    post = _classify_rows(learned, learned_joint, eval_data)
    row["f1"] = _macro_f1_from_labels(eval_data, learned, post)
    row["n_over_p"] = samples_per_parameter(sizes, true_bn)
    return row


def _classify_rows(model: BnModel, joint, data: GroupedDataset) -> np.ndarray:
    from .infer import _log_posterior_groups

    x = data.x[:, [data.columns.index(n) for n in model.nodes]]
    post = _log_posterior_groups(joint, x, list(range(len(model.nodes))))
    # argmax with lexicographic label tie-break; labels are sorted already
    order = np.argsort([model.group_labels[i] for i in range(model.n_groups)])
    best = np.zeros(data.n, dtype=np.int64)
    maxp = post.max(axis=1)
    for r in range(data.n):
        for idx in order:
            if post[r, idx] == maxp[r]:
                best[r] = idx
                break
    return best


def _macro_f1_from_labels(data: GroupedDataset, model: BnModel, predicted_codes: np.ndarray) -> float:
    from .metrics import macro_f1

    # map the model's label indexing onto the data's label indexing
    remap = np.array([data.group_labels.index(lab) for lab in model.group_labels])
    return macro_f1(data.groups, remap[predicted_codes], data.n_groups)


# ---------------------------------------------------------------------------
# experiment runner

@dataclass
class _CellTask:
    cell_index: int
    n_nodes: int
    avg_parents: float
    n_groups: int
    group_size: int
    replicate: int
    scenario: str
    seed: int
    eval_rows: int
    mc_kl_samples: int


def _run_cell_task(task: _CellTask) -> list[dict]:
    bn, sizes, train, eval_data = generate_cell(
        task.n_nodes, task.avg_parents, task.n_groups, task.group_size,
        task.scenario, task.replicate, task.seed, task.eval_rows, task.cell_index,
    )
    rows = []
    for strategy in ("gbn", "cgbn", "lme"):
        base = {
            "N": task.n_nodes,
            "avg_parents": task.avg_parents,
            "F": task.n_groups,
            "n_j": task.group_size,
            "scenario": task.scenario,
            "replicate": task.replicate,
            "strategy": strategy,
        }
        started = time.perf_counter()
        try:
            learned = learn_model(train, strategy)
            metrics = evaluate_model(
                bn, sizes, learned, eval_data, task.mc_kl_samples,
                _seed_for(task.seed, task.cell_index, task.replicate, 4),
            )
            base.update(metrics)
            base["error"] = ""
        except LmebnError as exc:
            base.update({c: "" for c in RESULT_COLUMNS if c not in base})
            base["error"] = f"{type(exc).__name__}: {exc}"
        base["runtime_ms"] = int(round(1000 * (time.perf_counter() - started)))
        rows.append(base)
    return rows


def run_experiment(config: ExperimentConfig, jobs: int = 1) -> list[dict]:
    """Full grid: generate, learn all three strategies, evaluate.

    Rows come back sorted by (cell, replicate, strategy) regardless of the
    execution order, so the output is stable under any job count.
    """
    tasks = []
    for cell_index, (n, avg, g, size) in enumerate(config.cells()):
        for rep in range(config.replicates):
            tasks.append(
                _CellTask(
                    cell_index, n, avg, g, size, rep, config.scenario,
                    config.seed, config.eval_rows, config.mc_kl_samples,
                )
            )
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_run_cell_task, tasks))
    else:
        chunks = [_run_cell_task(t) for t in tasks]
    rows = [row for chunk in chunks for row in chunk]
    strat_rank = {"gbn": 0, "cgbn": 1, "lme": 2}
    rows.sort(
        key=lambda r: (
            r["N"], r["avg_parents"], r["F"], r["n_j"], r["replicate"],
            strat_rank[r["strategy"]],
        )
    )
    return rows


def write_results_csv(rows: list[dict], path: str | Path):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=RESULT_COLUMNS)
        writer.writeheader()
        for row in rows:
            out = {}
            for c in RESULT_COLUMNS:
                v = row.get(c, "")
                if isinstance(v, float):
                    v = repr(v)
                out[c] = v
            writer.writerow(out)


def append_result_row(row: dict, path: str | Path):
    path = Path(path)
    new = not path.exists()
    with open(path, "a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=RESULT_COLUMNS)
        if new:
            writer.writeheader()
        out = {}
        for c in RESULT_COLUMNS:
            v = row.get(c, "")
            out[c] = repr(v) if isinstance(v, float) else v
        writer.writerow(out)


# ---------------------------------------------------------------------------
# subcommands

def _cell_dir_name(n, avg, g, size, scenario) -> str:
    return f"N{n}_p{avg}_F{g}_n{size}_{scenario}"


def cmd_generate(args) -> int:
    config = load_experiment_config(args.config)
    if args.seed is not None:
        config = ExperimentConfig(
            config.n_nodes, config.avg_parents, config.n_groups, config.group_size,
            config.scenario, config.replicates, args.seed, config.eval_rows,
            config.mc_kl_samples,
        )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    manifest = {
        "version": FORMAT_VERSION,
        "config": {
            "n_nodes": list(config.n_nodes),
            "avg_parents": list(config.avg_parents),
            "n_groups": list(config.n_groups),
            "group_size": list(config.group_size),
            "scenario": config.scenario,
            "replicates": config.replicates,
            "seed": config.seed,
            "eval_rows": config.eval_rows,
            "mc_kl_samples": config.mc_kl_samples,
        },
        "cells": [],
    }
    for cell_index, (n, avg, g, size) in enumerate(config.cells()):
        cell_name = _cell_dir_name(n, avg, g, size, config.scenario)
        for rep in range(config.replicates):
            bn, sizes, train, eval_data = generate_cell(
                n, avg, g, size, config.scenario, rep, config.seed,
                config.eval_rows, cell_index,
            )
            rep_dir = out / cell_name / f"rep{rep:02d}"
            rep_dir.mkdir(parents=True, exist_ok=True)
            write_dataset_csv(train, rep_dir / "train.csv")
            write_dataset_csv(eval_data, rep_dir / "eval.csv")
            meta = {
                "N": n, "avg_parents": avg, "F": g, "n_j": size,
                "scenario": config.scenario, "replicate": rep,
                "sizes": list(sizes), "seed": config.seed, "cell_index": cell_index,
            }
            _write_json(true_bn_to_json(bn, meta), rep_dir / "true_model.json")
            manifest["cells"].append(
                {"cell": cell_name, "replicate": rep, "cell_index": cell_index,
                 "seed_path": [config.seed, cell_index, rep]}
            )
    manifest["elapsed_s"] = round(time.perf_counter() - started, 3)
    _write_json(manifest, out / "manifest.json")
    print(f"wrote {len(manifest['cells'])} replicates under {out}")
    return 0


def cmd_learn(args) -> int:
    data = read_dataset_csv(args.data, args.group_col)
    started = time.perf_counter()
    model = learn_model(data, args.strategy, SearchConfig(seed=args.seed or 0))
    elapsed = time.perf_counter() - started
    _write_json(model_to_json(model), args.out)
    arcs = len(model.dag.arcs)
    print(
        f"strategy={args.strategy} nodes={len(model.nodes)} arcs={arcs} "
        f"score={model.score:.3f} time={elapsed:.2f}s -> {args.out}"
    )
    return 0


def cmd_evaluate(args) -> int:
    true_bn, meta = true_bn_from_json(_read_json(args.true_model))
    learned = model_from_json(_read_json(args.model))
    eval_data = read_dataset_csv(args.data, args.group_col)
    sizes = meta.get("sizes")
    if sizes is None:
        sizes = [int(args.train_rows or eval_data.n)]
    started = time.perf_counter()
    metrics = evaluate_model(
        true_bn, sizes, learned, eval_data, args.mc_kl_samples, args.seed or 0
    )
    runtime_ms = int(round(1000 * (time.perf_counter() - started)))
    row = {
        "N": meta.get("N", len(true_bn.nodes)),
        "avg_parents": meta.get("avg_parents", ""),
        "F": meta.get("F", true_bn.n_groups),
        "n_j": meta.get("n_j", ""),
        "scenario": meta.get("scenario", ""),
        "replicate": meta.get("replicate", ""),
        "strategy": learned.strategy,
        "runtime_ms": runtime_ms,
        "error": "",
        **metrics,
    }
    append_result_row(row, args.out)
    print(
        f"shd={row['shd']} kl={row['kl_joint']:.4f} f1={row['f1']:.4f} -> {args.out}"
    )
    return 0


def cmd_experiment(args) -> int:
    config = load_experiment_config(args.config)
    if args.seed is not None:
        config = ExperimentConfig(
            config.n_nodes, config.avg_parents, config.n_groups, config.group_size,
            config.scenario, config.replicates, args.seed, config.eval_rows,
            config.mc_kl_samples,
        )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    rows = run_experiment(config, jobs=args.jobs)
    write_results_csv(rows, out / "results.csv")
    manifest = {
        "version": FORMAT_VERSION,
        "config": {
            "n_nodes": list(config.n_nodes),
            "avg_parents": list(config.avg_parents),
            "n_groups": list(config.n_groups),
            "group_size": list(config.group_size),
            "scenario": config.scenario,
            "replicates": config.replicates,
            "seed": config.seed,
            "eval_rows": config.eval_rows,
            "mc_kl_samples": config.mc_kl_samples,
        },
        "rows": len(rows),
        "errors": sum(1 for r in rows if r.get("error")),
        "elapsed_s": round(time.perf_counter() - started, 3),
    }
    _write_json(manifest, out / "manifest.json")
    print(f"wrote {len(rows)} rows to {out / 'results.csv'}")
    return 0


def cmd_predict(args) -> int:
    learned = model_from_json(_read_json(args.model))
    data = read_dataset_csv(args.data, args.group_col)
    pred = predict_all(
        learned, data, know_group=args.know_f, engine=args.engine,
        n_samples=args.lw_samples, seed=args.seed or 0,
    )
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(learned.nodes))
        for r in range(pred.shape[0]):
            writer.writerow([repr(float(v)) for v in pred[r]])
    print(f"wrote {pred.shape[0]} predictions to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lmebn",
        description="Learn Gaussian Bayesian networks from related data sets "
        "under complete, no, and partial (mixed-effects) pooling.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write simulated data sets and generating models")
    gen.add_argument("--config", required=True)
    gen.add_argument("--out", required=True)
    gen.add_argument("--seed", type=int, default=None)
    gen.set_defaults(func=cmd_generate)

    learn = sub.add_parser("learn", help="structure-learn and fit one model from a CSV")
    learn.add_argument("--data", required=True)
    learn.add_argument("--strategy", required=True, choices=["gbn", "cgbn", "lme"])
    learn.add_argument("--out", required=True)
    learn.add_argument("--group-col", default=GROUP_NODE)
    learn.add_argument("--seed", type=int, default=None)
    learn.set_defaults(func=cmd_learn)

    ev = sub.add_parser("evaluate", help="score a learned model against its generating model")
    ev.add_argument("--true-model", required=True)
    ev.add_argument("--model", required=True)
    ev.add_argument("--data", required=True, help="evaluation CSV")
    ev.add_argument("--out", required=True, help="results CSV (appended)")
    ev.add_argument("--group-col", default=GROUP_NODE)
    ev.add_argument("--mc-kl-samples", type=int, default=2000)
    ev.add_argument("--train-rows", type=int, default=None)
    ev.add_argument("--seed", type=int, default=None)
    ev.set_defaults(func=cmd_evaluate)

    exp = sub.add_parser("experiment", help="run the full grid and write results.csv")
    exp.add_argument("--config", required=True)
    exp.add_argument("--out", required=True)
    exp.add_argument("--jobs", type=int, default=1)
    exp.add_argument("--seed", type=int, default=None)
    exp.set_defaults(func=cmd_experiment)

    pred = sub.add_parser("predict", help="leave-one-node-out predictions for a CSV")
    pred.add_argument("--model", required=True)
    pred.add_argument("--data", required=True)
    pred.add_argument("--out", required=True)
    pred.add_argument("--engine", choices=["exact", "lw"], default="exact")
    pred.add_argument("--lw-samples", type=int, default=10_000)
    pred.add_argument("--know-f", action="store_true")
    pred.add_argument("--group-col", default=GROUP_NODE)
    pred.add_argument("--seed", type=int, default=None)
    pred.set_defaults(func=cmd_predict)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
