"""Build the five result figures from an experiment results CSV.

The input schema is the documented results contract of the learning
pipeline; nothing is recomputed here. Each figure id selects its scenario
rows, pairs strategies within (cell, replicate), and draws grouped
boxplots. Rendering is deterministic and overwrites existing files.
"""

from __future__ import annotations

import sys
import warnings
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
# reproducible output: stable SVG element ids, no embedded timestamps
matplotlib.rcParams["svg.hashsalt"] = "lmebn-figures"

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

REQUIRED_COLUMNS = [
    "N", "avg_parents", "F", "n_j", "scenario", "replicate", "strategy",
    "shd", "kl_joint", "kl_mc_xonly", "rmad_known_f", "rmad_unknown_f",
    "f1", "n_over_p", "runtime_ms", "error",
]

FIGURE_IDS = (
    "balanced-diff",
    "efficiency",
    "predictive-balanced",
    "predictive-unbalanced",
    "homogeneous-ratio",
)

PAIR_KEY = ["N", "avg_parents", "F", "n_j", "replicate"]

COLOR_SHD = "tab:blue"
COLOR_KL = "tab:green"
COLOR_LME = "ivory"
COLOR_CGBN = "pink"


class SchemaError(ValueError):
    """The results file does not match the documented column contract."""


def load_results(path: str | Path) -> pd.DataFrame:
    df = pd.read_csv(path, dtype={"error": "string"})
    missing = [c for c in REQUIRED_COLUMNS if c not in df.columns]
    extra = [c for c in df.columns if c not in REQUIRED_COLUMNS]
    if missing or extra:
        raise SchemaError(
            f"results schema mismatch: missing columns {missing}, unexpected columns {extra}"
        )
    df = df[df["error"].isna() | (df["error"] == "")]
    return df


def _paired(df: pd.DataFrame, strat_a: str, strat_b: str, columns) -> pd.DataFrame:
    a = df[df["strategy"] == strat_a].set_index(PAIR_KEY)[columns]
    b = df[df["strategy"] == strat_b].set_index(PAIR_KEY)[columns]
    joined = a.join(b, lsuffix=f"_{strat_a}", rsuffix=f"_{strat_b}", how="inner")
    return joined.reset_index()


def _np_bins(values: pd.Series, max_bins: int = 5):
    """Group the samples-per-parameter axis into readable interval labels."""
    uniq = np.unique(np.round(values, 3))
    if len(uniq) <= max_bins:
        labels = [f"{u:g}" for u in uniq]
        codes = np.searchsorted(uniq, np.round(values, 3))
        return codes, labels
    binned, edges = pd.qcut(values, max_bins, retbins=True, duplicates="drop", labels=False)
    labels = [f"{edges[i]:.2f}-{edges[i + 1]:.2f}" for i in range(len(edges) - 1)]
    return binned.to_numpy(), labels


def _grouped_box(ax, frame, group_col, series, title, ylabel):
    """Side-by-side boxplots per group value; series = [(values, label, color)]."""
    groups = sorted(frame[group_col].unique())
    k = len(series)
    width = 0.8 / k
    for si, (col, label, color) in enumerate(series):
        data = [frame.loc[frame[group_col] == g, col].to_numpy() for g in groups]
        positions = [i + (si - (k - 1) / 2) * width for i in range(len(groups))]
        ax.boxplot(
            data,
            positions=positions,
            widths=width * 0.9,
            patch_artist=True,
            boxprops={"facecolor": color},
            medianprops={"color": "black"},
            flierprops={"markersize": 3},
        )
    ax.set_xticks(range(len(groups)))
    ax.set_xticklabels([f"{g:g}" if isinstance(g, (int, float)) else str(g) for g in groups])
    ax.set_title(title)
    ax.set_ylabel(ylabel)
    handles = [plt.Rectangle((0, 0), 1, 1, facecolor=c, edgecolor="black") for _, _, c in series]
    ax.legend(handles, [lab for _, lab, _ in series], fontsize=8)


def build_balanced_diff(df: pd.DataFrame, kl_column: str):
    rows = df[df["scenario"] == "balanced"]
    pairs = _paired(rows, "lme", "cgbn", ["shd", kl_column])
    if pairs.empty:
        return None
    pairs["shd_diff"] = pairs["shd_lme"] - pairs["shd_cgbn"]
    pairs["kl_diff"] = pairs[f"{kl_column}_lme"] - pairs[f"{kl_column}_cgbn"]
    fig, axes = plt.subplots(2, 2, figsize=(11, 7), constrained_layout=True)
    for ax, var in zip(axes.ravel(), ["N", "avg_parents", "F", "n_j"]):
        _grouped_box(
            ax, pairs, var,
            [("shd_diff", "SHD difference", COLOR_SHD), ("kl_diff", "KL difference", COLOR_KL)],
            f"by {var}", "mixed-effects minus no-pooling",
        )
        ax.axhline(0.0, color="gray", linewidth=0.8, linestyle="--")
    fig.suptitle("Structure and distribution error differences (negative favours mixed effects)")
    return fig


def build_efficiency(df: pd.DataFrame, kl_column: str):
    rows = df[df["scenario"] == "balanced"]
    pairs = _paired(rows, "lme", "cgbn", ["shd", kl_column, "n_over_p"])
    if pairs.empty:
        return None
    codes, labels = _np_bins(pairs["n_over_p_lme"])
    pairs = pairs.assign(np_bin=codes)
    fig, axes = plt.subplots(1, 2, figsize=(11, 4.5), constrained_layout=True)
    for ax, metric, title in (
        (axes[0], "shd", "SHD"),
        (axes[1], kl_column, "KL"),
    ):
        _grouped_box(
            ax, pairs, "np_bin",
            [
                (f"{metric}_lme", "mixed effects", COLOR_LME),
                (f"{metric}_cgbn", "no pooling", COLOR_CGBN),
            ],
            title, title,
        )
        ax.set_xticklabels([labels[int(v)] for v in sorted(pairs["np_bin"].unique())])
        ax.set_xlabel("samples per parameter")
    fig.suptitle("Sample efficiency")
    return fig


def _build_predictive(df: pd.DataFrame, scenario: str):
    rows = df[df["scenario"] == scenario]
    pairs = _paired(
        rows, "lme", "cgbn", ["f1", "rmad_known_f", "rmad_unknown_f", "n_over_p"]
    )
    if pairs.empty:
        return None
    codes, labels = _np_bins(pairs["n_over_p_lme"])
    pairs = pairs.assign(np_bin=codes)
    pairs["rmad_known_diff"] = pairs["rmad_known_f_lme"] - pairs["rmad_known_f_cgbn"]
    pairs["rmad_unknown_diff"] = pairs["rmad_unknown_f_lme"] - pairs["rmad_unknown_f_cgbn"]
    fig, axes = plt.subplots(2, 2, figsize=(11, 7), constrained_layout=True)
    f1_series = [
        ("f1_lme", "mixed effects", COLOR_LME),
        ("f1_cgbn", "no pooling", COLOR_CGBN),
    ]
    _grouped_box(axes[0, 0], pairs, "F", f1_series, "classification by group count", "macro F1")
    _grouped_box(axes[0, 1], pairs, "np_bin", f1_series, "classification by samples per parameter", "macro F1")
    axes[0, 1].set_xticklabels([labels[int(v)] for v in sorted(pairs["np_bin"].unique())])
    diff_series = [
        ("rmad_known_diff", "group known", COLOR_SHD),
        ("rmad_unknown_diff", "group unknown", COLOR_KL),
    ]
    _grouped_box(axes[1, 0], pairs, "F", diff_series, "prediction error by group count", "RMAD difference")
    _grouped_box(axes[1, 1], pairs, "np_bin", diff_series, "prediction error by samples per parameter", "RMAD difference")
    axes[1, 1].set_xticklabels([labels[int(v)] for v in sorted(pairs["np_bin"].unique())])
    for ax in axes[1]:
        ax.axhline(0.0, color="gray", linewidth=0.8, linestyle="--")
    fig.suptitle(f"Predictive and classification accuracy ({scenario} data)")
    return fig


def build_predictive_balanced(df: pd.DataFrame, kl_column: str):
    return _build_predictive(df, "balanced")


def build_predictive_unbalanced(df: pd.DataFrame, kl_column: str):
    return _build_predictive(df, "unbalanced")


def build_homogeneous_ratio(df: pd.DataFrame, kl_column: str):
    rows = df[df["scenario"] == "homogeneous"]
    lme = _paired(rows, "lme", "gbn", ["shd", kl_column, "n_over_p"])
    cgbn = _paired(rows, "cgbn", "gbn", ["shd", kl_column])
    if lme.empty or cgbn.empty:
        return None
    merged = lme.merge(cgbn, on=PAIR_KEY, how="inner")
    with np.errstate(divide="ignore", invalid="ignore"):
        merged["shd_ratio_lme"] = merged["shd_lme"] / merged["shd_gbn_x"]
        merged["shd_ratio_cgbn"] = merged["shd_cgbn"] / merged["shd_gbn_y"]
        merged["kl_ratio_lme"] = merged[f"{kl_column}_lme"] / merged[f"{kl_column}_gbn_x"]
        merged["kl_ratio_cgbn"] = merged[f"{kl_column}_cgbn"] / merged[f"{kl_column}_gbn_y"]
    merged = merged.replace([np.inf, -np.inf], np.nan).dropna(
        subset=["shd_ratio_lme", "shd_ratio_cgbn", "kl_ratio_lme", "kl_ratio_cgbn"]
    )
    if merged.empty:
        return None
    codes, labels = _np_bins(merged["n_over_p_lme"])
    merged = merged.assign(np_bin=codes)
    fig, axes = plt.subplots(1, 2, figsize=(11, 4.5), constrained_layout=True)
    for ax, metric, title in ((axes[0], "shd_ratio", "SHD ratio"), (axes[1], "kl_ratio", "KL ratio")):
        _grouped_box(
            ax, merged, "np_bin",
            [
                (f"{metric}_lme", "mixed effects / pooled", COLOR_LME),
                (f"{metric}_cgbn", "no pooling / pooled", COLOR_CGBN),
            ],
            title, title,
        )
        ax.set_xticklabels([labels[int(v)] for v in sorted(merged["np_bin"].unique())])
        ax.set_xlabel("samples per parameter")
        ax.axhline(1.0, color="black", linewidth=1.0, linestyle="--")
    fig.suptitle("Homogeneous data: values above 1 favour the pooled model")
    return fig


BUILDERS = {
    "balanced-diff": build_balanced_diff,
    "efficiency": build_efficiency,
    "predictive-balanced": build_predictive_balanced,
    "predictive-unbalanced": build_predictive_unbalanced,
    "homogeneous-ratio": build_homogeneous_ratio,
}


def build_figure(df: pd.DataFrame, figure_id: str, kl_column: str = "kl_joint"):
    """One matplotlib Figure, or None when the id's row selection is empty."""
    if figure_id not in BUILDERS:
        raise ValueError(f"unknown figure id {figure_id!r}; know {sorted(BUILDERS)}")
    if kl_column not in ("kl_joint", "kl_mc_xonly"):
        raise ValueError(f"kl column must be kl_joint or kl_mc_xonly, got {kl_column!r}")
    return BUILDERS[figure_id](df, kl_column)


def render_figures(
    results_csv: str | Path,
    out_dir: str | Path,
    figure_ids=FIGURE_IDS,
    kl_column: str = "kl_joint",
) -> list[Path]:
    """Write each requested figure as PNG and SVG; skip empty selections."""
    df = load_results(results_csv)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    for figure_id in figure_ids:
        fig = build_figure(df, figure_id, kl_column)
        if fig is None:
            warnings.warn(f"no rows for figure {figure_id!r}; skipped", stacklevel=2)
            print(f"warning: no rows for figure {figure_id!r}; skipped", file=sys.stderr)
            continue
        for ext in ("png", "svg"):
            path = out_dir / f"{figure_id}.{ext}"
            metadata = {"Date": None} if ext == "svg" else None
            fig.savefig(path, dpi=150, metadata=metadata)
            written.append(path)
        plt.close(fig)
    return written
