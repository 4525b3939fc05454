"""Render figures from mfje experiment CSV artifacts.

Each figure kind reads one documented CSV schema and writes a PNG/SVG pair;
rendering never mutates the inputs, and output filenames depend only on the
figure spec.  Figure specs are JSON files of the form::

    {"figures": [
        {"kind": "chaos", "source": "chaos.csv", "name": "chaos"},
        {"kind": "clt", "source": "clt.csv", "name": "clt"}
    ]}

``source`` and ``name`` default per kind.
"""

from __future__ import annotations

import csv
import json
import os
from typing import Dict, List

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


class PlotInputError(Exception):
    """Missing or malformed figure inputs."""


REQUIRED_COLUMNS = {
    "chaos": ("n", "mean_gap", "ci_low", "ci_high"),
    "clt": ("standardized_sum",),
    "flow": ("t", "state_label", "probability"),
    "reserve-convergence": ("n", "estimate", "se", "abs_gap"),
    "picard": ("iteration", "sup_W1_change"),
}

DEFAULT_SOURCES = {
    "chaos": "chaos.csv",
    "clt": "clt.csv",
    "flow": "flow.csv",
    "reserve-convergence": "convergence.csv",
    "picard": "iterations.csv",
}

FIGURE_KINDS = tuple(REQUIRED_COLUMNS)


def read_columns(path: str, required) -> Dict[str, list]:
    """Read a CSV into per-column lists, failing loudly on missing columns."""
    if not os.path.exists(path):
        raise PlotInputError(f"input file not found: {path}")
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        header = reader.fieldnames or []
        for col in required:
            if col not in header:
                raise PlotInputError(
                    f"{os.path.basename(path)}: missing column {col!r} "
                    f"(found {header})")
        rows = list(reader)
    if not rows:
        raise PlotInputError(f"{os.path.basename(path)}: no data rows")
    return {col: [row[col] for row in rows] for col in header}


def _floats(data, col):
    return np.array([float(v) for v in data[col]])


# ---------------------------------------------------------------------------
# figure builders; each returns a matplotlib Figure


def chaos_figure(data) -> plt.Figure:
    n = _floats(data, "n")
    gap = _floats(data, "mean_gap")
    lo = _floats(data, "ci_low")
    hi = _floats(data, "ci_high")
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.errorbar(n, gap, yerr=[gap - lo, hi - gap], fmt="o-",
                capsize=3, label="mean coupled gap")
    slope = None
    if n.size >= 2 and np.all(gap > 0):
        slope, intercept = np.polyfit(np.log(n), np.log(gap), 1)
        ax.plot(n, np.exp(intercept) * n ** slope, "--",
                label=f"fit: slope {slope:.2f}")
        ref = gap[0] * (n / n[0]) ** -0.5
        ax.plot(n, ref, ":", color="gray", label="reference slope -1/2")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("number of individuals n")
    ax.set_ylabel("mean sup-path gap")
    ax.set_title("Coupled-pair gap vs system size")
    if slope is not None:
        ax.annotate(f"slope = {slope:.2f}", xy=(0.05, 0.05),
                    xycoords="axes fraction")
    ax.legend()
    fig.tight_layout()
    return fig


def clt_overlay(samples):
    """Plot range and standard-normal density used for the CLT overlay."""
    lo = min(-4.0, float(np.min(samples)))
    hi = max(4.0, float(np.max(samples)))
    xs = np.linspace(lo, hi, 801)
    pdf = np.exp(-xs ** 2 / 2) / np.sqrt(2 * np.pi)
    return xs, pdf


def clt_figure(data) -> plt.Figure:
    z = _floats(data, "standardized_sum")
    xs, pdf = clt_overlay(z)
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.hist(z, bins=60, density=True, alpha=0.6, label="standardized sums")
    ax.plot(xs, pdf, "r-", label="standard normal")
    ax.set_xlabel("standardized sum")
    ax.set_ylabel("density")
    ax.set_title(f"Normality of standardized sums (N = {z.size})")
    ax.legend()
    fig.tight_layout()
    return fig


def flow_figure(data) -> plt.Figure:
    t = _floats(data, "t")
    p = _floats(data, "probability")
    labels = data["state_label"]
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for label in dict.fromkeys(labels):  # preserve first-seen order
        sel = np.array([lab == label for lab in labels])
        ax.plot(t[sel], p[sel], label=label)
    ax.set_xlabel("time")
    ax.set_ylabel("probability")
    ax.set_ylim(-0.02, 1.02)
    ax.set_title("State probabilities over time")
    ax.legend()
    fig.tight_layout()
    return fig


def reserve_convergence_figure(data) -> plt.Figure:
    n = _floats(data, "n")
    est = _floats(data, "estimate")
    se = _floats(data, "se")
    gap = _floats(data, "abs_gap")
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
    ax1.errorbar(n, est, yerr=1.96 * se, fmt="o-", capsize=3)
    ax1.set_xscale("log")
    ax1.set_xlabel("number of individuals n")
    ax1.set_ylabel("reserve estimate")
    ax1.set_title("Monte Carlo reserve vs n")
    ax2.loglog(n, gap, "o-")
    ax2.set_xlabel("number of individuals n")
    ax2.set_ylabel("|estimate - limit|")
    ax2.set_title("Gap to the mean-field reserve")
    fig.tight_layout()
    return fig


def picard_figure(data) -> plt.Figure:
    it = _floats(data, "iteration")
    dist = _floats(data, "sup_W1_change")
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.semilogy(it, np.maximum(dist, 1e-300), "o-")
    ax.set_xlabel("iteration")
    ax.set_ylabel("sup W1 change")
    ax.set_title("Fixed-point iteration decay")
    fig.tight_layout()
    return fig


BUILDERS = {
    "chaos": chaos_figure,
    "clt": clt_figure,
    "flow": flow_figure,
    "reserve-convergence": reserve_convergence_figure,
    "picard": picard_figure,
}


# ---------------------------------------------------------------------------
# spec-driven rendering


def load_figure_spec(path: str) -> List[dict]:
    if not os.path.exists(path):
        raise PlotInputError(f"figure spec not found: {path}")
    with open(path) as f:
        try:
            payload = json.load(f)
        except json.JSONDecodeError as exc:
            raise PlotInputError(f"figure spec is not valid JSON: {exc}") \
                from exc
    figures = payload.get("figures")
    if not isinstance(figures, list) or not figures:
        raise PlotInputError('figure spec needs a nonempty "figures" list')
    for entry in figures:
        kind = entry.get("kind")
        if kind not in BUILDERS:
            raise PlotInputError(
                f"unknown figure kind {kind!r}; expected one of "
                f"{', '.join(FIGURE_KINDS)}")
    return figures


def render(results_dir: str, figure_spec, out_dir: str) -> List[str]:
    """Render every figure in the spec; returns the written file paths.

    ``figure_spec`` is a path to a JSON spec or an already-loaded list of
    figure entries.  Each entry produces <name>.png and <name>.svg.
    """
    if isinstance(figure_spec, (str, os.PathLike)):
        figures = load_figure_spec(str(figure_spec))
    else:
        figures = list(figure_spec)
    if not os.path.isdir(results_dir):
        raise PlotInputError(f"results directory not found: {results_dir}")
    expected = sorted({entry.get("source", DEFAULT_SOURCES[entry["kind"]])
                       for entry in figures})
    present = [f for f in expected
               if os.path.exists(os.path.join(results_dir, f))]
    if not present:
        raise PlotInputError(
            f"no expected input files in {results_dir}; expected "
            f"{', '.join(expected)}")
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for entry in figures:
        kind = entry["kind"]
        source = entry.get("source", DEFAULT_SOURCES[kind])
        name = entry.get("name", kind)
        data = read_columns(os.path.join(results_dir, source),
                            REQUIRED_COLUMNS[kind])
        fig = BUILDERS[kind](data)
        try:
            for ext in ("png", "svg"):
                path = os.path.join(out_dir, f"{name}.{ext}")
                fig.savefig(path)
                written.append(path)
        finally:
            plt.close(fig)
    return written
