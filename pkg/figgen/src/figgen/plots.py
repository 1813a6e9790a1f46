"""Figure builders over ris-resilience CSV outputs.

Two figure kinds: ``adaptation`` renders per-method recovery timelines
(mean demand-satisfaction ratio over time, blockage instants marked) from
one timeline CSV per (method, seed); ``scaling`` renders the resilience
score against the RIS element count.  Both draw a 95% confidence band over
seeds whenever more than one seed is present.

Figures are a pure function of the CSV contents; schema versions are
checked before anything is drawn.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

TIMELINE_SCHEMA = "timeline-v1"
SCALING_SCHEMA = "scaling-v1"

METHOD_STYLE = {
    "proposed": {"color": "#1f77b4", "marker": "o"},
    "baseline": {"color": "#d62728", "marker": "s"},
    "robustness-only": {"color": "#2ca02c", "marker": "^"},
}


class SchemaError(ValueError):
    """Input CSV does not carry the expected schema version."""


@dataclass
class PlotSpec:
    inputs: list[str]
    kind: str                 # "adaptation" | "scaling"
    out_path: str             # base path; .pdf and .png are both written
    title: str = ""
    dpi: int = 150
    figsize: tuple[float, float] = (6.4, 4.0)


def _read_checked(path: str, schema: str) -> pd.DataFrame:
    df = pd.read_csv(path)
    if df.empty:
        raise SchemaError(f"{path}: empty CSV, nothing to plot")
    if "schema" not in df.columns or not (df["schema"] == schema).all():
        found = df["schema"].iloc[0] if "schema" in df.columns else "<missing>"
        raise SchemaError(f"{path}: expected schema {schema!r}, found {found!r}")
    return df


def _save_pair(fig, out_path: str, dpi: int) -> list[str]:
    base, ext = os.path.splitext(out_path)
    vector = base + (ext if ext.lower() in (".pdf", ".svg") else ".pdf")
    raster = base + ".png"
    fig.savefig(vector)
    fig.savefig(raster, dpi=dpi)
    return [vector, raster]


def _ci_halfwidth(samples: np.ndarray, axis=0):
    n = samples.shape[axis]
    if n < 2:
        return None
    return 1.96 * samples.std(axis=axis, ddof=1) / np.sqrt(n)


def plot_adaptation(spec: PlotSpec):
    """Mean rate/demand ratio over time, one curve per method.

    Every input is one (method, seed) timeline; blockage instants (records
    flagged as events) appear as dashed vertical markers.
    """
    if not spec.inputs:
        raise SchemaError("no input CSVs given")
    frames = [_read_checked(p, TIMELINE_SCHEMA) for p in sorted(spec.inputs)]
    df = pd.concat(frames, ignore_index=True)

    fig, ax = plt.subplots(figsize=spec.figsize)
    for method, sub in df.groupby("method"):
        pivot = sub.pivot_table(index="t", columns="seed",
                                values="mean_rate_ratio")
        t = pivot.index.to_numpy()
        mean = pivot.mean(axis=1).to_numpy()
        style = METHOD_STYLE.get(method, {})
        ax.plot(t, np.minimum(mean, 1.05), label=method, markevery=max(len(t) // 12, 1),
                **style)
        ci = _ci_halfwidth(pivot.to_numpy().T)
        if ci is not None:
            ax.fill_between(t, np.minimum(mean - ci, 1.05), np.minimum(mean + ci, 1.05),
                            alpha=0.2, color=style.get("color"))

    event_times = sorted(df.loc[df["event"] == 1, "t"].unique())
    for t_ev in event_times:
        ax.axvline(t_ev, color="0.4", linestyle="--", linewidth=0.9, label="_event")

    ax.set_xlabel("time [s]")
    ax.set_ylabel("mean rate / demand")
    ax.set_ylim(0.0, 1.05)
    ax.grid(alpha=0.3)
    ax.legend(loc="lower left")
    if spec.title:
        ax.set_title(spec.title)
    fig.tight_layout()
    written = _save_pair(fig, spec.out_path, spec.dpi)
    return fig, written


def plot_scaling(spec: PlotSpec):
    """Resilience score against element count, one curve per method."""
    if not spec.inputs:
        raise SchemaError("no input CSVs given")
    frames = [_read_checked(p, SCALING_SCHEMA) for p in sorted(spec.inputs)]
    df = pd.concat(frames, ignore_index=True)
    runs = df[df["kind"] == "run"]
    if runs.empty:
        raise SchemaError("scaling CSV holds no per-run rows")

    fig, ax = plt.subplots(figsize=spec.figsize)
    for method, sub in runs.groupby("method"):
        by_m = sub.groupby("M")["r"]
        ms = np.array(sorted(by_m.groups))
        mean = by_m.mean().reindex(ms).to_numpy()
        style = METHOD_STYLE.get(method, {})
        ax.plot(ms, np.minimum(mean, 1.05), label=method, **style)
        counts = by_m.count().reindex(ms).to_numpy()
        if np.all(counts > 1):
            std = by_m.std(ddof=1).reindex(ms).to_numpy()
            ci = 1.96 * std / np.sqrt(counts)
            ax.fill_between(ms, np.minimum(mean - ci, 1.05),
                            np.minimum(mean + ci, 1.05),
                            alpha=0.2, color=style.get("color"))

    ax.set_xlabel("RIS elements")
    ax.set_ylabel("resilience score")
    ax.set_ylim(0.0, 1.05)
    ax.grid(alpha=0.3)
    ax.legend(loc="lower right")
    if spec.title:
        ax.set_title(spec.title)
    fig.tight_layout()
    written = _save_pair(fig, spec.out_path, spec.dpi)
    return fig, written


def render(spec: PlotSpec):
    if spec.kind == "adaptation":
        return plot_adaptation(spec)
    if spec.kind == "scaling":
        return plot_scaling(spec)
    raise SchemaError(f"unknown figure kind {spec.kind!r}")
