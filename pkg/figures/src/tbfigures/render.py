"""Render sweep-results CSVs into the three-panel comparison figure.

Input is the results CSV written by the ``targetbalance simulate`` command
(header ``scenario_id,sweep_param,sweep_value,method,reps,base_seed,
true_ate,mean_estimate,bias,variance,mse``). The figure has one panel per
summary statistic (|bias|, variance, MSE) against the sweep value, log
y-axes, one styled curve per method. Bias is plotted in absolute value
because of the log scale; rows with bias exactly zero are dropped from that
panel with a console note.

Output is deterministic: SVG metadata timestamps are suppressed and the
hash salt is pinned, so re-rendering the same CSV reproduces the same
bytes.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

REQUIRED_COLUMNS = (
    "scenario_id",
    "sweep_param",
    "sweep_value",
    "method",
    "reps",
    "base_seed",
    "true_ate",
    "mean_estimate",
    "bias",
    "variance",
    "mse",
)

PANELS = (("bias", "|bias|"), ("variance", "variance"), ("mse", "MSE"))

METHOD_STYLES = {
    "UE-CR": dict(color="#1f77b4", linestyle="--", marker="o"),
    "UE-SB": dict(color="#ff7f0e", linestyle="--", marker="s"),
    "UE-TB": dict(color="#2ca02c", linestyle="--", marker="^"),
    "WE-CR": dict(color="#d62728", linestyle="-", marker="o"),
    "WE-SB": dict(color="#9467bd", linestyle="-", marker="s"),
    "WE-TB": dict(color="#8c564b", linestyle="-", marker="^"),
}
FALLBACK_STYLE = dict(color="#7f7f7f", linestyle=":", marker="x")

AXIS_LABELS = {
    "n": "sample size n",
    "delta": "source-target distance delta",
    "clip_threshold": "importance weight threshold",
    "none": "sweep value",
}


class SchemaError(Exception):
    """The CSV does not carry the expected result columns."""


@dataclass(frozen=True)
class FigureSpec:
    input_csv: str | Path
    output_path: str | Path
    title: str = ""
    panels: tuple = PANELS
    styles: dict = field(default_factory=lambda: dict(METHOD_STYLES))


def load_results(path) -> list[dict]:
    """Parse the results CSV; raises SchemaError naming missing columns."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise SchemaError(
                f"{path}: missing columns {', '.join(missing)} "
                f"(got: {', '.join(header) or '<empty>'})"
            )
        rows = []
        for record in reader:
            rows.append(
                {
                    "sweep_param": record["sweep_param"],
                    "sweep_value": float(record["sweep_value"]),
                    "method": record["method"],
                    "bias": float(record["bias"]),
                    "variance": float(record["variance"]),
                    "mse": float(record["mse"]),
                }
            )
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return rows


def render(spec: FigureSpec) -> dict:
    """Write the figure; returns a structure summary for inspection.

    The summary maps each panel to the methods drawn in it, plus the count
    of zero-bias points dropped from the log-scale bias panel.
    """
    rows = load_results(spec.input_csv)
    methods = sorted({r["method"] for r in rows})
    sweep_param = rows[0]["sweep_param"]

    plt.rcParams["svg.hashsalt"] = "tbfigures"
    plt.rcParams["svg.fonttype"] = "none"

    fig, axes = plt.subplots(1, len(spec.panels), figsize=(13, 4.0))
    summary = {"panels": len(spec.panels), "curves": {}, "dropped_zero_bias": 0}
    for ax, (column, label) in zip(np.atleast_1d(axes), spec.panels):
        drawn = []
        for method in methods:
            pts = sorted(
                ((r["sweep_value"], r[column]) for r in rows if r["method"] == method)
            )
            xs = np.array([p[0] for p in pts])
            ys = np.array([p[1] for p in pts])
            if column == "bias":
                keep = ys != 0.0
                dropped = int((~keep).sum())
                if dropped:
                    summary["dropped_zero_bias"] += dropped
                    print(
                        f"note: dropped {dropped} zero-bias point(s) for "
                        f"{method} from the log-scale bias panel"
                    )
                xs, ys = xs[keep], np.abs(ys[keep])
            if xs.size == 0:
                continue
            style = spec.styles.get(method, FALLBACK_STYLE)
            ax.plot(xs, ys, label=method, markersize=4, **style)
            drawn.append(method)
        ax.set_yscale("log")
        ax.set_xlabel(AXIS_LABELS.get(sweep_param, sweep_param))
        ax.set_ylabel(f"{label} (log scale)")
        ax.grid(True, which="both", alpha=0.25)
        if drawn:
            ax.legend(fontsize=8)
        summary["curves"][column] = drawn

    if spec.title:
        fig.suptitle(spec.title)
    fig.tight_layout()
    fig.savefig(spec.output_path, metadata={"Date": None})
    plt.close(fig)
    summary["output"] = str(spec.output_path)
    return summary
