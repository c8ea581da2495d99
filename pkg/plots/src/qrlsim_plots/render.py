"""Figure rendering: learning curves with error bands, history bar charts.

Output is a pure function of the input CSV bytes and the style constants
below: fixed figure geometry, no timestamps in file metadata, and a pinned
SVG hash salt, so re-rendering identical inputs yields identical files.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .io import Curve, SchemaError

# explorative (small beta) blue, exploitative (large beta) orange
CURVE_COLORS = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"]
BAR_COLORS = {"exact": "#444444", "classical": "#1f77b4", "hybrid": "#ff7f0e"}
FIGSIZE = (8.0, 5.0)
DPI = 120

matplotlib.rcParams["svg.hashsalt"] = "qrlsim-plots"


def _save(fig, out_image) -> Path:
    out = Path(out_image)
    out.parent.mkdir(parents=True, exist_ok=True)
    metadata = {"Date": None} if out.suffix.lower() == ".svg" else {}
    fig.savefig(out, dpi=DPI, metadata=metadata)
    plt.close(fig)
    return out


def render_learning_curves(curves: list[Curve], out_image):
    """One figure: mean reward per epoch with a stderr band per curve."""
    if not curves:
        raise SchemaError("no curves given, refusing to render an empty figure")
    fig, ax = plt.subplots(figsize=FIGSIZE)
    for i, curve in enumerate(curves):
        color = CURVE_COLORS[i % len(CURVE_COLORS)]
        ax.plot(curve.epochs, curve.means, color=color, label=curve.label,
                linewidth=1.2)
        lower = [m - s for m, s in zip(curve.means, curve.stderrs)]
        upper = [m + s for m, s in zip(curve.means, curve.stderrs)]
        ax.fill_between(curve.epochs, lower, upper, color=color, alpha=0.25,
                        linewidth=0)
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean reward")
    ax.legend(loc="lower right")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    return _save(fig, out_image)


def render_history_bars(exact: dict[str, float],
                        empiricals: dict[str, dict[str, float]], out_image):
    """Grouped bars per rewarded history: exact next to each empirical set."""
    if not exact:
        raise SchemaError("empty exact distribution")
    keys = sorted(exact)
    for name, dist in empiricals.items():
        extra = set(dist) - set(keys)
        if extra:
            raise SchemaError(f"{name} has keys missing from exact: {sorted(extra)}")
    series = [("exact", exact)] + sorted(empiricals.items())
    width = 1.0 / (len(series) + 1)
    fig, ax = plt.subplots(figsize=FIGSIZE)
    for j, (name, dist) in enumerate(series):
        xs = [i + (j - (len(series) - 1) / 2) * width for i in range(len(keys))]
        ys = [dist.get(k, 0.0) for k in keys]
        ax.bar(xs, ys, width=width, label=name,
               color=BAR_COLORS.get(name, CURVE_COLORS[j % len(CURVE_COLORS)]))
    ax.set_xticks(range(len(keys)))
    ax.set_xticklabels(keys, rotation=45, ha="right", fontsize=8)
    ax.set_ylabel("probability")
    ax.set_xlabel("rewarded history")
    ax.legend()
    fig.tight_layout()
    return _save(fig, out_image)
