"""Figure rendering for the CLI report path.

Each figure is drawn from the same rows that land in the delimited
outputs, so the CSV stays the canonical artifact and the PNG is a
ready-to-look-at companion.  The Agg backend keeps rendering headless and
byte-reproducible for identical inputs.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

_ARM_COLORS = ("#4477aa", "#ee6677", "#228833", "#ccbb44", "#66ccee", "#aa3377")


def _color(arm: int) -> str:
    return _ARM_COLORS[arm % len(_ARM_COLORS)]


def save_overlap_figure(histogram_rows: list[dict], path: str | Path) -> None:
    """Mirrored per-arm propensity-score histogram from decile-count rows."""
    arms = sorted({row["arm"] for row in histogram_rows})
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for arm in arms:
        rows = [r for r in histogram_rows if r["arm"] == arm]
        lows = [r["bin_low"] for r in rows]
        widths = [r["bin_high"] - r["bin_low"] for r in rows]
        counts = [r["count"] for r in rows]
        sign = 1.0 if arm == max(arms) else -1.0
        ax.bar(
            lows,
            [sign * c for c in counts],
            width=widths,
            align="edge",
            color=_color(arm),
            alpha=0.85,
            label=f"arm {arm}",
        )
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.set_xlabel("propensity score")
    ax.set_ylabel("count (mirrored by arm)")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_smd_figure(names, unweighted, weighted, path: str | Path) -> None:
    """Dot chart of standardized mean differences before and after weighting."""
    order = range(len(names))
    fig, ax = plt.subplots(figsize=(6.4, max(2.5, 0.35 * len(names) + 1.2)))
    ax.axvline(0.0, color="black", linewidth=0.8)
    for ref in (-0.1, 0.1):
        ax.axvline(ref, color="grey", linewidth=0.8, linestyle="--")
    ax.scatter(unweighted, order, marker="o", facecolors="none", edgecolors="#4477aa", label="unweighted")
    ax.scatter(weighted, order, marker="D", color="#ee6677", label="weighted")
    ax.set_yticks(list(order))
    ax.set_yticklabels(names)
    ax.invert_yaxis()
    ax.set_xlabel("standardized mean difference (arm 1 - arm 0)")
    ax.legend(frameon=False, loc="best")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_weights_figure(weight_rows: list[dict], path: str | Path) -> None:
    """Per-arm weight histograms; trimmed-out units are excluded."""
    arms = sorted({row["arm"] for row in weight_rows})
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for arm in arms:
        values = [r["weight"] for r in weight_rows if r["arm"] == arm and r["kept"]]
        ax.hist(values, bins=30, histtype="step", linewidth=1.4, color=_color(arm), label=f"arm {arm}")
    ax.set_xlabel("weight")
    ax.set_ylabel("units")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_simulation_figure(points_by_scheme: dict, targets: dict, path: str | Path) -> None:
    """Box plot of per-replicate point estimates per scheme, with each
    scheme's true estimand marked."""
    names = list(points_by_scheme)
    series = [
        [p for p in points_by_scheme[name] if p == p]  # drop NaN
        for name in names
    ]
    fig, ax = plt.subplots(figsize=(1.6 * max(4, len(names)), 4.2))
    ax.boxplot(series, tick_labels=names, showfliers=True)
    for i, name in enumerate(names, start=1):
        ax.hlines(targets[name], i - 0.35, i + 0.35, color="#ee6677", linewidth=1.6)
    ax.set_ylabel("point estimate per replicate")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
