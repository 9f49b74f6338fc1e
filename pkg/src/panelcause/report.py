"""Figure rendering for CLI reports.

Every figure lands next to its plot-data CSV so reports are usable both
as images and as raw series. Uses the non-interactive Agg backend; no
display is ever required.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

TREATED_COLOR = "#1a1a1a"
SYNTH_COLOR = "#d62728"
PRE_COLOR = "#d62728"
POST_COLOR = "#1f77b4"


def _treatment_line(ax, times, t_pre):
    if 0 < t_pre < len(times):
        ax.axvline(times[t_pre - 1], color="gray", linestyle="--", linewidth=1)


def save_fit_figure(path, times, observed, synthetic, t_pre, title="Synthetic control fit"):
    fig, ax = plt.subplots(figsize=(9, 5))
    ax.plot(times, observed, color=TREATED_COLOR, linewidth=1.6, label="actual")
    ax.plot(times, synthetic, color=SYNTH_COLOR, linewidth=1.6, linestyle="--", label="synthetic")
    _treatment_line(ax, times, t_pre)
    ax.set_xlabel("day")
    ax.set_ylabel("outcome")
    ax.set_title(title)
    ax.legend(frameon=False)
    fig.autofmt_xdate()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def save_weights_figure(path, weights: dict[str, float], title="Donor weights"):
    items = sorted(weights.items(), key=lambda kv: -kv[1])
    labels = [k for k, _ in items]
    values = [v for _, v in items]
    fig, ax = plt.subplots(figsize=(max(5, 0.5 * len(labels) + 2), 4))
    ax.bar(range(len(values)), values, color=POST_COLOR, alpha=0.85)
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=45, ha="right")
    ax.set_ylabel("weight")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def save_gaps_figure(path, times, gap_series: dict[str, np.ndarray], treated_unit, t_pre,
                     title="Placebo gaps"):
    fig, ax = plt.subplots(figsize=(9, 5))
    for unit, gap in gap_series.items():
        if unit == treated_unit:
            continue
        ax.plot(times, gap, color="lightgray", linewidth=0.8)
    if treated_unit in gap_series:
        ax.plot(times, gap_series[treated_unit], color=SYNTH_COLOR, linewidth=1.8,
                label=treated_unit)
        ax.legend(frameon=False)
    ax.axhline(0.0, color="black", linewidth=0.8)
    _treatment_line(ax, times, t_pre)
    ax.set_xlabel("day")
    ax.set_ylabel("actual - synthetic")
    ax.set_title(title)
    fig.autofmt_xdate()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def save_rmse_ratio_figure(path, units, treated_unit, title="Post/pre RMSE ratios"):
    considered = [u for u in units if u.passed_filter]
    considered.sort(key=lambda u: u.ratio)
    labels = [u.unit for u in considered]
    ratios = [u.ratio for u in considered]
    colors = [SYNTH_COLOR if u.unit == treated_unit else POST_COLOR for u in considered]
    fig, ax = plt.subplots(figsize=(8, max(3, 0.28 * len(labels) + 1)))
    ax.barh(range(len(ratios)), ratios, color=colors, alpha=0.9)
    ax.set_yticks(range(len(labels)))
    ax.set_yticklabels(labels, fontsize=7)
    ax.set_xlabel("post-RMSE / pre-RMSE")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def save_att_figure(path, series, title="ATT by day"):
    days = list(series.days)
    fig, ax = plt.subplots(figsize=(9, 5))
    for pre in (True, False):
        mask = (series.is_pre == pre) & series.estimable
        if not mask.any():
            continue
        color = PRE_COLOR if pre else POST_COLOR
        x = [d for d, m in zip(days, mask) if m]
        ax.errorbar(
            x,
            series.att[mask],
            yerr=np.vstack([series.att[mask] - series.band_lo[mask],
                            series.band_hi[mask] - series.att[mask]]),
            fmt="o",
            color=color,
            ecolor=color,
            elinewidth=1.1,
            capsize=2,
            markersize=3.5,
            label="pre-treatment" if pre else "post-treatment",
        )
    ax.axhline(0.0, color="black", linewidth=0.8)
    base_pos = int(np.sum(series.is_pre))
    _treatment_line(ax, days, base_pos)
    ax.set_xlabel("day")
    ax.set_ylabel("ATT")
    ax.set_title(title)
    ax.legend(frameon=False)
    fig.autofmt_xdate()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def save_decomp_figure(path, post_times, tau, gamma, tau_c, title="Effect decomposition"):
    fig, ax = plt.subplots(figsize=(9, 5))
    ax.plot(post_times, tau, color=TREATED_COLOR, linewidth=1.6, label="total effect")
    ax.plot(post_times, gamma, color=POST_COLOR, linewidth=1.6, label="calendar-event effect")
    ax.plot(post_times, tau_c, color=SYNTH_COLOR, linewidth=1.6, linestyle="--",
            label="disclosure effect")
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.set_xlabel("day")
    ax.set_ylabel("effect")
    ax.set_title(title)
    ax.legend(frameon=False)
    fig.autofmt_xdate()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def save_loo_figure(path, times, observed, baseline, reduced: dict[str, np.ndarray], t_pre,
                    title="Leave-one-out synthetic series"):
    fig, ax = plt.subplots(figsize=(9, 5))
    for unit, series in reduced.items():
        ax.plot(times, series, color="lightgray", linewidth=0.9)
    ax.plot(times, observed, color=TREATED_COLOR, linewidth=1.6, label="actual")
    ax.plot(times, baseline, color=SYNTH_COLOR, linewidth=1.6, linestyle="--", label="synthetic")
    _treatment_line(ax, times, t_pre)
    ax.set_xlabel("day")
    ax.set_ylabel("outcome")
    ax.set_title(title)
    ax.legend(frameon=False)
    fig.autofmt_xdate()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def save_group_means_figure(path, group_means, title=None):
    groups = list(group_means.means)
    pre = [group_means.means[g]["pre"] for g in groups]
    post = [group_means.means[g]["post"] for g in groups]
    x = np.arange(len(groups))
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar(x - 0.18, pre, width=0.36, label="pre", color=POST_COLOR, alpha=0.85)
    ax.bar(x + 0.18, post, width=0.36, label="post", color=SYNTH_COLOR, alpha=0.85)
    ax.set_xticks(x)
    ax.set_xticklabels(groups)
    ax.set_ylabel(group_means.outcome)
    ax.set_title(title or f"Group means: {group_means.outcome}")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)
