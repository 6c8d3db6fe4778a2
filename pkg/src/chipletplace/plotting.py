"""Figures written next to the CSV/PGM exports."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.patches import Rectangle  # noqa: E402
import numpy as np  # noqa: E402

plt.rcParams.update({"font.size": 9, "axes.titlesize": 10, "figure.dpi": 110})


def _outline(ax, spec, placement):
    for c in spec.chiplets:
        x0, y0, x1, y1 = placement.rect(c)
        ax.add_patch(Rectangle((x0, y0), x1 - x0, y1 - y0, fill=False, lw=0.8, ec="k"))
        ax.text((x0 + x1) / 2, (y0 + y1) / 2, c.name, ha="center", va="center", fontsize=7)


def plot_plane(values, dx, dy, path, title="", unit="", spec=None, placement=None, cmap="inferno"):
    """Heat map of one horizontal plane, optionally with die outlines."""
    ny, nx = values.shape
    fig, ax = plt.subplots(figsize=(4.4, 3.6))
    im = ax.imshow(values, origin="lower", extent=(0, nx * dx, 0, ny * dy), cmap=cmap)
    fig.colorbar(im, ax=ax, label=unit)
    if spec is not None and placement is not None:
        _outline(ax, spec, placement)
    ax.set_xlabel("x (mm)")
    ax.set_ylabel("y (mm)")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return Path(path)


def plot_trace(report: dict, path):
    trace = report["trace"]
    step = [e["step"] for e in trace]
    fig, axes = plt.subplots(2, 2, figsize=(7.5, 5), sharex=True)
    axes[0, 0].plot(step, [e["cost"] for e in trace], lw=0.8, label="accepted")
    axes[0, 0].plot(step, [e["best_cost"] for e in trace], lw=1.2, label="best")
    axes[0, 0].set_ylabel("cost")
    axes[0, 0].legend(frameon=False)
    for ax, key, lab in (
        (axes[0, 1], "peak_temp", "peak T (C)"),
        (axes[1, 0], "peak_stress", "peak stress (MPa)"),
        (axes[1, 1], "wirelength", "wirelength (mm)"),
    ):
        ax.plot(step, [e[key] for e in trace], lw=0.8)
        ax.set_ylabel(lab)
    for ax in axes[1]:
        ax.set_xlabel("iteration")
    fig.suptitle(f"{report['architecture']} / {report['objective'].upper()} / seed {report['seed']}")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return Path(path)


def plot_comparison(comparison, path):
    objs = list(comparison.rows)
    keys = (("peak_temp", "peak T (C)"), ("peak_stress", "peak stress (MPa)"), ("wirelength", "wirelength (mm)"))
    fig, axes = plt.subplots(1, 3, figsize=(8, 2.8))
    for ax, (k, lab) in zip(axes, keys):
        med = np.array([comparison.rows[o][k] for o in objs])
        lo = med - np.array([comparison.rows[o][f"{k}_min"] for o in objs])
        hi = np.array([comparison.rows[o][f"{k}_max"] for o in objs]) - med
        ax.bar([o.upper() for o in objs], med, yerr=[lo, hi], color="0.6", capsize=3)
        ax.set_title(lab)
        span = (med + hi).max() - (med - lo).min()
        span = span if span > 0 else max(abs(med).max() * 0.05, 1.0)
        ax.set_ylim(max(0.0, (med - lo).min() - 0.5 * span), (med + hi).max() + 0.3 * span)
    fig.suptitle(comparison.architecture)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return Path(path)


def render_run_figures(report: dict, detail: dict, spec, placement, outdir) -> list[Path]:
    outdir = Path(outdir)
    t, s, grad = detail["temperature"], detail["stress"].field, detail["gradient"].field
    out = [
        plot_plane(t.plane("chiplet"), t.dx, t.dy, outdir / "temperature_chiplet.png",
                   "temperature, die layer", "C", spec, placement),
        plot_plane(s.plane("heatsink"), s.dx, s.dy, outdir / "stress_heatsink.png",
                   "von Mises, heat sink top", "MPa", spec, placement, cmap="viridis"),
        plot_plane(s.plane("interposer"), s.dx, s.dy, outdir / "stress_interposer.png",
                   "von Mises, interposer", "MPa", spec, placement, cmap="viridis"),
        plot_plane(grad.values[0], grad.dx, grad.dy, outdir / "gradient_interposer.png",
                   "|grad T|, interposer", "C/mm", spec, placement, cmap="magma"),
        plot_trace(report, outdir / "trace.png"),
    ]
    return out
