"""SVG renderings of nets, ball systems, ambient maps and interval families (dimension <= 2)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.patches import Circle  # noqa: E402

plt.rcParams["svg.hashsalt"] = "regset"


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    return str(path)


def _xy(points):
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] == 1:
        return pts[:, 0], np.zeros(pts.shape[0])
    return pts[:, 0], pts[:, 1]


def plot_net(points, path, title=None, weights=None):
    fig, ax = plt.subplots(figsize=(6, 6 if np.asarray(points).shape[-1] > 1 else 1.6))
    x, y = _xy(points)
    size = 4 if weights is None else 4 + 40 * np.asarray(weights) / max(np.max(weights), 1e-300)
    ax.scatter(x, y, s=size, c="k", linewidths=0)
    if np.asarray(points).shape[-1] > 1:
        ax.set_aspect("equal")
    else:
        ax.set_yticks([])
    if title:
        ax.set_title(title)
    return _save(fig, path)


def plot_balls(points, centers, radii, path, title=None):
    fig, ax = plt.subplots(figsize=(6, 6))
    x, y = _xy(points)
    ax.scatter(x, y, s=3, c="k", linewidths=0)
    cx, cy = _xy(centers)
    for a, b, r in zip(cx, cy, radii):
        ax.add_patch(Circle((a, b), r, fill=False, lw=0.6, color="tab:blue"))
    ax.set_aspect("equal")
    ax.autoscale_view()
    if title:
        ax.set_title(title)
    return _save(fig, path)


def plot_ambient(before, after, path, title=None):
    """Probe cloud before and after a map, side by side."""
    fig, axes = plt.subplots(1, 2, figsize=(10, 5))
    for ax, pts, name in zip(axes, (before, after), ("input", "image")):
        x, y = _xy(pts)
        ax.scatter(x, y, s=2, c=np.arange(len(x)), cmap="viridis", linewidths=0)
        ax.set_aspect("equal")
        ax.set_title(name)
    if title:
        fig.suptitle(title)
    return _save(fig, path)


def plot_intervals(levels, path, max_levels=6):
    """One strip per level; ``levels`` holds ``(lo, hi, tag)`` lists."""
    levels = levels[:max_levels]
    fig, ax = plt.subplots(figsize=(8, 0.5 + 0.4 * len(levels)))
    for row, ivs in enumerate(levels):
        for lo, hi, _ in ivs:
            ax.plot([float(lo), float(hi)], [-row, -row], lw=4, c="k", solid_capstyle="butt")
    ax.set_yticks([-r for r in range(len(levels))])
    ax.set_yticklabels([str(r + 1) for r in range(len(levels))])
    ax.set_xlim(0, 1)
    ax.set_ylim(-len(levels) + 0.5, 0.5)
    return _save(fig, path)
