"""Static vector figures of a solved scenario (presentation only)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import shapely  # noqa: E402
from matplotlib.collections import LineCollection, PolyCollection  # noqa: E402

from .entrance import _region_pieces  # noqa: E402
from .sim import Scenario, SimResult  # noqa: E402

BRIDGE_COLOURS = plt.get_cmap("tab10").colors


def _hull(points: np.ndarray) -> np.ndarray:
    hull = shapely.MultiPoint(points).convex_hull
    if hull.geom_type != "Polygon":
        return np.asarray(hull.coords) if hasattr(hull, "coords") else points
    return np.asarray(hull.exterior.coords)


def _draw(ax, s: Scenario, result: SimResult, axes: tuple[int, int], stride: int):
    sel = list(axes)
    lo, hi = s.bounds
    ax.set_xlim(lo[sel[0]], hi[sel[0]])
    ax.set_ylim(lo[sel[1]], hi[sel[1]])
    ax.set_aspect("equal")
    ax.set_xlabel("xyz"[sel[0]])
    ax.set_ylabel("xyz"[sel[1]])
    shapes = [_hull(o.vertices[:, sel]) for o in s.obstacles.obstacles]
    ax.add_collection(PolyCollection(shapes, facecolors="#a0785a", edgecolors="#5c4033", linewidths=0.5))
    for b, (bridge, ent) in enumerate(zip(result.bridges, result.entrances)):
        colour = BRIDGE_COLOURS[b % len(BRIDGE_COLOURS)]
        if s.dimension == 2:
            a, b_ = bridge.boundaries[0].p[::stride], bridge.boundaries[-1].p[::stride]
            ax.fill(*np.vstack([a, b_[::-1]]).T, facecolor=colour, alpha=0.15, edgecolor="none")
        for boundary in bridge.boundaries:
            p = np.vstack([boundary.p[::stride], boundary.p[-1:]])
            ax.plot(p[:, sel[0]], p[:, sel[1]], color=colour, linewidth=0.8)
        for piece in _region_pieces(ent):
            ring = _hull(piece[:, sel])
            ax.fill(ring[:, 0], ring[:, 1], facecolor=colour, alpha=0.1, edgecolor=colour, linewidth=0.3)
    lines, colours = [], []
    for plan in result.plans:
        p = plan.trajectory.p
        lines.append(np.vstack([p[::stride], p[-1:]])[:, sel])
        colours.append(BRIDGE_COLOURS[(plan.bridge or 0) % len(BRIDGE_COLOURS)])
    ax.add_collection(LineCollection(lines, colors=colours, linewidths=0.4, alpha=0.7))
    for plan in result.plans:
        p = plan.trajectory.p
        ax.plot(*p[0, sel], marker="o", markersize=1.5, color="black")
        ax.plot(*p[-1, sel], marker="x", markersize=1.5, color="black")


def plot_result(s: Scenario, result: SimResult, out_dir, fmt: str = "svg", stride: int = 10) -> list[Path]:
    """Write the scenario figure (two projections in 3D) and return the file paths."""
    if fmt not in ("svg", "pdf"):
        raise ValueError("plots are written as svg or pdf")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    views = [(0, 1)] if s.dimension == 2 else [(0, 1), (0, 2)]
    fig, axs = plt.subplots(1, len(views), figsize=(7 * len(views), 5), squeeze=False)
    for ax, view in zip(axs[0], views):
        _draw(ax, s, result, view, stride)
    fig.suptitle(f"{s.name}: {len(result.plans)} agents, {len(result.bridges)} bridges")
    fig.tight_layout()
    path = out_dir / f"{s.name}.{fmt}"
    fig.savefig(path, metadata={"Date": None} if fmt == "svg" else {"CreationDate": None})
    plt.close(fig)
    return [path]
