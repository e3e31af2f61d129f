"""Reachable regions of bridge gates, bridge seeding, and the greedy bridge-assignment loop."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage, optimize, sparse
from scipy.sparse import csgraph

from .bridge import Bridge, construct_bridge
from .dynamics import AgentLimits
from .entrance import Entrance, EntranceBlocked, build_entrance, entrance_depth
from .geom import ObstacleSet, as_vec, orthonormal_complement, perp2, unit
from .rrt import PlanningFailed, RrtConfig

log = logging.getLogger(__name__)

FORWARD, BACKWARD = "forward", "backward"


class AssignmentError(RuntimeError):
    def __init__(self, agent: int, msg: str):
        super().__init__(f"agent {agent}: {msg}")
        self.agent = agent


def axis_times(dist, limits: AgentLimits, dim: int) -> np.ndarray:
    """Rest-to-rest time over a per-axis distance (vectorized form of ``travel_time``)."""
    d = np.abs(np.asarray(dist, dtype=float))
    root = math.sqrt(dim)
    v, a = limits.v_max / root, limits.a_max / root
    with np.errstate(invalid="ignore"):
        return np.where(d <= v * v / a, 2.0 * np.sqrt(d / a), d / v + v / a)


def travel_times(P, Q, limits: AgentLimits) -> np.ndarray:
    """travel_time between paired rows of P and Q; it depends only on the largest axis distance."""
    P, Q = np.atleast_2d(P), np.atleast_2d(Q)
    return axis_times(np.abs(Q - P).max(axis=1), limits, P.shape[1])


def _chebyshev_to_segment(Q: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Exact min over the segment ab of the max-axis distance to each query.

    The objective is convex and piecewise linear in the segment parameter, so
    its minimum sits at an endpoint, an axis zero, or a crossing of two axes.
    """
    d = Q - a
    e = b - a
    D = len(e)
    cands = [np.zeros(len(Q)), np.ones(len(Q))]
    with np.errstate(divide="ignore", invalid="ignore"):
        for k in range(D):
            if e[k] != 0:
                cands.append(d[:, k] / e[k])
            for l in range(k + 1, D):
                for sgn in (1.0, -1.0):
                    den = e[k] - sgn * e[l]
                    if den != 0:
                        cands.append((d[:, k] - sgn * d[:, l]) / den)
    lam = np.clip(np.stack(cands, 1), 0.0, 1.0)
    lam = np.nan_to_num(lam, nan=0.0)
    res = d[:, None, :] - lam[:, :, None] * e
    return np.abs(res).max(axis=2).min(axis=1)


def _chebyshev_to_polygon(Q: np.ndarray, verts: np.ndarray) -> np.ndarray:
    """Exact min max-axis distance from each query to the convex hull of ``verts`` (a linear program)."""
    K, D = verts.shape
    # variables: hull weights (K) then the bound t; minimise t
    c = np.zeros(K + 1)
    c[-1] = 1.0
    A_ub = np.zeros((2 * D, K + 1))
    A_ub[:D, :K] = -verts.T
    A_ub[D:, :K] = verts.T
    A_ub[:, -1] = -1.0
    A_eq = np.zeros((1, K + 1))
    A_eq[0, :K] = 1.0
    out = np.empty(len(Q))
    for i, q in enumerate(Q):
        res = optimize.linprog(c, A_ub=A_ub, b_ub=np.concatenate([-q, q]), A_eq=A_eq, b_eq=[1.0],
                               bounds=[(0, None)] * (K + 1), method="highs")
        out[i] = res.fun
    return out


def chebyshev_to_gate(Q, anchors) -> np.ndarray:
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    anchors = np.atleast_2d(np.asarray(anchors, dtype=float))
    if len(anchors) == 1:
        return np.abs(Q - anchors[0]).max(axis=1)
    if len(anchors) == 2:
        return _chebyshev_to_segment(Q, anchors[0], anchors[1])
    return _chebyshev_to_polygon(Q, anchors)


@dataclass(frozen=True, eq=False)
class ReachRegion:
    """Positions reachable from (forward) or able to reach (backward) a gate within ``tau``.

    The gate is the convex hull of ``anchors``; the minimum travel time over the
    whole gate is evaluated exactly.
    """

    anchors: np.ndarray
    tau: float
    direction: str = FORWARD

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.anchors, dtype=float))
        if len(a) < 2:
            raise ValueError("a gate needs at least two anchor points")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.direction not in (FORWARD, BACKWARD):
            raise ValueError(f"unknown direction {self.direction!r}")
        object.__setattr__(self, "anchors", a)

    def min_times(self, Q, limits: AgentLimits) -> np.ndarray:
        # rest-to-rest time is symmetric, so both directions share one evaluation
        return axis_times(chebyshev_to_gate(Q, self.anchors), limits, self.anchors.shape[1])


def region_contains(region: ReachRegion, q, limits: AgentLimits) -> bool:
    return bool(region.min_times(as_vec(q)[None], limits)[0] < region.tau)


def region_contains_many(region: ReachRegion, Q, limits: AgentLimits) -> np.ndarray:
    return region.min_times(Q, limits) < region.tau


def forward_region(bridge: Bridge, tau: float) -> ReachRegion:
    return ReachRegion(bridge.end_gate, tau, FORWARD)


def backward_region(bridge: Bridge, tau: float) -> ReachRegion:
    return ReachRegion(bridge.start_gate, tau, BACKWARD)


def default_tau(obstacles: ObstacleSet, limits: AgentLimits) -> float:
    if obstacles.bounds is None:
        raise ValueError("default tau needs workspace bounds")
    lo, hi = obstacles.bounds
    return float(np.linalg.norm(hi - lo)) / limits.v_max + 2 * limits.v_max / limits.a_max


# --------------------------------------------------------------------------
# Bridge seeding from a maximum-clearance grid path
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ClearanceGrid:
    origin: np.ndarray
    cell: float
    free: np.ndarray  # boolean occupancy, True where the cell centre is collision-free
    clearance: np.ndarray  # distance from each free cell centre to the nearest blocked cell

    def centres(self, idx) -> np.ndarray:
        return self.origin + (np.asarray(idx, dtype=float) + 0.5) * self.cell

    def index_of(self, p) -> tuple[int, ...]:
        i = np.floor((as_vec(p) - self.origin) / self.cell).astype(int)
        return tuple(np.clip(i, 0, np.array(self.free.shape) - 1))


def clearance_grid(obstacles: ObstacleSet, cell: float) -> ClearanceGrid:
    if obstacles.bounds is None:
        raise ValueError("clearance grid needs workspace bounds")
    lo, hi = obstacles.bounds
    shape = np.maximum(1, np.ceil((hi - lo) / cell).astype(int))
    axes = [lo[k] + (np.arange(shape[k]) + 0.5) * cell for k in range(len(lo))]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, len(lo))
    free = ~obstacles.points_collide(pts).reshape(tuple(shape))
    # cells outside the workspace count as blocked
    padded = np.pad(free, 1, constant_values=False)
    clear = ndimage.distance_transform_edt(padded)[tuple(slice(1, -1) for _ in shape)] * cell
    return ClearanceGrid(lo, cell, free, clear)


def clearance_path(grid: ClearanceGrid, start, goal, comfort: float) -> tuple[np.ndarray, np.ndarray]:
    """Grid path from start to goal that trades length against staying away from obstacles."""
    shape = grid.free.shape
    D = len(shape)
    n = grid.free.size
    flat = np.arange(n).reshape(shape)
    weight = 1.0 + (comfort / np.maximum(grid.clearance, 1e-9)) ** 2
    rows, cols, vals = [], [], []
    offsets = [o for o in np.ndindex(*(3,) * D) if any(x != 1 for x in o)]
    for off in offsets:
        o = np.array(off) - 1
        src = tuple(slice(max(0, -k), s - max(0, k)) for k, s in zip(o, shape))
        dst = tuple(slice(max(0, k), s - max(0, -k)) for k, s in zip(o, shape))
        ok = grid.free[src] & grid.free[dst]
        step = grid.cell * float(np.linalg.norm(o))
        rows.append(flat[src][ok])
        cols.append(flat[dst][ok])
        vals.append(step * 0.5 * (weight[src][ok] + weight[dst][ok]))
    graph = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    s, g = flat[grid.index_of(start)], flat[grid.index_of(goal)]
    dist, pred = csgraph.dijkstra(graph, indices=s, return_predecessors=True)
    if not np.isfinite(dist[g]):
        raise PlanningFailed(f"no free grid path from {start} to {goal}")
    path = [g]
    while path[-1] != s:
        path.append(pred[path[-1]])
    idx = np.array(np.unravel_index(np.array(path[::-1]), shape)).T
    return grid.centres(idx), grid.clearance[tuple(idx.T)]


def seed_bridge_gates(I, G, obstacles: ObstacleSet, limits: AgentLimits, grid: ClearanceGrid | None = None,
                      narrow: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Choose bridge gate centres (p0, pT) around the tightest stretch of a clearance path from I to G.

    The narrow stretch is where clearance drops below ``narrow`` (default 2r);
    the gates sit on its principal axis, backed off far enough for an entrance.
    Without a narrow stretch the gates sit at a quarter and three quarters of the path.
    """
    I, G = as_vec(I), as_vec(G)
    r = limits.radius
    grid = grid or clearance_grid(obstacles, r / 2)
    narrow = 2 * r if narrow is None else narrow
    pts, clear = clearance_path(grid, I, G, comfort=2 * r)
    tight = clear < narrow
    if not tight.any():
        L = len(pts)
        return pts[L // 4], pts[(3 * L) // 4]
    # first contiguous tight run
    i0 = int(np.argmax(tight))
    i1 = i0
    while i1 + 1 < len(tight) and tight[i1 + 1]:
        i1 += 1
    run = pts[i0:i1 + 1]
    centre = run.mean(axis=0)
    if len(run) >= 2:
        _, _, vt = np.linalg.svd(run - centre)
        axis = vt[0]
    else:
        axis = unit(G - I)
    if np.dot(axis, pts[min(i1 + 1, len(pts) - 1)] - pts[max(i0 - 1, 0)]) < 0:
        axis = -axis
    centre = _recentre(centre, axis, (run - centre) @ axis, obstacles, grid.cell)
    proj = (run - centre) @ axis
    back = entrance_depth(limits.v_max, limits.a_max) + r
    p0 = centre + (proj.min() - back) * axis
    pT = centre + (proj.max() + back) * axis
    return p0, pT


def _recentre(centre, axis, proj, obstacles: ObstacleSet, cell: float, samples: int = 9) -> np.ndarray:
    """Slide the passage axis sideways to maximise its smallest clearance (compass search)."""
    lateral = perp2(axis)[None] if len(axis) == 2 else orthonormal_complement(axis)
    along = centre + np.linspace(proj.min(), proj.max(), samples)[:, None] * axis

    def clearance(off):
        return float(obstacles.point_distances(along + off @ lateral).min())

    off = np.zeros(len(lateral))
    best = clearance(off)
    step = cell
    while step > 1e-3 * cell:
        moved = False
        for k in range(len(off)):
            for sgn in (1.0, -1.0):
                trial = off.copy()
                trial[k] += sgn * step
                c = clearance(trial)
                if c > best + 1e-12:
                    off, best, moved = trial, c, True
        if not moved:
            step *= 0.5
    return centre + off @ lateral


# --------------------------------------------------------------------------
# Greedy assignment
# --------------------------------------------------------------------------


@dataclass
class Assignment:
    bridge_of: dict[int, int] = field(default_factory=dict)

    def agents_of(self, b: int) -> list[int]:
        return [a for a, k in sorted(self.bridge_of.items()) if k == b]


def assign_bridges(agents, obstacles: ObstacleSet, limits: AgentLimits, tau: float, cfg: RrtConfig = RrtConfig(),
                   widen_step: float | None = None) -> tuple[Assignment, list[Bridge], list[Entrance]]:
    """Create bridges greedily for the lowest-index unassigned agent until every agent has one.

    Each new bridge takes every unassigned agent whose start lies in its
    backward region and whose goal lies in its forward region.

    Raises:
        AssignmentError: bridge construction failed for an agent, or the agent's
            own bridge does not cover its start and goal within ``tau``.
    """
    agents = [(as_vec(I), as_vec(G)) for I, G in agents]
    if not agents:
        return Assignment(), [], []
    starts = np.array([a[0] for a in agents])
    goals = np.array([a[1] for a in agents])
    grid = clearance_grid(obstacles, limits.radius / 2)
    out = Assignment()
    bridges: list[Bridge] = []
    entrances: list[Entrance] = []
    unassigned = list(range(len(agents)))
    while unassigned:
        i = unassigned[0]
        try:
            p0, pT = seed_bridge_gates(*agents[i], obstacles, limits, grid)
            bridge = construct_bridge(p0, pT, obstacles, limits, widen_step,
                                      replace(cfg, seed=cfg.seed + len(bridges)))
            ent = build_entrance(bridge, limits, obstacles)
        except (PlanningFailed, EntranceBlocked, ValueError) as exc:
            raise AssignmentError(i, f"bridge construction failed: {exc}") from exc
        ids = np.array(unassigned)
        ok = (region_contains_many(backward_region(bridge, tau), starts[ids], limits)
              & region_contains_many(forward_region(bridge, tau), goals[ids], limits))
        if not ok[0]:
            raise AssignmentError(i, f"its own bridge is not reachable within tau={tau}")
        b = len(bridges)
        bridges.append(bridge)
        entrances.append(ent)
        for a in ids[ok]:
            out.bridge_of[int(a)] = b
        unassigned = [int(a) for a in ids[~ok]]
        log.info("bridge %d serves %d agents", b, int(ok.sum()))
    return out, bridges, entrances
