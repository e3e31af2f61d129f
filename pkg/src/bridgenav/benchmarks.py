"""Generators for the shipped benchmark scenarios."""

from __future__ import annotations

import numpy as np

from .dynamics import AgentLimits
from .geom import ObstacleSet, box
from .sim import Scenario

CORRIDOR_LIMITS = AgentLimits(radius=5.0, v_max=3.0, a_max=2.0)
DUCT_LIMITS = AgentLimits(radius=3.0, v_max=2.0, a_max=1.0)


def corridor(n_per_group: int = 48, seed: int = 0, tau: float = 95.0) -> Scenario:
    """Wall band across a 750 x 480 room pierced by two 16-unit corridors.

    One group crosses left to right through the lower corridor, the other
    right to left through the upper one; agents stand on a 24 x 28 grid.
    """
    lim = CORRIDOR_LIMITS
    lo, hi = np.array([0.0, 0.0]), np.array([750.0, 480.0])
    walls = [box([300, 0], [450, 122]), box([300, 138], [450, 342]), box([300, 358], [450, 480])]
    agents = _two_way_groups(n_per_group, axis_y=(130.0, 350.0), near=250.0, far=500.0, pitch=28.0, row=24.0)
    return Scenario(2, (lo, hi), ObstacleSet(walls, lim.radius, (lo, hi), 2), lim, agents, None, seed, tau,
                    "corridor")


def _two_way_groups(n: int, axis_y, near: float, far: float, pitch: float, row: float):
    rows = 8
    cols = -(-n // rows)
    by_axis = sorted(range(rows), key=lambda r: (abs(r - 3.5), r))
    # departures: front column first, rows nearest the corridor axis first;
    # arrivals: back column first, outer rows first, so nobody crosses an agent already parked
    starts = [(c, r) for c in range(cols) for r in by_axis][:n]
    goals = [(cols - 1 - c, r) for c in range(cols) for r in by_axis[::-1]][:n]
    agents = []
    for group, y0 in enumerate(axis_y):
        ahead = group == 0
        for (sc, sr), (gc, gr) in zip(starts, goals):
            sx = near - pitch * sc if ahead else far + pitch * sc
            gx = far + pitch * gc if ahead else near - pitch * gc
            agents.append((np.array([sx, y0 + row * (sr - 3.5)]), np.array([gx, y0 + row * (gr - 3.5)])))
    return agents


def duct3d(n_per_group: int = 20, seed: int = 0, tau: float = 45.0) -> Scenario:
    """A 150 x 80 x 80 box split by a wall at x in [65, 85] with two 16 x 16 square holes.

    Each group stands in 3 x 3 blocks (pitch 8) lined up with its hole.
    """
    lim = DUCT_LIMITS
    lo, hi = np.zeros(3), np.array([150.0, 80.0, 80.0])
    x0, x1 = 65.0, 85.0
    # holes centred at (y, z) = (20, 40) and (60, 40)
    walls = [
        box([x0, 0, 0], [x1, 12, 80]),
        box([x0, 28, 0], [x1, 52, 80]),
        box([x0, 68, 0], [x1, 80, 80]),
        box([x0, 12, 0], [x1, 28, 32]),
        box([x0, 12, 48], [x1, 28, 80]),
        box([x0, 52, 0], [x1, 68, 32]),
        box([x0, 52, 48], [x1, 68, 80]),
    ]
    block = sorted(((dy, dz) for dy in (-8.0, 0.0, 8.0) for dz in (-8.0, 0.0, 8.0)),
                   key=lambda o: (abs(o[0]) + abs(o[1]), o))
    cols = -(-n_per_group // len(block))
    starts = [(c, o) for c in range(cols) for o in block][:n_per_group]
    goals = [(cols - 1 - c, o) for c in range(cols) for o in block[::-1]][:n_per_group]
    agents = []
    for group, yc in enumerate((20.0, 60.0)):
        ahead = group == 0
        for (sc, (sy, sz)), (gc, (gy, gz)) in zip(starts, goals):
            sx = 30.0 - 8.0 * sc if ahead else 120.0 + 8.0 * sc
            gx = 120.0 + 8.0 * gc if ahead else 30.0 - 8.0 * gc
            agents.append((np.array([sx, yc + sy, 40.0 + sz]), np.array([gx, yc + gy, 40.0 + gz])))
    return Scenario(3, (lo, hi), ObstacleSet(walls, lim.radius, (lo, hi), 3), lim, agents, None, seed, tau, "duct3d")
