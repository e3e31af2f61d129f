"""Entrance buffers that steer an arbitrary admissible arrival velocity onto a bridge's entry velocity."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import shapely

from .bridge import Bridge, GateFrame
from .dynamics import EPS_DYN, AgentLimits, State, Trajectory, _axis_feasible, _axis_velocities
from .geom import EPS_GEOM, ObstacleSet

SQRT_HALF = math.sqrt(0.5)
SQRT_TWO_THIRDS = math.sqrt(2.0 / 3.0)


class EntranceBlocked(ValueError):
    """The entrance region of a bridge intersects an inflated obstacle."""


class InadmissibleArrival(ValueError):
    """Arrival state the entrance cannot steer onto the bridge entry velocity."""


def turn_offset(v_max: float, a_max: float) -> float:
    """Lateral (and longitudinal) extent of the boundary parabola."""
    return SQRT_HALF * v_max * v_max / a_max


def entrance_depth(v_max: float, a_max: float) -> float:
    return SQRT_TWO_THIRDS * v_max * v_max / a_max


def line_length(v_max: float, a_max: float) -> float:
    return (SQRT_TWO_THIRDS - SQRT_HALF) * v_max * v_max / a_max


def turn_duration(v_max: float, a_max: float) -> float:
    """Time to turn a lateral velocity of v_max into v_max along the axis at full acceleration."""
    return math.sqrt(2.0) * v_max / a_max


@dataclass(frozen=True, eq=False)
class Entrance:
    """Buffer region upstream of a bridge's start gate, in the gate frame (x along v0, gate_out at x = 0).

    The region is {-depth <= x <= 0, dist(y, gate) <= offset(x)} where y is the
    lateral coordinate and ``offset`` follows the boundary parabola then stays 0
    along the straight lines.
    """

    frame: GateFrame
    gate: np.ndarray  # gate_out points in lateral coordinates, (K, D-1)
    gate_out: np.ndarray  # gate_out points in world coordinates
    v_max: float
    a_max: float
    dt: float

    @property
    def dim(self) -> int:
        return len(self.frame.axis)

    @property
    def depth(self) -> float:
        return entrance_depth(self.v_max, self.a_max)

    @property
    def s(self) -> float:
        return turn_offset(self.v_max, self.a_max)

    @property
    def line_length(self) -> float:
        return line_length(self.v_max, self.a_max)

    @property
    def v0(self) -> np.ndarray:
        return self.v_max * self.frame.axis

    @property
    def gate_in(self) -> np.ndarray:
        """Gate_in in world coordinates: the gate widened by ``s`` on each side, at x = -depth."""
        if self.dim == 2:
            lo, hi = self.gate[:, 0].min() - self.s, self.gate[:, 0].max() + self.s
            return self.frame.to_world([-self.depth] * 2, [[lo], [hi]])
        ring = _offset_ring(self.gate, self.s, 16)
        return self.frame.to_world(np.full(len(ring), -self.depth), ring)

    def offset(self, x) -> np.ndarray:
        """Allowed lateral distance beyond the gate at axial coordinate ``x``."""
        u = np.clip(np.asarray(x, dtype=float) + self.depth, 0.0, None)
        t = np.sqrt(2.0 * math.sqrt(2.0) * np.minimum(u, self.s) / self.a_max)
        return np.where(u < self.s, np.maximum(self.s - self.v_max * t + u, 0.0), 0.0)

    def lateral_distance(self, y) -> np.ndarray:
        """Distance from lateral coordinates ``y`` (n, D-1) to the gate polygon."""
        y = np.asarray(y, dtype=float).reshape(-1, self.dim - 1)
        if self.dim == 2:
            lo, hi = self.gate[:, 0].min(), self.gate[:, 0].max()
            return np.maximum(np.maximum(lo - y[:, 0], y[:, 0] - hi), 0.0)
        return shapely.distance(shapely.points(y), _gate_geometry(self.gate))

    def contains_points(self, P, tol: float = EPS_GEOM) -> np.ndarray:
        x, y = self.frame.to_local(P)
        scale = max(1.0, self.depth)
        tol = tol * scale
        return ((x >= -self.depth - tol) & (x <= tol)
                & (self.lateral_distance(y) <= self.offset(x) + tol))


def _gate_geometry(gate2d: np.ndarray):
    return shapely.MultiPoint(gate2d).convex_hull


def _offset_ring(gate2d: np.ndarray, radius: float, m: int) -> np.ndarray:
    """Vertices of a polygon covering the gate polygon grown by ``radius`` (circumscribed circle samples)."""
    if radius <= 0:
        return gate2d.copy()
    ang = 2 * np.pi * (np.arange(m) + 0.5) / m
    ring = (radius / math.cos(math.pi / m)) * np.stack([np.cos(ang), np.sin(ang)], 1)
    return (gate2d[:, None, :] + ring[None]).reshape(-1, 2)


def _region_pieces(ent: Entrance, m: int = 16) -> list[np.ndarray]:
    """Shapes (world coordinates) whose union covers the entrance region, for collision checks."""
    depth, s = ent.depth, ent.s
    # parabola samples: the chords of the convex boundary lie outside the region, so the cover is conservative
    xs = np.concatenate([-depth + s * np.linspace(0.0, 1.0, m + 1), [0.0]])
    offs = ent.offset(xs)
    if ent.dim == 2:
        lo, hi = ent.gate[:, 0].min(), ent.gate[:, 0].max()
        upper = np.stack([xs, hi + offs], 1)
        lower = np.stack([xs, lo - offs], 1)[::-1]
        loop = np.vstack([upper, lower])
        return [ent.frame.to_world(loop[:, 0], loop[:, 1:])]
    pieces = []
    for j in range(len(xs) - 1):
        ring = _offset_ring(ent.gate, float(offs[j]), m)
        x = np.concatenate([np.full(len(ring), xs[j]), np.full(len(ring), xs[j + 1])])
        pieces.append(ent.frame.to_world(x, np.vstack([ring, ring])))
    return pieces


def entrance_collides(ent: Entrance, obstacles: ObstacleSet) -> bool:
    if len(obstacles) == 0:
        return False
    pieces = _region_pieces(ent)
    if ent.dim == 2:
        return bool(obstacles._simplices_collide(np.asarray(pieces))[0])
    return any(obstacles._simplices_collide(p[None])[0] for p in pieces)


def build_entrance(bridge: Bridge, limits: AgentLimits, obstacles: ObstacleSet | None = None) -> Entrance:
    """Attach an entrance to the bridge's start gate.

    Raises:
        EntranceBlocked: the region touches an inflated obstacle.
    """
    frame = bridge.start_frame
    _, gate = frame.to_local(bridge.start_gate)
    ent = Entrance(frame, gate, bridge.start_gate, limits.v_max, limits.a_max, bridge.dt)
    if obstacles is not None and entrance_collides(ent, obstacles):
        raise EntranceBlocked(f"entrance of the bridge at {frame.origin} collides with an obstacle")
    return ent


def adjust_in_entrance(ent: Entrance, arrival: State, limits: AgentLimits | None = None, max_slowdown: int = 64
                       ) -> Trajectory:
    """Steer an agent arriving on gate_in onto gate_out with exactly the bridge entry velocity.

    Phase 1 applies one constant acceleration along the velocity gap
    (v_max - v_x, -v_y), so both components close together; the agent then
    coasts along the axis. The coast speed dips slightly when needed so the
    trajectory lands on gate_out at a waypoint.

    Raises:
        InadmissibleArrival: speed above v_max, negative axial speed, arrival off
            gate_in, an exit point outside the gate, or a path leaving the region.
    """
    if limits is not None and (limits.v_max, limits.a_max) != (ent.v_max, ent.a_max):
        raise ValueError("limits differ from the ones the entrance was built for")
    return _adjust(ent, arrival, ent.v_max, ent.a_max, ent.dt, max_slowdown)


def _adjust(ent: Entrance, arrival: State, v_max: float, a_max: float, dt: float, max_slowdown: int) -> Trajectory:
    frame = ent.frame
    speed = float(np.linalg.norm(arrival.v))
    if speed > v_max * (1 + EPS_DYN):
        raise InadmissibleArrival(f"arrival speed {speed:.6g} exceeds v_max={v_max}")
    (x0,), y0 = frame.to_local(arrival.p)
    y0 = y0[0]
    tol = EPS_GEOM * max(1.0, ent.depth)
    if abs(x0 + ent.depth) > tol or ent.lateral_distance(y0)[0] > ent.s + tol:
        raise InadmissibleArrival(f"arrival position {arrival.p} is not on gate_in")
    vx = min(float(arrival.v @ frame.axis), v_max)
    vy = frame.lateral @ arrival.v
    if vx < -EPS_DYN * v_max:
        raise InadmissibleArrival(f"arrival moves away from the bridge (axial speed {vx:.6g})")
    vx = max(vx, 0.0)
    gap = np.concatenate([[v_max - vx], -vy])
    gap_norm = float(np.linalg.norm(gap))
    # phase 1: the whole velocity gap closes in n1 steps at (at most) a_max along the gap direction
    n1 = 0 if gap_norm <= 1e-15 * v_max else max(1, math.ceil(gap_norm / (a_max * dt) - 1e-12))
    y_exit = y0 + 0.5 * n1 * dt * vy
    if ent.lateral_distance(y_exit)[0] > tol:
        raise InadmissibleArrival(f"arrival would leave the entrance outside the gate (lateral {y_exit})")
    # axial speeds: the phase-1 ramp, then a coast at v_max; when the depth is not a whole
    # number of steps the axial speed plateaus slightly lower so the last waypoint lands on gate_out
    depth = -x0
    n = max(n1, math.ceil(depth / (v_max * dt) - 1e-9))
    for n in range(n, n + max_slowdown):
        budget = np.full(n, a_max * dt)
        budget[:n1] = gap[0] / n1 if n1 else 0.0
        if _axis_feasible(n, depth, vx, v_max, v_max, budget, dt, vmin=0.0):
            break
    else:
        raise InadmissibleArrival("arrival cannot be aligned with the time grid inside the entrance")
    speeds = _axis_velocities(n, depth, vx, v_max, v_max, budget, dt, vmin=0.0) if n else np.array([v_max])
    local = np.zeros((n, ent.dim))
    local[:, 0] = np.diff(speeds) / dt
    if n1:
        local[:n1, 1:] = -vy / (n1 * dt)
    acc = local[:, :1] * frame.axis + local[:, 1:] @ frame.lateral
    if n == 0:
        return Trajectory(dt, arrival.p[None], ent.v0[None], np.zeros((1, ent.dim)))
    traj = Trajectory.from_accelerations(arrival.p, arrival.v, acc, dt)
    # land exactly on the entry state; the correction is rounding-sized
    p, v = traj.p.copy(), traj.v.copy()
    (xe,), _ = frame.to_local(p[-1])
    p[-1] -= xe * frame.axis
    v[-1] = ent.v0
    traj = Trajectory(dt, p, v, traj.a)
    if not entrance_contains(ent, traj):
        raise InadmissibleArrival("steering from this arrival would leave the entrance region")
    return traj


def entrance_contains(ent: Entrance, traj: Trajectory | None, tol: float = EPS_GEOM) -> bool:
    """True if every waypoint and every per-step extreme position lies inside the entrance region."""
    if traj is None or len(traj) == 0:
        return True
    if not np.all(ent.contains_points(traj.p, tol)):
        return False
    if traj.T == 0:
        return True
    dt = traj.dt
    axes = np.vstack([ent.frame.axis, ent.frame.lateral])
    v = traj.v[:-1] @ axes.T
    a = traj.a[:-1] @ axes.T
    with np.errstate(divide="ignore", invalid="ignore"):
        tau = np.where(a != 0, -v / a, -1.0)
    i, _ = np.nonzero((tau > 0) & (tau < dt))
    if len(i) == 0:
        return True
    t = tau[(tau > 0) & (tau < dt)]
    apex = traj.p[i] + traj.v[i] * t[:, None] + 0.5 * traj.a[i] * (t * t)[:, None]
    return bool(np.all(ent.contains_points(apex, tol)))
