"""Bridges: collision-free corridors bounded by feasible trajectories, and interpolation inside them."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

from .dynamics import AgentLimits, State, Trajectory
from .geom import (EPS_GEOM, DegenerateTriangleError, ObstacleSet, TriangulatedStrip, as_vec, barycentric,
                   orthonormal_complement, perp2, strip_collides, triangulate_boundary, unit)
from .rrt import PlanningFailed, RrtConfig, enforce_boundary_conditions, plan

log = logging.getLogger(__name__)


class GateError(ValueError):
    """Entry point does not lie on a bridge's start gate."""


@dataclass(frozen=True)
class GateFrame:
    """Orthonormal frame at a gate: ``axis`` is the travel direction, ``lateral`` spans the gate."""

    origin: np.ndarray
    axis: np.ndarray
    lateral: np.ndarray  # (D-1, D)

    @classmethod
    def at(cls, origin, direction) -> "GateFrame":
        x = unit(as_vec(direction))
        lat = perp2(x)[None] if len(x) == 2 else orthonormal_complement(x)
        return cls(as_vec(origin), x, lat)

    def to_local(self, P) -> tuple[np.ndarray, np.ndarray]:
        d = np.atleast_2d(np.asarray(P, dtype=float)) - self.origin
        return d @ self.axis, d @ self.lateral.T

    def to_world(self, x, y) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.asarray(y, dtype=float).reshape(len(x), -1)
        return self.origin + x[:, None] * self.axis + y @ self.lateral


@dataclass(frozen=True)
class InterpolationWeights:
    weights: np.ndarray  # one per boundary

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights {w} are not a convex combination")
        object.__setattr__(self, "weights", w)


@dataclass(frozen=True, eq=False)
class Bridge:
    boundaries: tuple[Trajectory, ...]
    v0: np.ndarray
    strip: TriangulatedStrip
    half_width: float = 0.0
    truncated: bool = False  # widening stopped by a planner failure, not by a collision

    def __post_init__(self):
        b = self.boundaries
        if len(b) < 2:
            raise ValueError("a bridge needs at least two boundaries")
        if len({t.T for t in b}) != 1 or len({t.dt for t in b}) != 1:
            raise ValueError("boundaries must share dt and horizon")
        if any(np.abs(t.v[0] - self.v0).max() > 1e-9 * max(1.0, float(np.abs(self.v0).max())) for t in b):
            raise ValueError("boundaries must share the entry velocity")

    @property
    def dt(self) -> float:
        return self.boundaries[0].dt

    @property
    def T(self) -> int:
        return self.boundaries[0].T

    @property
    def dim(self) -> int:
        return self.boundaries[0].dim

    @cached_property
    def start_gate(self) -> np.ndarray:
        return np.array([t.p[0] for t in self.boundaries])

    @cached_property
    def end_gate(self) -> np.ndarray:
        return np.array([t.p[-1] for t in self.boundaries])

    @cached_property
    def fan_order(self) -> np.ndarray:
        """Start-gate points ordered by angle around the gate centre (3D interpolation fan)."""
        return _fan_order(self.start_gate, self.v0)

    @property
    def start_frame(self) -> GateFrame:
        return GateFrame.at(self.start_gate.mean(axis=0), self.v0)

    @property
    def end_frame(self) -> GateFrame:
        return GateFrame.at(self.end_gate.mean(axis=0), self.v0)

    @classmethod
    def from_boundaries(cls, boundaries, half_width: float = 0.0, truncated: bool = False) -> "Bridge":
        boundaries = tuple(boundaries)
        return cls(boundaries, boundaries[0].v[0].copy(), triangulate_boundary(boundaries), half_width, truncated)


def gate_offsets(v0, K: int) -> np.ndarray:
    """Unit displacement directions of the K boundary endpoints within the gate (perpendicular to v0)."""
    v0 = as_vec(v0)
    if len(v0) == 2:
        n = perp2(unit(v0))
        return np.array([n, -n])
    basis = orthonormal_complement(unit(v0))
    ang = 2 * np.pi * np.arange(K) / K
    return np.cos(ang)[:, None] * basis[0] + np.sin(ang)[:, None] * basis[1]


def _seed(cfg: RrtConfig, *keys: int) -> int:
    return int(np.random.SeedSequence([cfg.seed % 2**63, *keys]).generate_state(1, np.uint64)[0])


def construct_bridge(p0, pT, obstacles: ObstacleSet, limits: AgentLimits, widen_step: float | None = None,
                     cfg: RrtConfig = RrtConfig(), K: int = 6, max_widenings: int = 200,
                     widen_iterations: int = 2000) -> Bridge:
    """Grow a bridge from gate centre ``p0`` to ``pT`` by widening until its strip hits an obstacle.

    Every boundary starts with v0 = v_max * unit(pT - p0) and ends at rest. The
    returned bridge is the widest one whose strip was collision-free. If a
    widened boundary cannot be planned, the previous bridge is returned with
    ``truncated`` set.

    Raises:
        ValueError: p0 or pT in collision.
        PlanningFailed: no trajectory from p0 to pT.
    """
    p0, pT = as_vec(p0), as_vec(pT)
    dim = len(p0)
    step = limits.radius / 2 if widen_step is None else float(widen_step)
    if step <= 0:
        raise ValueError("widen_step must be positive")
    v0 = limits.v_max * unit(pT - p0)
    if np.any(obstacles.points_collide(np.array([p0, pT]))):
        raise ValueError("bridge gate centres must be collision-free")
    goal_cfg = replace(cfg, seed=_seed(cfg, 0, 0))
    core = plan(State(p0, v0), State.rest(pT), obstacles, limits, goal_cfg)
    core = enforce_boundary_conditions(core, v0, core.T, limits)
    n_bound = 2 if dim == 2 else K
    dirs = gate_offsets(v0, n_bound)
    best = Bridge.from_boundaries([core] * n_bound)
    if strip_collides(best.strip, obstacles):
        raise PlanningFailed("initial bridge trajectory collides")
    widen_cfg = replace(cfg, max_iterations=min(cfg.max_iterations, widen_iterations))
    for w in range(1, max_widenings + 1):
        off = w * step * dirs
        ends = np.vstack([p0 + off, pT + off])
        if np.any(obstacles.points_collide(ends)) or not np.all(obstacles.in_bounds(ends)):
            break
        try:
            raw = [plan(State(p0 + o, v0), State.rest(pT + o), obstacles, limits,
                        replace(widen_cfg, seed=_seed(cfg, w, k))) for k, o in enumerate(off)]
            horizon = max(t.T for t in raw)
            bounds = [enforce_boundary_conditions(t, v0, horizon, limits) for t in raw]
        except (PlanningFailed, ValueError) as exc:
            log.info("bridge widening stopped at half-width %.3g: %s", best.half_width, exc)
            return replace(best, truncated=True)
        cand = Bridge.from_boundaries(bounds, half_width=w * step)
        if strip_collides(cand.strip, obstacles):
            break
        best = cand
    return best


def _fan_order(gate: np.ndarray, v0: np.ndarray) -> np.ndarray:
    frame = GateFrame.at(gate.mean(axis=0), v0)
    _, y = frame.to_local(gate)
    return np.argsort(np.arctan2(y[:, 1], y[:, 0]), kind="stable")


def interpolation_weights(bridge: Bridge, entry_point, tol: float = EPS_GEOM) -> InterpolationWeights:
    """Convex weights of ``entry_point`` with respect to the start-gate points.

    Raises:
        GateError: the point is off the gate (or outside every fan triangle in 3D).
    """
    e = as_vec(entry_point, bridge.dim)
    gate = bridge.start_gate
    K = len(gate)
    tol = tol * max(1.0, float(np.abs(e).max()))
    if np.ptp(gate, axis=0).max() <= EPS_GEOM:
        if np.linalg.norm(e - gate[0]) > tol:
            raise GateError(f"entry point {e} is off the zero-width gate at {gate[0]}")
        w = np.zeros(K)
        w[0] = 1.0
        return InterpolationWeights(w)
    if bridge.dim == 2:
        u, l = gate
        seg = l - u
        length = float(np.linalg.norm(seg))
        r = float(np.clip(np.dot(e - u, seg) / (length * length), 0.0, 1.0))
        if np.linalg.norm(u + r * seg - e) > tol:
            raise GateError(f"entry point {e} is off the gate segment")
        # r = |p0^u p0| / |p0^u p0^l|
        return InterpolationWeights(np.array([1.0 - r, r]))
    order = bridge.fan_order
    normal = unit(bridge.v0)
    if abs(np.dot(e - gate.mean(axis=0), normal)) > tol:
        raise GateError(f"entry point {e} is off the gate plane")
    for j in range(1, K - 1):
        idx = order[[0, j, j + 1]]
        try:
            bc = np.array(barycentric(gate[idx], e))
        except DegenerateTriangleError:
            continue
        if bc.min() >= -1e-12:
            bc = np.clip(bc, 0.0, None)
            w = np.zeros(K)
            w[idx] = bc / bc.sum()
            return InterpolationWeights(w)
    raise GateError(f"entry point {e} lies in no triangle of the gate")


def interpolate(bridge: Bridge, entry_point, weights: InterpolationWeights | None = None) -> Trajectory:
    """Traverse the bridge from ``entry_point`` (entered with velocity v0) using blended boundary accelerations."""
    w = (weights or interpolation_weights(bridge, entry_point)).weights
    acc = w[0] * bridge.boundaries[0].a[:-1]
    for wk, b in zip(w[1:], bridge.boundaries[1:]):
        if wk:
            acc = acc + wk * b.a[:-1]
    return Trajectory.from_accelerations(entry_point, bridge.v0, acc, bridge.dt)
