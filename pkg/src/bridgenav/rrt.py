"""Kinodynamic RRT for double-integrator agents among inflated convex obstacles."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .dynamics import AgentLimits, State, Trajectory, Unreachable, optimal_connect
from .geom import ObstacleSet

log = logging.getLogger(__name__)


class PlanningFailed(RuntimeError):
    pass


@dataclass(frozen=True)
class RrtConfig:
    max_iterations: int = 50_000
    goal_bias: float = 0.1
    steer_duration: float | None = None  # defaults to 5 * dt
    dt: float = 0.05
    goal_position_tol: float = 0.5
    goal_velocity_tol: float = 0.5
    seed: int = 0
    steer_samples: int = 8

    def __post_init__(self):
        if not 0.0 <= self.goal_bias <= 1.0:
            raise ValueError("goal_bias must lie in [0, 1]")
        if min(self.dt, self.goal_position_tol, self.goal_velocity_tol) <= 0:
            raise ValueError("dt and goal tolerances must be positive")
        if self.steer_duration is not None and self.steer_duration <= 0:
            raise ValueError("steer_duration must be positive")

    @property
    def steer_steps(self) -> int:
        dur = 5 * self.dt if self.steer_duration is None else self.steer_duration
        return max(1, int(round(dur / self.dt)))


@dataclass
class RrtTree:
    """Nodes are (state, parent, incoming edge); node 0 is the root."""

    positions: list = field(default_factory=list)
    velocities: list = field(default_factory=list)
    parents: list = field(default_factory=list)
    edges: list = field(default_factory=list)  # incoming Trajectory per node (None for root)

    def add(self, p, v, parent: int, edge: Trajectory | None) -> int:
        self.positions.append(p)
        self.velocities.append(v)
        self.parents.append(parent)
        self.edges.append(edge)
        return len(self.parents) - 1

    def path_to(self, k: int) -> list[Trajectory]:
        edges = []
        while k > 0:
            edges.append(self.edges[k])
            k = self.parents[k]
        return edges[::-1]


def _workspace(obstacles: ObstacleSet, pts) -> tuple[np.ndarray, np.ndarray]:
    if obstacles.bounds is not None:
        return obstacles.bounds
    pts = np.vstack([np.atleast_2d(p) for p in pts])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    pad = 0.25 * float(np.max(hi - lo)) + 1.0
    return lo - pad, hi + pad


def trajectory_free(traj: Trajectory, obstacles: ObstacleSet) -> bool:
    return bool(np.all(obstacles.in_bounds(traj.p))) and not obstacles.polyline_collides(traj.p)


def _steer(p, v, accs, steps, dt, v_max):
    """Integrate candidate constant accelerations, projecting velocity into the v_max ball.

    The projected per-step acceleration never exceeds the commanded one, because
    projection onto the ball is non-expansive and the current velocity lies in it.
    Returns per-candidate positions (M, steps+1, D), velocities, and step accelerations.
    """
    M, D = accs.shape
    P = np.empty((M, steps + 1, D))
    V = np.empty_like(P)
    A = np.empty((M, steps, D))
    P[:, 0], V[:, 0] = p, v
    for i in range(steps):
        vn = V[:, i] + accs * dt
        speed = np.linalg.norm(vn, axis=1)
        over = speed > v_max
        vn[over] *= (v_max / speed[over])[:, None]
        a = (vn - V[:, i]) / dt
        A[:, i] = a
        V[:, i + 1] = V[:, i] + a * dt
        P[:, i + 1] = P[:, i] + V[:, i] * dt + 0.5 * a * dt * dt
    return P, V, A


def _ball(rng, n, dim, radius):
    x = rng.normal(size=(n, dim))
    x /= np.linalg.norm(x, axis=1)[:, None]
    return x * (radius * rng.uniform(size=(n, 1)) ** (1.0 / dim))


def plan(start: State, goal: State, obstacles: ObstacleSet, limits: AgentLimits, cfg: RrtConfig = RrtConfig(),
         tree_out: RrtTree | None = None) -> Trajectory:
    """Grow a kinodynamic tree from ``start`` until it reaches ``goal``.

    The goal is reached either by a node within the position/velocity
    tolerances or by an exact, collision-free ``optimal_connect`` from a node
    (attempted from the root and after every goal-biased extension).

    Raises:
        ValueError: start state in collision or out of bounds.
        PlanningFailed: iteration budget exhausted.
    """
    dt = cfg.dt
    dim = start.p.shape[0]
    if obstacles.points_collide(start.p)[0] or not obstacles.in_bounds(start.p)[0]:
        raise ValueError(f"start {start.p} is in collision or out of bounds")
    rng = np.random.default_rng(cfg.seed)
    lo, hi = _workspace(obstacles, [start.p, goal.p])
    w_vel = limits.v_max / limits.a_max
    tree = tree_out if tree_out is not None else RrtTree()
    tree.add(start.p, start.v, -1, None)
    P = np.empty((cfg.max_iterations + 1, dim))
    V = np.empty_like(P)
    P[0], V[0] = start.p, start.v
    n = 1
    # nearest-neighbour index over scaled states [p, w*v]: a KD-tree rebuilt
    # periodically plus a linear scan over nodes added since the last rebuild
    kd, kd_n = None, 0
    steps = cfg.steer_steps

    def try_connect(k: int):
        try:
            link = optimal_connect(State(P[k], V[k]), goal, limits, dt)
        except Unreachable:
            return None
        if trajectory_free(link, obstacles):
            return Trajectory.concat(tree.path_to(k) + [link])
        return None

    def reached(k: int) -> bool:
        return (np.linalg.norm(P[k] - goal.p) <= cfg.goal_position_tol
                and np.linalg.norm(V[k] - goal.v) <= cfg.goal_velocity_tol)

    if reached(0) and np.allclose(start.p, goal.p) and np.allclose(start.v, goal.v):
        return Trajectory(dt, start.p[None], start.v[None], np.zeros((1, dim)))
    found = try_connect(0)
    if found is not None:
        return found

    for it in range(cfg.max_iterations):
        to_goal = rng.uniform() < cfg.goal_bias
        if to_goal:
            sp, sv = goal.p, goal.v
        else:
            sp = rng.uniform(lo, hi)
            sv = _ball(rng, 1, dim, limits.v_max)[0]
        q = np.concatenate([sp, w_vel * sv])
        if n - kd_n > 256:
            kd, kd_n = cKDTree(np.hstack([P[:n], w_vel * V[:n]])), n
        k, best = -1, np.inf
        if kd is not None:
            best, k = kd.query(q)
            best = best * best
        if n > kd_n:
            d2 = np.sum((P[kd_n:n] - sp) ** 2, axis=1) + w_vel ** 2 * np.sum((V[kd_n:n] - sv) ** 2, axis=1)
            j = int(np.argmin(d2))
            if d2[j] < best:
                k = kd_n + j
        k = int(k)
        accs = _ball(rng, cfg.steer_samples, dim, limits.a_max)
        CP, CV, CA = _steer(P[k], V[k], accs, steps, dt, limits.v_max)
        score = np.sum((CP[:, -1] - sp) ** 2, axis=1) + w_vel ** 2 * np.sum((CV[:, -1] - sv) ** 2, axis=1)
        j = int(np.argmin(score))
        pts = CP[j]
        if not np.all(obstacles.in_bounds(pts)) or obstacles.polyline_collides(pts):
            continue
        acc = np.vstack([CA[j], np.zeros((1, dim))])
        edge = Trajectory(dt, pts, CV[j], acc)
        P[n], V[n] = pts[-1], CV[j, -1]
        tree.add(P[n], V[n], k, edge)
        n += 1
        if reached(n - 1):
            log.debug("rrt reached goal tolerance after %d iterations", it + 1)
            # prefer landing exactly on the goal state when the short link is free
            found = try_connect(n - 1)
            return found if found is not None else Trajectory.concat(tree.path_to(n - 1))
        if to_goal:
            found = try_connect(n - 1)
            if found is not None:
                log.debug("rrt connected to goal after %d iterations", it + 1)
                return found
    raise PlanningFailed(f"no path from {start.p} to {goal.p} within {cfg.max_iterations} iterations")


def enforce_boundary_conditions(traj: Trajectory, v0, horizon: int, limits: AgentLimits) -> Trajectory:
    """Make ``traj`` start with velocity ``v0`` and span exactly ``horizon`` steps.

    A mismatched initial velocity is fixed by splicing an optimal connection
    from (p_0, v0) into the original start state.  Short trajectories that end
    at rest are padded with a terminal dwell.
    """
    v0 = np.asarray(v0, dtype=float)
    out = traj
    if np.abs(traj.v[0] - v0).max() > 1e-12 * max(1.0, limits.v_max):
        splice = optimal_connect(State(traj.p[0], v0), traj.start, limits, traj.dt)
        out = Trajectory.concat([splice, traj])
    if out.T > horizon:
        raise ValueError(f"trajectory needs {out.T} steps, more than the horizon {horizon}")
    if out.T < horizon:
        if np.abs(out.v[-1]).max() > 1e-12 * limits.v_max:
            raise ValueError("cannot pad a trajectory that does not end at rest")
        out = Trajectory.concat([out, Trajectory.stationary(out.p[-1], horizon - out.T, out.dt)])
    return out
