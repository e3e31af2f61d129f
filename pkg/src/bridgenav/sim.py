"""End-to-end pipeline: assign bridges, compose per-agent routes, schedule, and audit."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np
import shapely
from shapely.ops import nearest_points

from .bridge import Bridge, interpolate, interpolation_weights
from .dynamics import AgentLimits, State, Trajectory, optimal_connect
from .entrance import Entrance, adjust_in_entrance
from .geom import EPS_GEOM, ObstacleSet, as_vec
from .reach import Assignment, assign_bridges, default_tau
from .rrt import PlanningFailed, RrtConfig, plan as rrt_plan, trajectory_free
from .schedule import CheckStats, Plan, schedule_all

log = logging.getLogger(__name__)

PHASES = ("approach", "entrance", "bridge", "exit")


class CompositionError(RuntimeError):
    def __init__(self, agent: int, phase: str, msg: str):
        super().__init__(f"agent {agent}, {phase} phase: {msg}")
        self.agent = agent
        self.phase = phase


def default_dt(limits: AgentLimits) -> float:
    return min(0.05, limits.radius / (4 * limits.v_max))


@dataclass(eq=False)
class Scenario:
    dimension: int
    bounds: tuple[np.ndarray, np.ndarray]
    obstacles: ObstacleSet  # inflated by the agent radius
    limits: AgentLimits
    agents: list[tuple[np.ndarray, np.ndarray]]
    dt: float | None = None
    seed: int = 0
    tau: float | None = None
    name: str = "scenario"

    def __post_init__(self):
        if self.dt is None:
            self.dt = default_dt(self.limits)
        if self.tau is None:
            self.tau = default_tau(self.obstacles, self.limits)


@dataclass(eq=False)
class SimResult:
    plans: list[Plan]
    bridges: list[Bridge]
    entrances: list[Entrance] = field(default_factory=list)
    assignment: Assignment = field(default_factory=Assignment)
    metrics: dict = field(default_factory=dict)

    @property
    def frames(self) -> int:
        return max((p.end_step for p in self.plans), default=0)


def gate_in_target(ent: Entrance, I) -> np.ndarray:
    """Point on gate_in facing the start: its lateral projection clamped to the gate span."""
    _, y = ent.frame.to_local(as_vec(I))
    if ent.dim == 2:
        yt = np.clip(y[0], ent.gate[:, 0].min(), ent.gate[:, 0].max())
    else:
        hull = shapely.MultiPoint(ent.gate).convex_hull
        yt = np.array(nearest_points(hull, shapely.Point(y[0]))[0].coords[0])
    return ent.frame.to_world([-ent.depth], [yt])[0]


def _connect(agent: int, phase: str, a: State, b: State, obstacles: ObstacleSet, limits: AgentLimits, dt: float,
             cfg: RrtConfig) -> Trajectory:
    traj = optimal_connect(a, b, limits, dt)
    if trajectory_free(traj, obstacles):
        return traj
    log.info("agent %d: direct %s blocked, falling back to RRT", agent, phase)
    seed = int(np.random.SeedSequence([cfg.seed % 2**63, agent, PHASES.index(phase)]).generate_state(1)[0])
    fb = replace(cfg, dt=dt, seed=seed, goal_position_tol=EPS_GEOM, goal_velocity_tol=EPS_GEOM)
    try:
        traj = rrt_plan(a, b, obstacles, limits, fb)
    except (PlanningFailed, ValueError) as exc:
        raise CompositionError(agent, phase, str(exc)) from exc
    if np.abs(traj.p[-1] - b.p).max() > 1e-6 or np.abs(traj.v[-1] - b.v).max() > 1e-6 * limits.v_max:
        raise CompositionError(agent, phase, "fallback planner did not land on the target state")
    return traj


def compose_plan(agent: int, I, G, bridge: Bridge, entrance: Entrance, obstacles: ObstacleSet,
                 limits: AgentLimits, cfg: RrtConfig = RrtConfig(), bridge_id: int | None = None,
                 timings: dict | None = None) -> Plan:
    """Approach the entrance, steer onto the entry velocity, traverse the bridge, then head to the goal."""
    dt = bridge.dt
    target = gate_in_target(entrance, I)
    approach = _connect(agent, "approach", State.rest(I), State(target, entrance.v0), obstacles, limits, dt, cfg)
    try:
        steer = adjust_in_entrance(entrance, approach.end, limits)
    except ValueError as exc:
        raise CompositionError(agent, "entrance", str(exc)) from exc
    t0 = time.perf_counter()
    try:
        inside = interpolate(bridge, steer.p[-1], interpolation_weights(bridge, steer.p[-1]))
    except ValueError as exc:
        raise CompositionError(agent, "bridge", str(exc)) from exc
    if timings is not None:
        timings.setdefault("interpolate", []).append(time.perf_counter() - t0)
    leave = _connect(agent, "exit", inside.end, State.rest(G), obstacles, limits, dt, cfg)
    parts = [approach, steer, inside, leave]
    try:
        full = Trajectory.concat(parts)
    except ValueError as exc:
        raise CompositionError(agent, "junction", str(exc)) from exc
    phases, i = [], 0
    for name, part in zip(PHASES, parts):
        phases.append((name, i, i + part.T))
        i += part.T
    return Plan(agent, full, tuple(phases), 0, bridge_id)


def _agent_positions(plans: list[Plan], t: np.ndarray) -> np.ndarray:
    return np.stack([p.trajectory.positions_at(t - p.delay) for p in plans])


def audit(result: SimResult, s: Scenario, substeps: int = 10, chunk: int = 2048) -> dict:
    """Recount overlaps at dt/substeps resolution; an event is a maximal run of overlapping samples."""
    plans = result.plans
    n = len(plans)
    out = {"agent_agent_collision_events": 0, "agent_obstacle_collision_events": 0, "audit_substeps": substeps}
    if n == 0:
        return out
    r = s.limits.radius
    dt = s.dt / substeps
    total = result.frames * substeps
    thr = (2 * r - EPS_GEOM) ** 2
    prev_pair: set[tuple[int, int]] = set()
    prev_obs = np.zeros(n, dtype=bool)
    aa = ao = 0
    iu, ju = np.triu_indices(n, 1)
    for m0 in range(0, total + 1, chunk):
        m1 = min(m0 + chunk, total + 1)
        t = np.arange(m0, m1) * dt
        P = _agent_positions(plans, t)  # (n, C, D)
        lo, hi = P.min(axis=1), P.max(axis=1)
        near = np.all((lo[iu] - 2 * r <= hi[ju]) & (lo[ju] - 2 * r <= hi[iu]), axis=1)
        cur_pair = set()
        for a, b in zip(iu[near], ju[near]):
            d = P[a] - P[b]
            hit = np.einsum("ij,ij->i", d, d) < thr
            if hit.any():
                starts = np.count_nonzero(hit[1:] & ~hit[:-1]) + (hit[0] and (a, b) not in prev_pair)
                aa += int(starts)
                if hit[-1]:
                    cur_pair.add((a, b))
        prev_pair = cur_pair
        if len(s.obstacles):
            C = P.shape[1]
            inside = s.obstacles.points_penetrate(P.reshape(-1, P.shape[2])).reshape(n, C)
            rises = np.count_nonzero(inside[:, 1:] & ~inside[:, :-1], axis=1) + (inside[:, 0] & ~prev_obs)
            ao += int(rises.sum())
            prev_obs = inside[:, -1]
    out["agent_agent_collision_events"] = aa
    out["agent_obstacle_collision_events"] = ao
    return out


def run_scenario(s: Scenario, substeps: int = 10, shortcut: bool = True) -> SimResult:
    limits = s.limits
    if not s.agents:
        return SimResult([], [], metrics=_metrics([], [], {}, CheckStats(), {}, s))
    cfg = RrtConfig(dt=s.dt, seed=s.seed)
    timings: dict = {}
    t0 = time.perf_counter()
    assignment, bridges, entrances = assign_bridges(s.agents, s.obstacles, limits, s.tau, cfg)
    timings["assign"] = time.perf_counter() - t0
    log.info("assign: %.2f s", timings["assign"])
    t0 = time.perf_counter()
    plans = []
    for i, (I, G) in enumerate(s.agents):
        b = assignment.bridge_of[i]
        plans.append(compose_plan(i, I, G, bridges[b], entrances[b], s.obstacles, limits, cfg, b, timings))
    timings["compose"] = time.perf_counter() - t0
    log.info("compose: %.2f s", timings["compose"])
    t0 = time.perf_counter()
    stats = CheckStats()
    plans = schedule_all(plans, limits.radius, shortcut=shortcut, stats=stats)
    timings["schedule"] = time.perf_counter() - t0
    log.info("schedule: %.2f s", timings["schedule"])
    result = SimResult(plans, bridges, entrances, assignment)
    t0 = time.perf_counter()
    report = audit(result, s, substeps)
    timings["audit"] = time.perf_counter() - t0
    log.info("audit: %.2f s", timings["audit"])
    result.metrics = _metrics(plans, bridges, report, stats, timings, s)
    return result


def _metrics(plans, bridges, report, stats: CheckStats, timings: dict, s: Scenario) -> dict:
    frames = max((p.end_step for p in plans), default=0)
    interp = timings.get("interpolate", [])
    return {
        "agents": len(plans),
        "bridge_count": len(bridges),
        "agent_agent_collision_events": report.get("agent_agent_collision_events", 0),
        "agent_obstacle_collision_events": report.get("agent_obstacle_collision_events", 0),
        "frames": frames,
        "frames_seconds": frames * s.dt,
        "max_delay_seconds": max((p.delay for p in plans), default=0.0),
        "pairwise_check_counts": {
            "calls": stats.calls,
            "segment_checks": stats.segment_checks,
            "same_bridge_calls": stats.same_bridge_calls,
            "same_bridge_segment_checks": stats.same_bridge_checks,
            "mean_checks_same_bridge": stats.mean_checks_same_bridge,
        },
        "timing_seconds": {k: v for k, v in timings.items() if k != "interpolate"},
        "interpolate_median_ms": float(np.median(interp) * 1e3) if interp else 0.0,
    }
