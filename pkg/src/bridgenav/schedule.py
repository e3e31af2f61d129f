"""Prioritized postponement of whole plans until no two agents overlap."""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .dynamics import Trajectory
from .geom import EPS_GEOM

log = logging.getLogger(__name__)

HOLD_PRE, HOLD_POST = "hold_pre", "hold_post"
BRIDGE = "bridge"


class UnschedulableError(RuntimeError):
    def __init__(self, agent, delay_steps: int):
        super().__init__(f"agent {agent} is still blocked after a delay of {delay_steps} steps")
        self.agent = agent


@dataclass(frozen=True, eq=False)
class Plan:
    """A composed route plus a start delay in whole steps.

    ``phases`` lists (name, first waypoint, last waypoint) covering 0..T in order;
    neighbouring phases share their junction waypoint.
    """

    agent: int
    trajectory: Trajectory
    phases: tuple[tuple[str, int, int], ...] = ()
    delay_steps: int = 0
    bridge: int | None = None

    def __post_init__(self):
        if self.delay_steps < 0:
            raise ValueError("delay must be non-negative")
        if not self.phases:
            object.__setattr__(self, "phases", (("route", 0, self.trajectory.T),))
        spans = []
        for name, i0, i1 in self.phases:
            lo, hi = self.trajectory.p[i0:i1 + 1].min(axis=0), self.trajectory.p[i0:i1 + 1].max(axis=0)
            spans.append((lo, hi))
        object.__setattr__(self, "_boxes", tuple(spans))

    @property
    def T(self) -> int:
        return self.trajectory.T

    @property
    def dt(self) -> float:
        return self.trajectory.dt

    @property
    def delay(self) -> float:
        return self.delay_steps * self.trajectory.dt

    @property
    def end_step(self) -> int:
        return self.delay_steps + self.T

    def delayed(self, steps: int) -> "Plan":
        if steps < 0:
            raise ValueError("delay must be non-negative")
        out = copy.copy(self)  # shares the phase boxes, which do not depend on the delay
        object.__setattr__(out, "delay_steps", int(steps))
        return out

    def phase_range(self, name: str) -> tuple[int, int] | None:
        for n, i0, i1 in self.phases:
            if n == name:
                return i0, i1
        return None

    def positions(self, k0: int, k1: int) -> np.ndarray:
        """Positions at global steps k0..k1 inclusive, holding the end poses outside the route."""
        idx = np.clip(np.arange(k0, k1 + 1) - self.delay_steps, 0, self.T)
        return self.trajectory.p[idx]

    def segments(self, horizon: int, hold_poses: bool = True):
        """(name, first global step, last global step, box lo, box hi) for every phase and hold."""
        d = self.delay_steps
        out = []
        p = self.trajectory.p
        if hold_poses and d > 0:
            out.append((HOLD_PRE, 0, d, p[0], p[0]))
        for (name, i0, i1), (lo, hi) in zip(self.phases, self._boxes):
            out.append((name, d + i0, d + i1, lo, hi))
        if hold_poses and horizon > self.end_step:
            out.append((HOLD_POST, self.end_step, horizon, p[-1], p[-1]))
        return out


@dataclass
class CheckStats:
    calls: int = 0
    segment_checks: int = 0
    same_bridge_calls: int = 0
    same_bridge_checks: int = 0

    @property
    def mean_checks_same_bridge(self) -> float:
        return self.same_bridge_checks / self.same_bridge_calls if self.same_bridge_calls else 0.0


def _threshold(r: float) -> float:
    return (2 * r - EPS_GEOM) ** 2


def _window(a: Plan, b: Plan, hold_poses: bool) -> tuple[int, int]:
    if hold_poses:
        return 0, max(a.end_step, b.end_step)
    return max(a.delay_steps, b.delay_steps), min(a.end_step, b.end_step)


def plans_collide(a: Plan, b: Plan, r: float, hold_poses: bool = True) -> float | None:
    """Earliest time (seconds) at which the two agents' centres are closer than 2r, or None.

    With ``hold_poses`` each agent exists at its start before departing and at
    its goal after arriving; steps where both are still parked are skipped.
    Without it an agent exists only while its route runs.
    """
    if a.dt != b.dt:
        raise ValueError("plans use different dt")
    k0, k1 = _window(a, b, hold_poses)
    if k1 < k0:
        return None
    pa, pb = a.positions(k0, k1), b.positions(k0, k1)
    hit = np.einsum("ij,ij->i", pa - pb, pa - pb) < _threshold(r)
    if hold_poses:
        both_parked = np.arange(k0, k1 + 1) < min(a.delay_steps, b.delay_steps)
        hit &= ~both_parked
    k = np.flatnonzero(hit)
    return None if len(k) == 0 else float((k0 + k[0]) * a.dt)


def plans_conflict(a: Plan, b: Plan, r: float, stats: CheckStats | None = None, shortcut: bool = True,
                   hold_poses: bool = True) -> bool:
    """Segment-level collision test; same boolean as ``plans_collide`` but usually far cheaper.

    Phase pairs that overlap in time are tested by bounding boxes first and
    scanned exactly only when the boxes come within 2r. With ``shortcut`` the
    bridge-phase pair is examined first, since agents sharing a bridge are most
    likely to meet there.
    """
    k0, k1 = _window(a, b, hold_poses)
    if stats is not None:
        stats.calls += 1
        same = a.bridge is not None and a.bridge == b.bridge
        stats.same_bridge_calls += same
    if k1 < k0:
        return False
    sa = a.segments(k1, hold_poses)
    sb = b.segments(k1, hold_poses)
    pairs = []
    for x in sa:
        for y in sb:
            if x[0] == HOLD_PRE and y[0] == HOLD_PRE:
                continue
            lo, hi = max(x[1], y[1], k0), min(x[2], y[2], k1)
            if lo <= hi:
                pairs.append((lo, hi, x, y))
    if shortcut:
        pairs.sort(key=lambda q: (not (q[2][0] == BRIDGE and q[3][0] == BRIDGE), q[0]))
    reach = 2 * r
    thr = _threshold(r)
    checks = 0
    found = False
    for lo, hi, x, y in pairs:
        checks += 1
        if np.any(x[3] - reach > y[4]) or np.any(y[3] - reach > x[4]):
            continue
        pa, pb = a.positions(lo, hi), b.positions(lo, hi)
        if np.any(np.einsum("ij,ij->i", pa - pb, pa - pb) < thr):
            found = True
            break
    if stats is not None:
        stats.segment_checks += checks
        if a.bridge is not None and a.bridge == b.bridge:
            stats.same_bridge_checks += checks
    return found


@dataclass
class ScheduleResult:
    plans: list[Plan]
    stats: CheckStats = field(default_factory=CheckStats)


@dataclass(frozen=True)
class BlockedDelays:
    """Every delay at which one plan collides with a fixed other plan.

    A delay d is blocked iff d is in ``exact``, d < ``below`` or d >= ``from_``.
    """

    exact: np.ndarray  # sorted unique delays
    below: int = 0
    from_: float = np.inf

    def blocked(self, d: int) -> bool:
        if d < self.below or d >= self.from_:
            return True
        i = np.searchsorted(self.exact, d)
        return bool(i < len(self.exact) and self.exact[i] == d)

    def next_clear(self, d0: int, delta: int, limit: int) -> int:
        """Smallest d0 + m*delta that is not blocked, or ``limit`` when none lies below it."""
        d = d0
        if d < self.below:
            d += -(-(self.below - d) // delta) * delta
        cand = self.exact[self.exact >= d]
        cand = cand[(cand - d) % delta == 0]
        for c in cand:  # consecutive blocked grid values
            if c != d:
                break
            d += delta
        return d if d < min(limit, self.from_) else limit


def _relative_blocks(pa: np.ndarray, pb: np.ndarray, r: float, hold_poses: bool):
    """Blocked delays of route ``pa`` against route ``pb`` starting at step 0: (exact, below, from_)."""
    thr = _threshold(r)
    Ta, Tb = len(pa) - 1, len(pb) - 1
    pairs = cKDTree(pa).sparse_distance_matrix(cKDTree(pb), 2 * r, output_type="ndarray")
    i, j = pairs["i"].astype(np.int64), pairs["j"].astype(np.int64)
    diff = pa[i] - pb[j]
    keep = np.einsum("ij,ij->i", diff, diff) < thr
    exact = np.unique(j[keep] - i[keep])
    below, from_ = -np.inf, np.inf
    if not hold_poses:
        return exact, below, from_

    def near(P, q):
        g = P - q
        return np.flatnonzero(np.einsum("ij,ij->i", g, g) < thr)

    hit = near(pa, pb[0])  # moving past the other's start while it waits
    if len(hit):
        below = max(below, -int(hit.min()))
    hit = near(pa, pb[-1])  # moving past the other's goal after it arrived
    if len(hit):
        from_ = min(from_, Tb - int(hit.max()) + 1)
    hit = near(pb, pa[0])  # still waiting while the other moves past
    if len(hit):
        from_ = min(from_, int(hit.min()) + 1)
    hit = near(pb, pa[-1])  # already arrived while the other moves past
    if len(hit):
        below = max(below, int(hit.max()) - Ta)
    if np.sum((pa[0] - pb[-1]) ** 2) < thr:
        from_ = min(from_, Tb + 2)
    if np.sum((pa[-1] - pb[0]) ** 2) < thr:
        below = max(below, -Ta - 1)
    return exact, below, from_


def blocked_delays(plan: Plan, other: Plan, r: float, hold_poses: bool = True,
                   cache: dict | None = None) -> BlockedDelays:
    """Delays of ``plan`` (other's delay fixed) that make ``plans_collide`` report a hit.

    Close waypoint pairs (i, j) block d = other.delay + j - i; with held poses the
    parked ends block open-ended delay ranges. The delay-free part depends only on
    the two routes, so ``cache`` may hold it across calls for the same route pair.
    """
    key = (id(plan.trajectory), id(other.trajectory), r, hold_poses)
    rel = None if cache is None else cache.get(key)
    if rel is None:
        rel = _relative_blocks(plan.trajectory.p, other.trajectory.p, r, hold_poses)
        if cache is not None:
            cache[key] = rel
    exact, below, from_ = rel
    db = other.delay_steps
    exact = exact + db
    exact = exact[exact >= 0]
    below = max(0, int(below + db)) if np.isfinite(below) else 0
    return BlockedDelays(exact, below, from_ + db)


def schedule_all(plans, r: float, delta_steps: int = 1, cap_factor: int = 1000, hold_poses: bool = True,
                 shortcut: bool = True, stats: CheckStats | None = None) -> list[Plan]:
    """Give each plan, in order, the smallest delay (scanned upward by ``delta_steps``) free of earlier plans.

    Raises:
        UnschedulableError: a plan's delay exceeds ``cap_factor`` times its horizon.
    """
    if delta_steps < 1:
        raise ValueError("delta_steps must be a positive step count")
    done: list[Plan] = []
    route_cache: dict = {}  # delay-free blocked sets per route pair; repeated routes share them
    for plan in plans:
        cap = cap_factor * max(plan.T, 1)
        d = plan.delay_steps
        cand = plan
        blocks: dict[int, BlockedDelays] = {}
        recent: list[int] = []  # earlier plans that blocked this one, most recent first
        while True:
            cand = plan.delayed(d)
            order = recent + [j for j in range(len(done) - 1, -1, -1) if j not in recent]
            blocker = None
            for j in order:
                if plans_conflict(cand, done[j], r, stats, shortcut, hold_poses):
                    blocker = j
                    break
            if blocker is None:
                break
            if blocker in recent:
                recent.remove(blocker)
            recent.insert(0, blocker)
            # every delay skipped here still collides with the blocker, so the scan result is unchanged
            if blocker not in blocks:
                blocks[blocker] = blocked_delays(plan, done[blocker], r, hold_poses, route_cache)
            d = blocks[blocker].next_clear(d + delta_steps, delta_steps, cap + delta_steps)
            if d > cap:
                raise UnschedulableError(plan.agent, d)
        log.debug("agent %s: delay %d steps", plan.agent, cand.delay_steps)
        done.append(cand)
    return done
