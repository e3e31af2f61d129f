"""Double-integrator agents, sampled trajectories and point-to-point connections."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geom import EPS_GEOM, as_vec

EPS_DYN = 1e-6


class Unreachable(ValueError):
    """Boundary states cannot be connected under the agent limits."""


@dataclass(frozen=True)
class AgentLimits:
    radius: float
    v_max: float
    a_max: float

    def __post_init__(self):
        for name in ("radius", "v_max", "a_max"):
            val = getattr(self, name)
            if not (val > 0 and math.isfinite(val)):
                raise ValueError(f"{name} must be positive and finite, got {val}")


@dataclass(frozen=True)
class State:
    p: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        p, v = as_vec(self.p), as_vec(self.v)
        if p.shape != v.shape:
            raise ValueError("position and velocity dimensions differ")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "v", v)

    @classmethod
    def rest(cls, p) -> "State":
        p = as_vec(p)
        return cls(p, np.zeros_like(p))


class Trajectory:
    """Waypoints (p_i, v_i, a_i), i = 0..T, at a fixed step ``dt``.

    ``a_i`` is held constant over [i*dt, (i+1)*dt]; the final acceleration is
    unused and stored as zero.
    """

    __slots__ = ("dt", "p", "v", "a")

    def __init__(self, dt: float, p, v, a):
        if not dt > 0:
            raise ValueError("dt must be positive")
        p, v, a = (np.array(x, dtype=float, copy=True) for x in (p, v, a))
        if p.ndim != 2 or p.shape != v.shape or p.shape != a.shape or len(p) == 0:
            raise ValueError("p, v, a must be equal-shaped (T+1, D) arrays")
        for x in (p, v, a):
            x.setflags(write=False)
        self.dt = float(dt)
        self.p, self.v, self.a = p, v, a

    @classmethod
    def from_accelerations(cls, p0, v0, acc, dt: float) -> "Trajectory":
        """Integrate the piecewise-constant accelerations ``acc`` (one per step)."""
        p0, v0 = as_vec(p0), as_vec(v0)
        acc = np.asarray(acc, dtype=float).reshape(-1, p0.shape[0])
        v = np.empty((len(acc) + 1, p0.shape[0]))
        p = np.empty_like(v)
        v[0], p[0] = v0, p0
        v[1:] = v0 + np.cumsum(acc * dt, axis=0)
        p[1:] = p0 + np.cumsum(v[:-1] * dt + 0.5 * acc * dt * dt, axis=0)
        a = np.vstack([acc, np.zeros((1, p0.shape[0]))])
        return cls(dt, p, v, a)

    @classmethod
    def stationary(cls, p, steps: int, dt: float) -> "Trajectory":
        p = as_vec(p)
        z = np.zeros((steps + 1, p.shape[0]))
        return cls(dt, np.tile(p, (steps + 1, 1)), z, z)

    @property
    def T(self) -> int:
        return len(self.p) - 1

    @property
    def dim(self) -> int:
        return self.p.shape[1]

    @property
    def duration(self) -> float:
        return self.T * self.dt

    @property
    def start(self) -> State:
        return State(self.p[0], self.v[0])

    @property
    def end(self) -> State:
        return State(self.p[-1], self.v[-1])

    def __len__(self):
        return len(self.p)

    def __repr__(self):
        return f"Trajectory(T={self.T}, dt={self.dt}, start={self.p[0]}, end={self.p[-1]})"

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (self.dt == other.dt and np.array_equal(self.p, other.p)
                and np.array_equal(self.v, other.v) and np.array_equal(self.a, other.a))

    def slice(self, i0: int, i1: int) -> "Trajectory":
        """Waypoints i0..i1 inclusive."""
        a = self.a[i0:i1 + 1].copy()
        a[-1] = 0.0
        return Trajectory(self.dt, self.p[i0:i1 + 1], self.v[i0:i1 + 1], a)

    def positions_at(self, t) -> np.ndarray:
        """Exact positions at arbitrary times, holding the end poses outside [0, duration]."""
        t = np.asarray(t, dtype=float)
        i = np.clip(np.floor(t / self.dt).astype(int), 0, self.T)
        tau = np.clip(t - i * self.dt, 0.0, self.dt)
        tau = np.where(i == self.T, 0.0, tau)
        return self.p[i] + self.v[i] * tau[:, None] + 0.5 * self.a[i] * (tau * tau)[:, None]

    def dense_positions(self, substeps: int) -> np.ndarray:
        """Positions at dt/substeps resolution over the whole trajectory."""
        t = np.arange(self.T * substeps + 1) * (self.dt / substeps)
        return self.positions_at(t)

    @staticmethod
    def concat(parts: Sequence["Trajectory"], tol: float = EPS_DYN) -> "Trajectory":
        """Join trajectories whose junction states coincide; junction waypoints are merged."""
        parts = [t for t in parts if t is not None]
        if not parts:
            raise ValueError("nothing to concatenate")
        dt = parts[0].dt
        ps, vs, as_ = [parts[0].p], [parts[0].v], [parts[0].a]
        for prev, nxt in zip(parts, parts[1:]):
            if nxt.dt != dt:
                raise ValueError("trajectories use different dt")
            scale = max(1.0, float(np.abs(prev.v[-1]).max()))
            if (np.abs(prev.p[-1] - nxt.p[0]).max() > tol * max(1.0, float(np.abs(prev.p[-1]).max()))
                    or np.abs(prev.v[-1] - nxt.v[0]).max() > tol * scale):
                raise ValueError("junction states do not match")
            as_[-1] = as_[-1].copy()
            as_[-1][-1] = nxt.a[0]
            ps.append(nxt.p[1:])
            vs.append(nxt.v[1:])
            as_.append(nxt.a[1:])
        return Trajectory(dt, np.vstack(ps), np.vstack(vs), np.vstack(as_))


def integrate_step(s: State, a, dt: float) -> State:
    if not dt > 0:
        raise ValueError("dt must be positive")
    a = as_vec(a)
    return State(s.p + s.v * dt + 0.5 * a * dt * dt, s.v + a * dt)


# --------------------------------------------------------------------------
# Point-to-point connection
# --------------------------------------------------------------------------


def _axis_time_rest(d: float, v: float, a: float) -> float:
    d = abs(d)
    if d <= v * v / a:
        return 2.0 * math.sqrt(d / a)
    return d / v + v / a


def travel_time(p_from, p_to, limits: AgentLimits) -> float:
    """Rest-to-rest duration of the per-axis trapezoidal connection between two positions."""
    d = as_vec(p_to) - as_vec(p_from)
    root = math.sqrt(d.shape[0])
    vb, ab = limits.v_max / root, limits.a_max / root
    return max(_axis_time_rest(x, vb, ab) for x in d)


def _envelopes(n_steps: int, va: float, vb: float, vlim: float, dv, vmin: float | None = None):
    """Bounds on v_1..v_{N-1} reachable from va and able to reach vb; ``dv`` is a per-step budget (scalar or array)."""
    if np.ndim(dv) == 0:
        i = np.arange(1, n_steps)
        head, tail = i * dv, (n_steps - i) * dv
    else:
        dv = np.asarray(dv, dtype=float)
        head = np.cumsum(dv)[:-1]
        tail = np.cumsum(dv[::-1])[::-1][1:]
    floor = -vlim if vmin is None else vmin
    hi = np.minimum(np.minimum(vlim, va + head), vb + tail)
    lo = np.maximum(np.maximum(floor, va - head), vb - tail)
    return lo, hi


def _axis_feasible(n_steps: int, dist: float, va: float, vb: float, vlim: float, dv, dt: float,
                   vmin: float | None = None) -> bool:
    if n_steps == 0:
        return abs(dist) <= EPS_GEOM and abs(va - vb) <= EPS_GEOM
    budget = n_steps * dv if np.ndim(dv) == 0 else float(np.sum(dv))
    if abs(vb - va) > budget * (1 + 1e-12):
        return False
    lo, hi = _envelopes(n_steps, va, vb, vlim, dv, vmin)
    if np.any(lo > hi + 1e-12 * vlim):
        return False
    target = dist / dt - 0.5 * (va + vb)
    tol = 1e-12 * max(1.0, abs(target))
    return lo.sum() - tol <= target <= hi.sum() + tol


def _axis_min_steps(dist, va, vb, vlim, dv, dt) -> int:
    if _axis_feasible(0, dist, va, vb, vlim, dv, dt):
        return 0
    lo_n = max(1, math.ceil(abs(vb - va) / dv - 1e-9))
    if _axis_feasible(lo_n, dist, va, vb, vlim, dv, dt):
        return lo_n
    hi_n = lo_n * 2
    while not _axis_feasible(hi_n, dist, va, vb, vlim, dv, dt):
        lo_n, hi_n = hi_n, hi_n * 2
    while hi_n - lo_n > 1:
        mid = (lo_n + hi_n) // 2
        if _axis_feasible(mid, dist, va, vb, vlim, dv, dt):
            hi_n = mid
        else:
            lo_n = mid
    return hi_n


def _axis_velocities(n_steps, dist, va, vb, vlim, dv, dt, vmin: float | None = None) -> np.ndarray:
    """Grid velocities v_0..v_N: a constant cruise level clipped between the ramp envelopes."""
    lo, hi = _envelopes(n_steps, va, vb, vlim, dv, vmin)
    hi = np.maximum(hi, lo)
    target = dist / dt - 0.5 * (va + vb)

    def total(c):
        return np.clip(c, lo, hi).sum()

    c_lo, c_hi = float(lo.min(initial=-vlim)), float(hi.max(initial=vlim))
    for _ in range(200):
        mid = 0.5 * (c_lo + c_hi)
        if mid in (c_lo, c_hi):
            break
        if total(mid) < target:
            c_lo = mid
        else:
            c_hi = mid
    c = 0.5 * (c_lo + c_hi)
    free = (lo < c) & (c < hi)
    if free.any():
        c = min(max(c + (target - total(c)) / free.sum(), c_lo), c_hi)
    v = np.empty(n_steps + 1)
    v[0], v[-1] = va, vb
    v[1:-1] = np.clip(c, lo, hi)
    return v


def _check_state(s: State, limits: AgentLimits, what: str):
    if np.linalg.norm(s.v) > limits.v_max * (1 + EPS_DYN):
        raise Unreachable(f"{what} velocity {s.v} exceeds v_max={limits.v_max}")


def _speed_ramp(v: np.ndarray, box_limit: float, a_max: float, dt: float):
    """Steps and acceleration magnitude that scale ``v`` into the per-axis velocity box."""
    peak = float(np.abs(v).max())
    if peak <= box_limit:
        return 0, 0.0, 1.0
    s = box_limit / peak
    dspeed = (1.0 - s) * float(np.linalg.norm(v))
    k = max(1, math.ceil(dspeed / (a_max * dt) - 1e-12))
    return k, dspeed / (k * dt), s


def optimal_connect(start: State, goal: State, limits: AgentLimits, dt: float) -> Trajectory:
    """Time-minimal per-axis trapezoidal connection, synchronized to the slowest axis.

    Each axis uses limits v_max/sqrt(D), a_max/sqrt(D) so the Euclidean norms
    stay within the agent limits.  Boundary velocities outside that per-axis
    box are first scaled into it along their own direction at a_max.
    """
    if start.p.shape != goal.p.shape:
        raise ValueError("state dimensions differ")
    _check_state(start, limits, "start")
    _check_state(goal, limits, "goal")
    dim = start.p.shape[0]
    root = math.sqrt(dim)
    vlim, alim = limits.v_max / root, limits.a_max / root
    dv = alim * dt

    k0, alpha0, s0 = _speed_ramp(start.v, vlim, limits.a_max, dt)
    prefix = None
    if k0:
        prefix = Trajectory.from_accelerations(start.p, start.v, np.tile(-alpha0 * start.v / np.linalg.norm(start.v), (k0, 1)), dt)
        a_state = State(prefix.p[-1], s0 * start.v)
    else:
        a_state = start

    k1, alpha1, s1 = _speed_ramp(goal.v, vlim, limits.a_max, dt)
    if k1:
        vhat = goal.v / np.linalg.norm(goal.v)
        v_pre = s1 * goal.v
        tk = k1 * dt
        b_state = State(goal.p - v_pre * tk - 0.5 * alpha1 * vhat * tk * tk, v_pre)
    else:
        b_state = goal

    d = b_state.p - a_state.p
    n_steps = max(_axis_min_steps(d[k], a_state.v[k], b_state.v[k], vlim, dv, dt) for k in range(dim))
    while not all(_axis_feasible(n_steps, d[k], a_state.v[k], b_state.v[k], vlim, dv, dt) for k in range(dim)):
        n_steps += 1

    parts = [prefix]
    if n_steps:
        vel = np.stack([_axis_velocities(n_steps, d[k], a_state.v[k], b_state.v[k], vlim, dv, dt)
                        for k in range(dim)], axis=1)
        parts.append(Trajectory.from_accelerations(a_state.p, a_state.v, np.diff(vel, axis=0) / dt, dt))
    elif prefix is None:
        parts.append(Trajectory(dt, a_state.p[None], a_state.v[None], np.zeros((1, dim))))
    if k1:
        tail_start = parts[-1].end if parts[-1] is not None else a_state
        parts.append(Trajectory.from_accelerations(tail_start.p, tail_start.v, np.tile(alpha1 * vhat, (k1, 1)), dt))
    return Trajectory.concat(parts)


# --------------------------------------------------------------------------
# Validation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    index: int
    kind: str  # "velocity" | "acceleration" | "integration"
    amount: float


def validate_trajectory(t: Trajectory, limits: AgentLimits, eps: float = EPS_DYN) -> list[Violation]:
    out = []
    speed = np.linalg.norm(t.v, axis=1)
    for i in np.flatnonzero(speed > limits.v_max * (1 + eps)):
        out.append(Violation(int(i), "velocity", float(speed[i] - limits.v_max)))
    acc = np.linalg.norm(t.a[:-1], axis=1)
    for i in np.flatnonzero(acc > limits.a_max * (1 + eps)):
        out.append(Violation(int(i), "acceleration", float(acc[i] - limits.a_max)))
    dt = t.dt
    p_err = np.abs(t.p[1:] - (t.p[:-1] + t.v[:-1] * dt + 0.5 * t.a[:-1] * dt * dt)).max(axis=1, initial=0.0)
    v_err = np.abs(t.v[1:] - (t.v[:-1] + t.a[:-1] * dt)).max(axis=1, initial=0.0)
    p_tol = EPS_GEOM + 1e-12 * np.abs(t.p[1:]).max(axis=1, initial=0.0)
    v_tol = eps * limits.v_max
    for i in np.flatnonzero((p_err > p_tol) | (v_err > v_tol)):
        out.append(Violation(int(i + 1), "integration", float(max(p_err[i], v_err[i]))))
    return sorted(out, key=lambda x: (x.index, x.kind))
