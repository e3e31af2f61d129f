import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from bridgenav.dynamics import (
    AgentLimits,
    State,
    Trajectory,
    Unreachable,
    integrate_step,
    optimal_connect,
    travel_time,
    validate_trajectory,
)

LIM = AgentLimits(5.0, 3.0, 2.0)


def trapezoid_time(d, v, a):
    """Rest-to-rest minimum time along one axis (oracle)."""
    d = abs(d)
    if d * a <= v * v:
        return 2 * math.sqrt(d / a)
    return d / v + v / a


def test_integrate_step_example():
    s = integrate_step(State((0, 0), (1, 0)), (0, 2), 0.1)
    assert s.p == pytest.approx([0.1, 0.01])
    assert s.v == pytest.approx([1.0, 0.2])


def test_integrate_step_drift():
    s = integrate_step(State((1, 2), (3, -1)), (0, 0), 0.5)
    assert s.p == pytest.approx([2.5, 1.5])


def test_integrate_step_fine_oracle():
    """Integrating piecewise-constant accelerations at dt/10 reaches the same states (exact for this model)."""
    rng = np.random.default_rng(0)
    acc = rng.normal(size=(100, 2))
    dt = 0.05
    coarse = Trajectory.from_accelerations([0, 0], [1, 0], acc, dt)
    s = State([0, 0], [1, 0])
    for a in acc:
        for _ in range(10):
            s = integrate_step(s, a, dt / 10)
    assert np.abs(s.p - coarse.p[-1]).max() < dt**2


def test_connect_identity():
    t = optimal_connect(State.rest((1, 1)), State.rest((1, 1)), LIM, 0.05)
    assert t.T == 0 and t.duration == 0.0


def test_connect_1d_bang_bang():
    lim = AgentLimits(1.0, 1e9, 2.0)
    dt = 1e-3
    t = optimal_connect(State.rest([0.0]), State.rest([1.0]), lim, dt)
    assert t.duration == pytest.approx(math.sqrt(2) * 1.0, abs=2 * dt)
    assert abs(t.duration - 1.41421) < 2 * dt
    assert t.p[-1][0] == pytest.approx(1.0, abs=1e-9)


def test_connect_1d_trapezoid():
    lim = AgentLimits(1.0, 1.0, 2.0)
    dt = 1e-3
    t = optimal_connect(State.rest([0.0]), State.rest([2.0]), lim, dt)
    assert t.duration == pytest.approx(2.5, abs=2 * dt)
    assert trapezoid_time(2.0, 1.0, 2.0) == pytest.approx(2.5)


def test_travel_time_examples():
    assert travel_time((3, 4), (3, 4), LIM) == 0.0
    assert travel_time([0.0], [1.0], AgentLimits(1, 1e9, 2.0)) == pytest.approx(1.41421, abs=1e-5)


def test_travel_time_uses_per_axis_limits():
    d = np.array([30.0, -12.0])
    root = math.sqrt(2)
    want = max(trapezoid_time(x, 3 / root, 2 / root) for x in d)
    assert travel_time((0, 0), d, LIM) == pytest.approx(want)


def test_travel_time_symmetric_and_triangle():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        x, y, z = rng.uniform(-100, 100, size=(3, 2))
        assert travel_time(x, y, LIM) == travel_time(y, x, LIM)
        assert travel_time(x, z, LIM) <= travel_time(x, y, LIM) + travel_time(y, z, LIM) + 1e-12


def _random_state(rng, dim, v_max):
    p = rng.uniform(-50, 50, dim)
    v = rng.normal(size=dim)
    v *= rng.uniform(0, v_max) / np.linalg.norm(v)
    return State(p, v)


def test_connect_random_pairs_validate():
    rng = np.random.default_rng(2)
    for i in range(10_000):
        dim = 2 if i % 3 else 3
        a, b = _random_state(rng, dim, LIM.v_max), _random_state(rng, dim, LIM.v_max)
        if i % 5 == 0:
            b = State.rest(b.p)
        t = optimal_connect(a, b, LIM, 0.05)
        assert validate_trajectory(t, LIM) == []
        assert np.abs(t.p[0] - a.p).max() == 0 and np.abs(t.v[0] - a.v).max() == 0
        assert np.abs(t.p[-1] - b.p).max() <= 1e-9 * max(1.0, np.abs(b.p).max())
        assert np.abs(t.v[-1] - b.v).max() <= 1e-6


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-200, 200), min_size=4, max_size=4))
def test_connect_rest_duration_matches_travel_time(xy):
    a, b = np.array(xy[:2]), np.array(xy[2:])
    assume(np.abs(a - b).max() > 1e-6)  # below geometric tolerance the endpoints are snapped together
    dt = 0.05
    t = optimal_connect(State.rest(a), State.rest(b), LIM, dt)
    # the waypoint grid can only lengthen the continuous optimum, by at most a few steps
    assert travel_time(a, b, LIM) - 1e-9 <= t.duration <= travel_time(a, b, LIM) + 3 * dt


def test_validate_flags_speed():
    t = Trajectory(0.1, np.array([[0.0, 0], [0.6, 0]]), np.array([[6.0, 0], [6.0, 0]]), np.zeros((2, 2)))
    kinds = [(v.index, v.kind) for v in validate_trajectory(t, LIM)]
    assert kinds == [(0, "velocity"), (1, "velocity")]


def test_validate_flags_single_speed_waypoint():
    acc = np.zeros((5, 2))
    t = Trajectory.from_accelerations((0, 0), (1, 0), acc, 0.1)
    v = t.v.copy()
    v[2] = [2 * LIM.v_max, 0]
    bad = Trajectory(0.1, t.p, v, t.a)
    assert [x.kind for x in validate_trajectory(bad, LIM) if x.kind == "velocity"] == ["velocity"]


def test_validate_flags_corrupted_position():
    t = optimal_connect(State.rest((0, 0)), State.rest((10, 5)), LIM, 0.05)
    p = t.p.copy()
    p[3] += 0.01
    report = validate_trajectory(Trajectory(t.dt, p, t.v, t.a), LIM)
    assert report[0].index == 3 and report[0].kind == "integration"


def test_unreachable_boundary_speed():
    with pytest.raises((Unreachable, ValueError)):
        optimal_connect(State((0, 0), (10, 0)), State.rest((5, 0)), LIM, 0.05)


def test_concat_rejects_gap():
    a = optimal_connect(State.rest((0, 0)), State.rest((5, 0)), LIM, 0.05)
    b = optimal_connect(State.rest((6, 0)), State.rest((9, 0)), LIM, 0.05)
    with pytest.raises(ValueError):
        Trajectory.concat([a, b])


def test_positions_at_matches_integration():
    t = optimal_connect(State((0, 0), (1, 1)), State.rest((8, -3)), LIM, 0.05)
    times = np.array([0.0, 0.013, 0.05, 0.777, t.duration, t.duration + 3])
    P = t.positions_at(times)
    for tt, p in zip(times, P):
        i = min(int(tt // t.dt), t.T)
        h = min(tt, t.duration) - i * t.dt
        want = t.p[i] + t.v[i] * h + 0.5 * t.a[i] * h * h if i < t.T else t.p[-1]
        assert p == pytest.approx(want, abs=1e-12)


def test_detour_bound_against_axis_limited_profile():
    """Slack over the straight trapezoid holds once the per-axis speed and acceleration caps are applied."""
    rng = np.random.default_rng(4)
    slack = 2 * LIM.v_max / LIM.a_max
    for _ in range(500):
        a, b = rng.uniform(-100, 100, size=(2, 2))
        d = np.linalg.norm(b - a)
        t = optimal_connect(State.rest(a), State.rest(b), LIM, 0.05)
        root = math.sqrt(2)
        assert t.duration <= trapezoid_time(d, LIM.v_max / root, LIM.a_max / root) + slack


def test_detour_bound_counterexample_long_axis_move():
    """Per-axis caps of v_max/sqrt(D) make a long move along one axis slower than the isotropic bound allows."""
    t = optimal_connect(State.rest((0, 0)), State.rest((200, 0)), LIM, 0.05)
    assert t.duration > trapezoid_time(200, LIM.v_max, LIM.a_max) + 2 * LIM.v_max / LIM.a_max


def test_detour_bound_counterexample_with_reversed_velocities():
    """Leaving and arriving at full speed pointing away from the target needs more than the stated slack."""
    lim = AgentLimits(1.0, 1.0, 1.0)
    v = np.array([-1.0])
    t = optimal_connect(State([0.0], v), State([1e-3], v), lim, 1e-3)
    assert t.duration > trapezoid_time(1e-3, 1.0, 1.0) + 2 * lim.v_max / lim.a_max
