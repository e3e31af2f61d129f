import math

import numpy as np
import pytest

from bridgenav.bridge import Bridge, gate_offsets
from bridgenav.dynamics import AgentLimits, State, Trajectory, validate_trajectory
from bridgenav.entrance import (
    EntranceBlocked,
    InadmissibleArrival,
    adjust_in_entrance,
    build_entrance,
    entrance_contains,
    entrance_depth,
    line_length,
    turn_duration,
    turn_offset,
)
from bridgenav.geom import ObstacleSet, box

LIM = AgentLimits(5.0, 3.0, 2.0)
DT = 0.05


def straight_bridge(starts, v0, T=20):
    return Bridge.from_boundaries([Trajectory.from_accelerations(p, v0, np.zeros((T, len(v0))), DT) for p in starts])


BRIDGE = straight_bridge([(0, 1), (0, -1)], (3, 0))
ENT = build_entrance(BRIDGE, LIM)


def local_state(ent, x, y, vx, vy):
    p = ent.frame.to_world([x], [y])[0]
    v = vx * ent.frame.axis + np.atleast_1d(vy) @ ent.frame.lateral
    return State(p, v)


def test_region_constants():
    assert line_length(3.0, 2.0) == pytest.approx(0.49226, abs=1e-5)
    assert entrance_depth(3.0, 2.0) == pytest.approx(3.67423, abs=1e-5)
    assert turn_duration(3.0, 2.0) == pytest.approx(2.12132, abs=1e-5)
    assert entrance_depth(3, 2) == pytest.approx(turn_offset(3, 2) + line_length(3, 2))


def test_region_shape():
    e = ENT
    assert e.offset(-e.depth) == pytest.approx(e.s)
    assert e.offset(-e.depth + e.s) == pytest.approx(0.0, abs=1e-12)
    assert e.offset(0.0) == 0.0
    xs = np.linspace(-e.depth, 0, 200)
    assert np.all(np.diff(e.offset(xs)) <= 1e-12)  # narrows monotonically towards the gate
    inside = e.frame.to_world([-1.0, -e.depth, 0.0], [[0.0], [1 + e.s], [1.0]])
    outside = e.frame.to_world([0.1, -e.depth - 0.1, -0.2], [[0.0], [0.0], [1.5]])
    assert e.contains_points(inside).all()
    assert not e.contains_points(outside).any()


def _closure_steps(ent, arrival):
    """Number of steps the velocity gap takes to close at full acceleration."""
    vx = arrival.v @ ent.frame.axis
    vy = ent.frame.lateral @ arrival.v
    return math.hypot(ent.v_max - vx, *vy) / ent.a_max


@pytest.mark.parametrize("vx, vy, closure", [(0.0, 3.0, 2.12132), (1.5, -1.5, 1.06066)])
def test_arrival_examples(vx, vy, closure):
    # start on the side of gate_in opposite to the lateral velocity so the drift lands on the gate
    y0 = -math.copysign(0.5 * closure * abs(vy), vy)
    arr = local_state(ENT, -ENT.depth, [y0], vx, [vy])
    t = adjust_in_entrance(ENT, arr)
    assert _closure_steps(ENT, arr) == pytest.approx(closure, abs=1e-5)
    # the gap closes within one step of the continuous closure time, then the agent coasts
    lat_speed = np.abs(t.v @ ENT.frame.lateral.T)[:, 0]
    closed = int(np.argmax(lat_speed <= 1e-9))
    assert closure <= closed * DT < closure + DT
    assert validate_trajectory(t, LIM) == []
    assert np.array_equal(t.v[-1], ENT.v0)
    x_end, y_end = ENT.frame.to_local(t.p[-1])
    assert abs(x_end[0]) <= 1e-9 and ENT.lateral_distance(y_end)[0] <= 1e-9
    assert entrance_contains(ENT, t)


def test_reversing_arrival_rejected():
    with pytest.raises(InadmissibleArrival):
        adjust_in_entrance(ENT, local_state(ENT, -ENT.depth, [0.0], -0.5, [0.0]))


def test_overspeed_and_off_gate_arrivals_rejected():
    with pytest.raises(InadmissibleArrival):
        adjust_in_entrance(ENT, local_state(ENT, -ENT.depth, [0.0], 3.0, [1.0]))
    with pytest.raises(InadmissibleArrival):
        adjust_in_entrance(ENT, local_state(ENT, -ENT.depth + 0.5, [0.0], 3.0, [0.0]))
    with pytest.raises(InadmissibleArrival):
        adjust_in_entrance(ENT, local_state(ENT, -ENT.depth, [1 + ENT.s + 0.1], 3.0, [0.0]))


def test_side_exit_is_not_contained():
    arr = local_state(ENT, -ENT.depth, [0.0], 1.0, [2.5])
    t = Trajectory.from_accelerations(arr.p, arr.v, np.zeros((40, 2)), DT)
    assert not entrance_contains(ENT, t)


def test_empty_trajectory_is_contained():
    assert entrance_contains(ENT, None)


def test_blocked_entrance():
    post = ObstacleSet([box([-2.0, -0.5], [-1.5, 0.5])], 0.0)
    with pytest.raises(EntranceBlocked):
        build_entrance(BRIDGE, LIM, post)
    clear = ObstacleSet([box([-20.0, -0.5], [-15, 0.5])], 0.0)
    build_entrance(BRIDGE, LIM, clear)


def _random_arrival(rng, ent):
    speed = ent.v_max * math.sqrt(rng.uniform())
    ang = rng.uniform(-math.pi / 2, math.pi / 2)
    d = ent.dim - 1
    lat_dir = rng.normal(size=d)
    lat_dir /= np.linalg.norm(lat_dir)
    lat = rng.uniform(0, ent.s) * rng.normal(size=d) / math.sqrt(d)
    y0 = ent.gate.mean(axis=0) + lat
    return local_state(ent, -ent.depth, y0, speed * math.cos(ang), speed * math.sin(ang) * lat_dir)


@pytest.mark.parametrize("dim", [2, 3])
def test_random_arrivals(dim):
    if dim == 2:
        ent = ENT
    else:
        v0 = np.array([0.0, 2.0, 0.0]) * LIM.v_max / 2
        ent = build_entrance(straight_bridge(2.0 * gate_offsets(v0, 6), v0), LIM)
    rng = np.random.default_rng(dim)
    accepted = 0
    for _ in range(1000):
        arr = _random_arrival(rng, ent)
        if ent.lateral_distance(ent.frame.to_local(arr.p)[1])[0] > ent.s:
            continue
        try:
            t = adjust_in_entrance(ent, arr)
        except InadmissibleArrival:
            continue
        accepted += 1
        assert entrance_contains(ent, t)
        assert validate_trajectory(t, LIM) == []
        assert np.array_equal(t.v[-1], ent.v0)
        x_end, y_end = ent.frame.to_local(t.p[-1])
        assert abs(x_end[0]) <= 1e-9 and ent.lateral_distance(y_end)[0] <= 1e-9
    assert accepted >= 300


def test_compliant_arrival_just_coasts():
    t = adjust_in_entrance(ENT, local_state(ENT, -ENT.depth, [0.3], 3.0, [0.0]))
    assert np.abs(t.a[:-1] @ ENT.frame.lateral.T).max() == 0.0
    # the depth is not a whole number of steps, so the coast runs marginally slower to land on a waypoint
    assert t.T == math.ceil(ENT.depth / (LIM.v_max * DT))
    assert np.linalg.norm(t.v, axis=1).max() <= LIM.v_max * (1 + 1e-12)
    assert np.array_equal(t.v[-1], ENT.v0)


def test_gate_in_is_widened_gate():
    gin = ENT.gate_in
    assert np.linalg.norm(gin[1] - gin[0]) == pytest.approx(2.0 + 2 * turn_offset(3, 2))
    assert np.allclose(ENT.frame.to_local(gin)[0], -ENT.depth)
