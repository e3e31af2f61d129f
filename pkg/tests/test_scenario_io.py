import csv
import io

import numpy as np
import pytest
import shapely

from bridgenav.benchmarks import corridor, duct3d
from bridgenav.geom import ConvexPolygon
from bridgenav.scenario_io import (
    ScenarioError,
    dump_scenario,
    load_scenario,
    parse_scenario,
    scenarios_equal,
    shipped_scenario,
    trajectory_header,
    trajectory_log_text,
)

MINIMAL = """\
dimension: 2
bounds: {lo: [0, 0], hi: [100, 100]}
limits: {radius: 2, v_max: 3, a_max: 2}
obstacles:
  - polygon: [[40, 40], [60, 40], [60, 60], [40, 60]]
agents:
  - {start: [10, 10], goal: [90, 90]}
  - {start: [10, 20], goal: [90, 80]}
"""


def test_shipped_corridor():
    s = load_scenario(shipped_scenario("corridor"))
    assert s.dimension == 2 and len(s.agents) == 96
    assert (s.limits.radius, s.limits.v_max, s.limits.a_max) == (5, 3, 2)
    assert np.array_equal(s.bounds[1] - s.bounds[0], [750, 480])
    assert scenarios_equal(s, corridor())


def test_shipped_duct():
    s = load_scenario(shipped_scenario("duct3d"))
    assert s.dimension == 3
    assert (s.limits.radius, s.limits.v_max, s.limits.a_max) == (3, 2, 1)
    assert np.array_equal(s.bounds[1] - s.bounds[0], [150, 80, 80])
    assert scenarios_equal(s, duct3d())


@pytest.mark.parametrize("name", ["corridor", "duct3d"])
def test_round_trip(name):
    s = load_scenario(shipped_scenario(name))
    again = parse_scenario(dump_scenario(s), s.name)
    assert scenarios_equal(s, again)
    assert dump_scenario(again) == shipped_scenario(name).read_text()


def test_minimal_defaults():
    s = parse_scenario(MINIMAL)
    assert s.dt == pytest.approx(min(0.05, 2 / 12))
    assert s.seed == 0 and s.tau > 0


def test_overlapping_starts_name_both_agents():
    text = MINIMAL.replace("start: [10, 20]", "start: [11, 11]")
    with pytest.raises(ScenarioError) as err:
        parse_scenario(text)
    assert "agents[0].start" in str(err.value) and "agents[1].start" in str(err.value)


def test_parse_error_location():
    with pytest.raises(ScenarioError) as err:
        parse_scenario("dimension: 2\nbounds: {lo: [0, 0]\nlimits: 3\n")
    assert err.value.line == 3 and err.value.column == 1


@pytest.mark.parametrize("edit, path", [
    (("dimension: 2", "dimension: 4"), "dimension"),
    (("radius: 2", "radius: -2"), "limits.radius"),
    (("goal: [90, 90]", "goal: [190, 90]"), "agents[0].goal"),
    (("start: [10, 10]", "start: [50, 50]"), "agents[0].start"),
    (("agents:", "extra: 1\nagents:"), "extra"),
])
def test_invalid_fields_report_path(edit, path):
    with pytest.raises(ScenarioError) as err:
        parse_scenario(MINIMAL.replace(*edit))
    assert err.value.path == path


def test_too_coarse_dt_rejected():
    with pytest.raises(ScenarioError) as err:
        parse_scenario(MINIMAL + "dt: 0.5\n")
    assert err.value.path == "dt"


def test_concave_polygon_is_decomposed():
    text = MINIMAL.replace("[[40, 40], [60, 40], [60, 60], [40, 60]]",
                           "[[40, 40], [60, 40], [60, 60], [50, 50], [40, 60]]")
    s = parse_scenario(text)
    pieces = s.obstacles.obstacles
    assert len(pieces) >= 2 and all(isinstance(p, ConvexPolygon) for p in pieces)
    union = shapely.union_all([shapely.Polygon(p.vertices) for p in pieces])
    want = shapely.Polygon([[40, 40], [60, 40], [60, 60], [50, 50], [40, 60]])
    assert union.symmetric_difference(want).area < 1e-9


def test_clockwise_polygon_is_accepted():
    s = parse_scenario(MINIMAL.replace("[[40, 40], [60, 40], [60, 60], [40, 60]]",
                                       "[[40, 40], [40, 60], [60, 60], [60, 40]]"))
    assert len(s.obstacles.obstacles) == 1


def test_missing_file():
    with pytest.raises(ScenarioError):
        load_scenario("/nonexistent/scenario.yaml")
    with pytest.raises(ScenarioError):
        shipped_scenario("nope")


def test_trajectory_log_rows_increase(small_corridor):
    s, result = small_corridor
    rows = list(csv.reader(io.StringIO(trajectory_log_text(result, 2))))
    assert rows[0] == trajectory_header(2)
    keys = [(int(r[0]), int(r[1])) for r in rows[1:]]
    assert all(a < b for a, b in zip(keys, keys[1:]))
    assert len(keys) == sum(p.T + 1 for p in result.plans)
    # floats survive the text form exactly
    first = result.plans[0]
    assert float(rows[1][3]) == first.trajectory.p[0, 0]
