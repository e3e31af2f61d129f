"""Multi-agent navigation for double-integrator agents through precomputed corridor bridges."""

from .bridge import Bridge, GateError, construct_bridge, interpolate, interpolation_weights
from .dynamics import AgentLimits, State, Trajectory, optimal_connect, travel_time, validate_trajectory
from .entrance import Entrance, InadmissibleArrival, adjust_in_entrance, build_entrance, entrance_contains
from .geom import ObstacleSet, box, segment_hits_obstacles, strip_collides
from .reach import assign_bridges, backward_region, forward_region, region_contains
from .rrt import PlanningFailed, RrtConfig, plan
from .scenario_io import ScenarioError, load_scenario, parse_scenario
from .schedule import Plan, plans_collide, schedule_all
from .sim import Scenario, SimResult, audit, compose_plan, run_scenario

__all__ = [
    "AgentLimits", "Bridge", "Entrance", "GateError", "InadmissibleArrival", "ObstacleSet", "Plan",
    "PlanningFailed", "RrtConfig", "Scenario", "ScenarioError", "SimResult", "State", "Trajectory",
    "adjust_in_entrance", "assign_bridges", "audit", "backward_region", "box", "build_entrance", "compose_plan",
    "construct_bridge", "entrance_contains", "forward_region", "interpolate", "interpolation_weights",
    "load_scenario", "optimal_connect", "parse_scenario", "plan", "plans_collide", "region_contains",
    "run_scenario", "schedule_all", "segment_hits_obstacles", "strip_collides", "travel_time",
    "validate_trajectory",
]
