"""Scenario files (YAML), trajectory logs (CSV), and metrics documents (JSON)."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np
import shapely
import yaml
from scipy.spatial import ConvexHull, cKDTree

from .dynamics import AgentLimits
from .geom import ConvexMesh, ConvexPolygon, ObstacleSet
from .sim import Scenario, SimResult, default_dt

SCENARIO_DIR = Path(__file__).parent / "scenarios"
KNOWN_KEYS = {"name", "dimension", "bounds", "dt", "seed", "tau", "limits", "obstacles", "agents"}


class ScenarioError(ValueError):
    """Invalid scenario input; ``path`` names the offending field, ``line``/``column`` locate parse errors."""

    def __init__(self, msg: str, path: str = "", line: int | None = None, column: int | None = None):
        where = path
        if line is not None:
            where = f"line {line}, column {column}"
        super().__init__(f"{where}: {msg}" if where else msg)
        self.path, self.line, self.column = path, line, column


def _vec(x, path: str, dim: int | None = None) -> np.ndarray:
    try:
        v = np.asarray(x, dtype=float)
    except (TypeError, ValueError):
        raise ScenarioError("expected a list of numbers", path) from None
    if v.ndim != 1 or (dim is not None and len(v) != dim):
        raise ScenarioError(f"expected {dim or 'a'}-component vector, got {x!r}", path)
    if not np.all(np.isfinite(v)):
        raise ScenarioError("coordinates must be finite", path)
    return v


def _number(x, path: str, positive: bool = False) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ScenarioError(f"expected a number, got {x!r}", path)
    if not np.isfinite(x) or (positive and x <= 0):
        raise ScenarioError("must be a positive number" if positive else "must be finite", path)
    return float(x)


def _convex_pieces(verts: np.ndarray, path: str) -> list[ConvexPolygon]:
    poly = shapely.Polygon(verts)
    if not poly.is_valid or poly.area <= 0:
        raise ScenarioError("polygon is not simple or has no area", path)
    poly = shapely.geometry.polygon.orient(poly, 1.0)  # counter-clockwise
    if poly.convex_hull.area - poly.area <= 1e-12 * poly.area:
        ring = np.asarray(poly.exterior.coords)[:-1]
        return [ConvexPolygon(_drop_collinear(ring))]
    # concave input: split into triangles that exactly tile it
    tris = shapely.constrained_delaunay_triangles(poly)
    pieces = []
    for t in shapely.get_parts(tris):
        t = shapely.geometry.polygon.orient(t)
        pieces.append(ConvexPolygon(np.asarray(t.exterior.coords)[:-1]))
    return pieces


def _drop_collinear(ring: np.ndarray) -> np.ndarray:
    keep = []
    n = len(ring)
    for i in range(n):
        a, b, c = ring[i - 1], ring[i], ring[(i + 1) % n]
        cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0])
        if abs(cross) > 1e-12 * max(1.0, float(np.abs(ring).max())) ** 2:
            keep.append(b)
    return np.array(keep)


def _mesh(mesh_doc, path: str) -> ConvexMesh:
    if not isinstance(mesh_doc, dict) or "vertices" not in mesh_doc:
        raise ScenarioError("mesh needs a 'vertices' list", path)
    verts = np.asarray([_vec(v, f"{path}.vertices[{i}]", 3) for i, v in enumerate(mesh_doc["vertices"])])
    if "faces" in mesh_doc:
        faces = np.asarray(mesh_doc["faces"], dtype=int)
    else:
        hull = ConvexHull(verts)
        faces = hull.simplices.copy()
        centre = verts.mean(axis=0)
        for f in faces:
            n = np.cross(verts[f[1]] - verts[f[0]], verts[f[2]] - verts[f[0]])
            if np.dot(n, verts[f[0]] - centre) < 0:
                f[[1, 2]] = f[[2, 1]]
    try:
        return ConvexMesh(verts, faces)
    except ValueError as exc:
        raise ScenarioError(str(exc), path) from None


def scenario_from_dict(doc: dict, name: str = "scenario") -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("top level must be a mapping")
    unknown = sorted(set(doc) - KNOWN_KEYS)
    if unknown:
        raise ScenarioError("unknown key", unknown[0])
    for key in ("dimension", "bounds", "limits", "agents"):
        if key not in doc:
            raise ScenarioError("missing required key", key)
    dim = doc["dimension"]
    if dim not in (2, 3):
        raise ScenarioError("must be 2 or 3", "dimension")
    b = doc["bounds"]
    if not isinstance(b, dict) or set(b) != {"lo", "hi"}:
        raise ScenarioError("expected {lo: [...], hi: [...]}", "bounds")
    lo, hi = _vec(b["lo"], "bounds.lo", dim), _vec(b["hi"], "bounds.hi", dim)
    if np.any(hi <= lo):
        raise ScenarioError("hi must exceed lo on every axis", "bounds")
    lim = doc["limits"]
    if not isinstance(lim, dict):
        raise ScenarioError("expected a mapping", "limits")
    for key in ("radius", "v_max", "a_max"):
        if key not in lim:
            raise ScenarioError("missing", f"limits.{key}")
    limits = AgentLimits(*(_number(lim[k], f"limits.{k}", positive=True) for k in ("radius", "v_max", "a_max")))
    shapes = []
    for i, ob in enumerate(doc.get("obstacles") or []):
        path = f"obstacles[{i}]"
        if not isinstance(ob, dict) or len(ob) != 1 or next(iter(ob)) not in ("polygon", "mesh"):
            raise ScenarioError("expected {polygon: [...]} or {mesh: {...}}", path)
        if "polygon" in ob:
            if dim != 2:
                raise ScenarioError("polygons are only valid in 2D scenarios", path)
            verts = np.asarray([_vec(v, f"{path}.polygon[{j}]", 2) for j, v in enumerate(ob["polygon"])])
            if len(verts) < 3:
                raise ScenarioError("polygon needs at least 3 vertices", f"{path}.polygon")
            shapes.extend(_convex_pieces(verts, f"{path}.polygon"))
        else:
            if dim != 3:
                raise ScenarioError("meshes are only valid in 3D scenarios", path)
            shapes.append(_mesh(ob["mesh"], f"{path}.mesh"))
    obstacles = ObstacleSet(shapes, limits.radius, (lo, hi), dim)
    agents = []
    raw_agents = doc["agents"]
    if not isinstance(raw_agents, list):
        raise ScenarioError("expected a list", "agents")
    for i, ag in enumerate(raw_agents):
        if not isinstance(ag, dict) or set(ag) != {"start", "goal"}:
            raise ScenarioError("expected {start: [...], goal: [...]}", f"agents[{i}]")
        agents.append((_vec(ag["start"], f"agents[{i}].start", dim), _vec(ag["goal"], f"agents[{i}].goal", dim)))
    dt = _number(doc["dt"], "dt", positive=True) if doc.get("dt") is not None else default_dt(limits)
    seed = doc.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ScenarioError("must be an integer in [0, 2^64)", "seed")
    tau = _number(doc["tau"], "tau", positive=True) if doc.get("tau") is not None else None
    s = Scenario(dim, (lo, hi), obstacles, limits, agents, dt, seed, tau, str(doc.get("name", name)))
    validate_scenario(s)
    return s


def validate_scenario(s: Scenario) -> None:
    """Check poses against bounds, obstacles and each other.

    Raises:
        ScenarioError: naming the first offending field.
    """
    r = s.limits.radius
    if s.limits.v_max * s.dt >= r / 2:
        raise ScenarioError(f"v_max*dt must stay below r/2 = {r / 2}", "dt")
    for key, col in (("start", 0), ("goal", 1)):
        pts = np.array([a[col] for a in s.agents]).reshape(-1, s.dimension)
        if not len(pts):
            continue
        out = ~s.obstacles.in_bounds(pts)
        if out.any():
            raise ScenarioError("outside the workspace bounds", f"agents[{int(np.argmax(out))}].{key}")
        hit = s.obstacles.points_collide(pts)
        if hit.any():
            raise ScenarioError("collides with an inflated obstacle", f"agents[{int(np.argmax(hit))}].{key}")
        pairs = sorted(cKDTree(pts).query_pairs(2 * r - 1e-9))
        if pairs:
            i, j = pairs[0]
            raise ScenarioError(f"overlaps agents[{j}].{key} (centres closer than 2r = {2 * r})",
                                f"agents[{i}].{key}")


def shipped_scenario(name: str) -> Path:
    """Path of a scenario file bundled with the package (``corridor`` or ``duct3d``)."""
    path = SCENARIO_DIR / f"{name}.yaml"
    if not path.exists():
        raise ScenarioError(f"no shipped scenario named {name!r}", "scenario")
    return path


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc}", str(path)) from None
    return parse_scenario(text, path.stem)


def parse_scenario(text: str, name: str = "scenario") -> Scenario:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        if mark is not None:
            raise ScenarioError(getattr(exc, "problem", None) or str(exc), line=mark.line + 1,
                                column=mark.column + 1) from None
        raise ScenarioError(str(exc)) from None
    return scenario_from_dict(doc, name)


def scenario_to_dict(s: Scenario) -> dict:
    obs = []
    for o in s.obstacles.obstacles:
        if isinstance(o, ConvexPolygon):
            obs.append({"polygon": o.vertices.tolist()})
        else:
            obs.append({"mesh": {"vertices": o.vertices.tolist(), "faces": o.faces.tolist()}})
    return {
        "name": s.name,
        "dimension": s.dimension,
        "bounds": {"lo": np.asarray(s.bounds[0]).tolist(), "hi": np.asarray(s.bounds[1]).tolist()},
        "dt": float(s.dt),
        "seed": int(s.seed),
        "tau": float(s.tau),
        "limits": {"radius": s.limits.radius, "v_max": s.limits.v_max, "a_max": s.limits.a_max},
        "obstacles": obs,
        "agents": [{"start": I.tolist(), "goal": G.tolist()} for I, G in s.agents],
    }


def dump_scenario(s: Scenario) -> str:
    return yaml.safe_dump(scenario_to_dict(s), sort_keys=False, default_flow_style=None, width=120)


def scenarios_equal(a: Scenario, b: Scenario) -> bool:
    return scenario_to_dict(a) == scenario_to_dict(b)


# --------------------------------------------------------------------------
# Outputs
# --------------------------------------------------------------------------


def trajectory_rows(result: SimResult):
    """One row per waypoint, ordered by (agent, step); steps and times are global (delay included)."""
    for plan in sorted(result.plans, key=lambda p: p.agent):
        tr = plan.trajectory
        names = np.empty(tr.T + 1, dtype=object)
        for name, i0, i1 in plan.phases:
            names[i0:i1 + 1] = name
        for i in range(tr.T + 1):
            step = plan.delay_steps + i
            yield [plan.agent, step, repr(step * tr.dt), *map(repr, tr.p[i].tolist()), *map(repr, tr.v[i].tolist()),
                   *map(repr, tr.a[i].tolist()), names[i]]


def trajectory_header(dim: int) -> list[str]:
    axes = "xyz"[:dim]
    return (["agent_id", "step", "t"] + [f"p{c}" for c in axes] + [f"v{c}" for c in axes]
            + [f"a{c}" for c in axes] + ["phase"])


def write_trajectory_log(result: SimResult, dim: int, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(trajectory_header(dim))
        w.writerows(trajectory_rows(result))


def trajectory_log_text(result: SimResult, dim: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(trajectory_header(dim))
    w.writerows(trajectory_rows(result))
    return buf.getvalue()


def result_summary(result: SimResult) -> dict:
    return {
        "plans": [{"agent": p.agent, "bridge": p.bridge, "delay_steps": p.delay_steps, "steps": p.T,
                   "phases": [{"name": n, "first": i0, "last": i1} for n, i0, i1 in p.phases]}
                  for p in sorted(result.plans, key=lambda p: p.agent)],
        "bridges": [{"half_width": b.half_width, "steps": b.T, "truncated": b.truncated,
                     "start_gate": b.start_gate.tolist(), "end_gate": b.end_gate.tolist(),
                     "entry_velocity": b.v0.tolist()} for b in result.bridges],
    }


def write_json(doc: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
