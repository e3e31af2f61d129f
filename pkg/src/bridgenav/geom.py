"""Vector helpers, convex obstacles, triangulated strips and collision queries.

Obstacles are convex (polygons in 2D, closed triangle meshes in 3D) and are
always queried with a Minkowski inflation by the agent radius, so every
planner can treat the agent as a point.  2D narrow-phase distances go through
shapely's vectorized GEOS routines; 3D uses a small GJK distance routine.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import shapely

EPS_GEOM = 1e-9


class DegenerateTriangleError(ValueError):
    pass


def as_vec(x, dim: int | None = None) -> np.ndarray:
    v = np.asarray(x, dtype=float).reshape(-1)
    if dim is not None and v.shape[0] != dim:
        raise ValueError(f"expected a {dim}-vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"non-finite vector {v}")
    return v


def unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    if n < EPS_GEOM:
        raise ValueError("cannot normalize a zero vector")
    return v / n


def perp2(v: np.ndarray) -> np.ndarray:
    """Rotate a 2D vector by +90 degrees."""
    return np.array([-v[1], v[0]])


def orthonormal_complement(d: np.ndarray) -> np.ndarray:
    """Rows spanning the hyperplane orthogonal to unit vector ``d`` (2D or 3D)."""
    if d.shape[0] == 2:
        return perp2(d)[None, :]
    helper = np.array([0.0, 0.0, 1.0]) if abs(d[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    e1 = unit(np.cross(d, helper))
    e2 = np.cross(d, e1)
    return np.stack([e1, e2])


# --------------------------------------------------------------------------
# Obstacles
# --------------------------------------------------------------------------


def _signed_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


@dataclass(frozen=True)
class ConvexPolygon:
    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
            raise ValueError("polygon needs at least 3 two-dimensional vertices")
        if _signed_area(v) <= 0:
            raise ValueError("polygon vertices must be counter-clockwise")
        edges = np.roll(v, -1, axis=0) - v
        nxt = np.roll(edges, -1, axis=0)
        if np.any(edges[:, 0] * nxt[:, 1] - edges[:, 1] * nxt[:, 0] < -EPS_GEOM):
            raise ValueError("polygon is not convex")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    @property
    def dim(self) -> int:
        return 2


@dataclass(frozen=True)
class ConvexMesh:
    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        f = np.asarray(self.faces, dtype=int)
        if v.ndim != 2 or v.shape[1] != 3 or f.ndim != 2 or f.shape[1] != 3:
            raise ValueError("mesh needs (n,3) vertices and (m,3) faces")
        directed = set()
        for a, b, c in f:
            for e in ((a, b), (b, c), (c, a)):
                if e in directed:
                    raise ValueError("mesh faces are not consistently oriented")
                directed.add(e)
        if any((b, a) not in directed for a, b in directed):
            raise ValueError("mesh is not closed")
        centroid = v.mean(axis=0)
        n = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
        if np.any(np.einsum("ij,ij->i", n, v[f[:, 0]] - centroid) <= 0):
            raise ValueError("mesh faces must point outward")
        side = np.einsum("fj,fvj->fv", n, v[None, :, :] - v[f[:, 0]][:, None, :])
        scale = np.linalg.norm(n, axis=1)[:, None] * max(1.0, float(np.ptp(v)))
        if np.any(side > EPS_GEOM * scale):
            raise ValueError("mesh is not convex")
        v.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    @property
    def dim(self) -> int:
        return 3


def box(lo: Sequence[float], hi: Sequence[float]) -> ConvexPolygon | ConvexMesh:
    """Axis-aligned box obstacle in 2D or 3D."""
    lo = as_vec(lo)
    hi = as_vec(hi)
    if lo.shape != hi.shape or np.any(hi <= lo):
        raise ValueError("box needs lo < hi componentwise")
    if lo.shape[0] == 2:
        return ConvexPolygon(np.array([[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]]))
    corners = np.array([[(hi if (i >> k) & 1 else lo)[k] for k in range(3)] for i in range(8)])
    # outward-facing triangles, corners indexed by bit pattern (x=1, y=2, z=4)
    faces = [
        (0, 2, 1), (1, 2, 3),  # z = lo
        (4, 5, 6), (5, 7, 6),  # z = hi
        (0, 1, 4), (1, 5, 4),  # y = lo
        (2, 6, 3), (3, 6, 7),  # y = hi
        (0, 4, 2), (2, 4, 6),  # x = lo
        (1, 3, 5), (3, 7, 5),  # x = hi
    ]
    return ConvexMesh(corners, np.array(faces))


# --------------------------------------------------------------------------
# GJK distance between convex hulls of point sets (used for 3D queries)
# --------------------------------------------------------------------------


def _solve_small(G, b):
    n = len(b)
    M = [list(G[i]) + [b[i]] for i in range(n)]
    scale = max(abs(G[i][i]) for i in range(n)) or 1.0
    for c in range(n):
        piv = max(range(c, n), key=lambda r: abs(M[r][c]))
        if abs(M[piv][c]) <= 1e-13 * scale:
            return None
        M[c], M[piv] = M[piv], M[c]
        for r in range(n):
            if r != c:
                f = M[r][c] / M[c][c]
                if f:
                    for k in range(c, n + 1):
                        M[r][k] -= f * M[c][k]
    return [M[i][n] / M[i][i] for i in range(n)]


def _dot(a, b):
    return sum(x * y for x, y in zip(a, b))


def _closest_on_simplex(simplex):
    best = None
    n = len(simplex)
    for size in range(1, n + 1):
        for idx in itertools.combinations(range(n), size):
            pts = [simplex[i] for i in idx]
            s0 = pts[0]
            if size == 1:
                x, ok = s0, True
            else:
                E = [tuple(p - q for p, q in zip(pj, s0)) for pj in pts[1:]]
                G = [[_dot(ei, ej) for ej in E] for ei in E]
                lam = _solve_small(G, [-_dot(ei, s0) for ei in E])
                if lam is None:
                    continue
                ok = all(l >= -1e-12 for l in lam) and 1.0 - sum(lam) >= -1e-12
                x = tuple(s0[d] + sum(l * e[d] for l, e in zip(lam, E)) for d in range(len(s0)))
            if ok:
                nx = _dot(x, x)
                if best is None or nx < best[0] - 1e-18:
                    best = (nx, x, pts)
    return best[1], best[2]


def gjk_distance(P: np.ndarray, Q: np.ndarray) -> float:
    """Euclidean distance between conv(P) and conv(Q); 0 when they intersect."""
    P = [tuple(map(float, p)) for p in np.asarray(P)]
    Q = [tuple(map(float, q)) for q in np.asarray(Q)]
    dim = len(P[0])

    def support(d):
        p = max(P, key=lambda x: _dot(x, d))
        q = min(Q, key=lambda x: _dot(x, d))
        return tuple(a - b for a, b in zip(p, q))

    v = tuple(a - b for a, b in zip(P[0], Q[0]))
    simplex = [v]
    for _ in range(128):
        vv = _dot(v, v)
        if vv <= 1e-24:
            return 0.0
        w = support(tuple(-x for x in v))
        if vv - _dot(v, w) <= 1e-12 * vv + 1e-20 or w in simplex:
            return math.sqrt(vv)
        simplex.append(w)
        v, simplex = _closest_on_simplex(simplex)
        if len(simplex) == dim + 1:
            return 0.0
    return math.sqrt(_dot(v, v))


# --------------------------------------------------------------------------
# Obstacle sets
# --------------------------------------------------------------------------


class ObstacleSet:
    """Convex obstacles sharing one Minkowski inflation, plus optional workspace bounds.

    A query shape collides when its distance to some obstacle is at most
    ``inflation`` (touching counts as a collision).
    """

    def __init__(self, obstacles: Iterable[ConvexPolygon | ConvexMesh] = (), inflation: float = 0.0,
                 bounds: tuple[Sequence[float], Sequence[float]] | None = None, dim: int | None = None):
        self.obstacles = tuple(obstacles)
        if inflation < 0:
            raise ValueError("inflation must be non-negative")
        self.inflation = float(inflation)
        dims = {o.dim for o in self.obstacles}
        if bounds is not None:
            lo, hi = as_vec(bounds[0]), as_vec(bounds[1])
            dims.add(lo.shape[0])
            self.bounds = (lo, hi)
        else:
            self.bounds = None
        if dim is not None:
            dims.add(dim)
        if len(dims) > 1:
            raise ValueError(f"mixed dimensions {sorted(dims)}")
        self.dim = dims.pop() if dims else 2
        self._verts = [o.vertices for o in self.obstacles]
        if self.obstacles:
            self._lo = np.array([v.min(axis=0) for v in self._verts]) - self.inflation
            self._hi = np.array([v.max(axis=0) for v in self._verts]) + self.inflation
        else:
            self._lo = self._hi = np.zeros((0, self.dim))
        if self.dim == 2:
            self._shapes = [shapely.Polygon(v) for v in self._verts]
            for s in self._shapes:
                shapely.prepare(s)
        else:
            self._planes = []
            for o in self.obstacles:
                v, f = o.vertices, o.faces
                n = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
                n /= np.linalg.norm(n, axis=1)[:, None]
                self._planes.append((n, np.einsum("ij,ij->i", n, v[f[:, 0]])))

    def __len__(self):
        return len(self.obstacles)

    def with_inflation(self, inflation: float) -> "ObstacleSet":
        return ObstacleSet(self.obstacles, inflation, self.bounds, self.dim)

    def aabb(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        return self._lo[k], self._hi[k]

    def in_bounds(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        if self.bounds is None:
            return np.ones(len(pts), dtype=bool)
        lo, hi = self.bounds
        return np.all((pts >= lo - EPS_GEOM) & (pts <= hi + EPS_GEOM), axis=1)

    def simplex_distances(self, k: int, S: np.ndarray) -> np.ndarray:
        """Distance from each simplex ``S[i]`` (points, segments or triangles) to obstacle ``k``."""
        S = np.asarray(S, dtype=float)
        if len(S) == 0:
            return np.zeros(0)
        m = S.shape[1]
        if self.dim == 2:
            if m == 1:
                geoms = shapely.points(S[:, 0])
            elif m == 2:
                geoms = shapely.linestrings(S)
            else:
                geoms = shapely.polygons(S)
            return shapely.distance(geoms, self._shapes[k])
        return np.array([gjk_distance(s, self._verts[k]) for s in S])

    def _simplices_collide(self, S: np.ndarray, reach: float | None = None) -> np.ndarray:
        """True where a simplex comes within ``reach`` (default: the inflation) of an obstacle."""
        reach = self.inflation if reach is None else reach
        S = np.asarray(S, dtype=float)
        hit = np.zeros(len(S), dtype=bool)
        if len(S) == 0:
            return hit
        slo, shi = S.min(axis=1), S.max(axis=1)
        for k in range(len(self.obstacles)):
            cand = np.flatnonzero(~hit & np.all((shi >= self._lo[k]) & (slo <= self._hi[k]), axis=1))
            if len(cand) and self.dim == 3:
                # face planes: a plane with every vertex beyond the inflated offset separates;
                # a vertex behind every plane lies inside the obstacle
                n, off = self._planes[k]
                h = np.einsum("fj,svj->svf", n, S[cand]) - off
                separated = np.any(np.all(h > reach, axis=1), axis=1)
                inside = np.any(np.all(h <= 0.0, axis=2), axis=1) & (reach >= 0)
                hit[cand[inside & ~separated]] = True
                cand = cand[~separated & ~inside]
            if len(cand):
                d = self.simplex_distances(k, S[cand])
                hit[cand[d <= reach]] = True
        return hit

    def points_collide(self, P) -> np.ndarray:
        P = np.atleast_2d(np.asarray(P, dtype=float))
        return self._simplices_collide(P[:, None, :])

    def points_penetrate(self, P, margin: float = EPS_GEOM) -> np.ndarray:
        """Strict test: True where a point is more than ``margin`` inside an inflated obstacle."""
        P = np.atleast_2d(np.asarray(P, dtype=float))
        return self._simplices_collide(P[:, None, :], self.inflation - margin)

    def segments_collide(self, A, B) -> np.ndarray:
        A = np.atleast_2d(np.asarray(A, dtype=float))
        B = np.atleast_2d(np.asarray(B, dtype=float))
        return self._simplices_collide(np.stack([A, B], axis=1))

    def polyline_collides(self, P) -> bool:
        """True if any vertex or segment of the polyline ``P`` touches an inflated obstacle."""
        P = np.atleast_2d(np.asarray(P, dtype=float))
        if len(P) == 1:
            return bool(self.points_collide(P)[0])
        return bool(np.any(self.segments_collide(P[:-1], P[1:])))

    def triangles_collide(self, T) -> np.ndarray:
        return self._simplices_collide(np.asarray(T, dtype=float))

    def point_distances(self, P) -> np.ndarray:
        """Distance from each point to the nearest *uninflated* obstacle (inf if none)."""
        P = np.atleast_2d(np.asarray(P, dtype=float))
        out = np.full(len(P), np.inf)
        for k in range(len(self.obstacles)):
            out = np.minimum(out, self.simplex_distances(k, P[:, None, :]))
        return out


def segment_hits_obstacles(a, b, obstacles: ObstacleSet) -> bool:
    return bool(obstacles.segments_collide(as_vec(a)[None], as_vec(b)[None])[0])


# --------------------------------------------------------------------------
# Barycentric coordinates
# --------------------------------------------------------------------------


def _cross3(a, b) -> np.ndarray:
    # np.cross carries tens of microseconds of overhead per call; this sits on the per-agent hot path
    return np.array([a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]])


def barycentric(tri, p) -> tuple[float, float, float]:
    """Weights (u, v, w) with u*A + v*B + w*C = p for p in the triangle's plane."""
    A, B, C = (as_vec(x) for x in tri)
    p = as_vec(p)
    if A.shape[0] == 2:
        A, B, C, p = (np.append(x, 0.0) for x in (A, B, C, p))
    e1, e2, d = B - A, C - A, p - A
    n = _cross3(e1, e2)
    nn = float(n @ n)
    longest = math.sqrt(max(e1 @ e1, e2 @ e2, float((C - B) @ (C - B))))
    # |n| is twice the area, so |n| / longest is the height over the longest edge
    if longest == 0.0 or math.sqrt(nn) / longest < EPS_GEOM:
        raise DegenerateTriangleError("triangle is degenerate")
    # signed sub-areas against the normal, plus one refinement pass on the residual
    v = float(_cross3(d, e2) @ n) / nn
    w = float(_cross3(e1, d) @ n) / nn
    res = d - (v * e1 + w * e2)
    v += float(_cross3(res, e2) @ n) / nn
    w += float(_cross3(e1, res) @ n) / nn
    return 1.0 - v - w, v, w


# --------------------------------------------------------------------------
# Triangulated strips and BVH
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TriangulatedStrip:
    vertices: np.ndarray  # (n, D)
    triangles: np.ndarray  # (m, 3) vertex indices

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    def triangle_coords(self) -> np.ndarray:
        return self.vertices[self.triangles]


def _positions(b) -> np.ndarray:
    return np.asarray(getattr(b, "p", b), dtype=float)


def triangulate_boundary(boundaries: Sequence) -> TriangulatedStrip:
    """Triangulate the surface spanned by boundary waypoint sequences.

    Two boundaries give the quad strip between them (2T triangles). Three or
    more give a closed tube: consecutive boundaries (cyclically) are stitched
    and both ends are capped with a fan, with consistent orientation.
    """
    paths = [_positions(b) for b in boundaries]
    if len(paths) < 2:
        raise ValueError("need at least two boundaries")
    n = len(paths[0])
    if any(len(p) != n for p in paths):
        raise ValueError("boundaries have mismatched waypoint counts")
    K, T = len(paths), n - 1
    verts = np.concatenate(paths, axis=0)
    i = np.arange(T)

    def stitch(k0, k1):
        a, b = k0 * n + i, k1 * n + i
        return np.concatenate([np.stack([a, b, a + 1], 1), np.stack([b, b + 1, a + 1], 1)])

    if K == 2:
        tris = stitch(0, 1)
    else:
        parts = [stitch(k, (k + 1) % K) for k in range(K)]
        ks = np.arange(1, K - 1)
        parts.append(np.stack([np.zeros_like(ks), (ks + 1) * n, ks * n], 1))
        parts.append(np.stack([np.full_like(ks, T), ks * n + T, (ks + 1) * n + T], 1))
        tris = np.concatenate(parts)
    return TriangulatedStrip(verts, tris.astype(int))


@dataclass
class Bvh:
    """Binary tree of axis-aligned bounds over a set of simplices."""

    lo: np.ndarray
    hi: np.ndarray
    left: np.ndarray
    right: np.ndarray
    start: np.ndarray
    count: np.ndarray
    order: np.ndarray
    leaf_size: int = field(default=8)

    @classmethod
    def build(cls, simplices: np.ndarray, leaf_size: int = 8) -> "Bvh":
        slo, shi = simplices.min(axis=1), simplices.max(axis=1)
        centers = 0.5 * (slo + shi)
        order = np.arange(len(simplices))
        lo, hi, left, right, start, count = [], [], [], [], [], []

        def node(s, e):
            idx = order[s:e]
            k = len(lo)
            lo.append(slo[idx].min(axis=0))
            hi.append(shi[idx].max(axis=0))
            left.append(-1)
            right.append(-1)
            start.append(s)
            count.append(e - s)
            return k

        root = node(0, len(order))
        stack = [root]
        while stack:
            k = stack.pop()
            s, c = start[k], count[k]
            if c <= leaf_size:
                continue
            idx = order[s:s + c]
            axis = int(np.argmax(hi[k] - lo[k]))
            sub = idx[np.argsort(centers[idx, axis], kind="stable")]
            order[s:s + c] = sub
            mid = s + c // 2
            left[k] = node(s, mid)
            right[k] = node(mid, s + c)
            stack.extend([left[k], right[k]])
        return cls(np.array(lo), np.array(hi), np.array(left), np.array(right), np.array(start),
                   np.array(count), order, leaf_size)

    def query(self, qlo: np.ndarray, qhi: np.ndarray) -> np.ndarray:
        """Indices of simplices whose bounds overlap the query box."""
        if len(self.lo) == 0:
            return np.zeros(0, dtype=int)
        out = []
        stack = [0]
        while stack:
            k = stack.pop()
            if np.any(self.hi[k] < qlo) or np.any(self.lo[k] > qhi):
                continue
            if self.left[k] < 0:
                out.append(self.order[self.start[k]:self.start[k] + self.count[k]])
            else:
                stack.append(self.left[k])
                stack.append(self.right[k])
        return np.concatenate(out) if out else np.zeros(0, dtype=int)


def strip_collides(strip: TriangulatedStrip, obstacles: ObstacleSet, use_bvh: bool = True) -> bool:
    tris = strip.triangle_coords()
    if len(obstacles) == 0 or len(tris) == 0:
        return False
    if not use_bvh:
        return bool(np.any(obstacles.triangles_collide(tris)))
    bvh = Bvh.build(tris)
    for k in range(len(obstacles)):
        lo, hi = obstacles.aabb(k)
        cand = bvh.query(lo, hi)
        if len(cand) and np.any(obstacles.simplex_distances(k, tris[cand]) <= obstacles.inflation):
            return True
    return False


def strip_contains_points(strip: TriangulatedStrip, P, tol: float = EPS_GEOM) -> np.ndarray:
    """2D point-in-strip test: True where a point lies in (or within ``tol`` of) some triangle."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    if strip.dim != 2:
        raise ValueError("point-in-strip containment is defined for 2D strips")
    geoms = shapely.polygons(strip.triangle_coords())
    tree = shapely.STRtree(geoms)
    pts = shapely.points(P)
    inside = np.zeros(len(P), dtype=bool)
    pairs = tree.query(pts, predicate="dwithin", distance=tol)
    inside[np.unique(pairs[0])] = True
    return inside
