"""Convex polytopes given by outer normals and support numbers.

A support vector ``h`` over unit normals ``u_i`` describes the polytope
``{x : <x, u_i> <= h_i for all i}``.  It is realized by polarity: with an
interior point ``c`` the dual points ``u_i / (h_i - <c, u_i>)`` are hulled,
every dual hull triangle is a primal vertex and every dual hull vertex is a
non-empty primal facet.  Normals whose dual point is not a hull vertex give
empty facets (area 0), which are legal.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, QhullError

from .errors import (DegenerateHullError, DomainError, EmptyBodyError,
                     UnboundedIntersectionError)
from .spherical import QuadratureGrid, unit


@dataclass(frozen=True, eq=False)
class SupportVector:
    """Support numbers ``values[i]`` attached to unit ``normals[i]``."""

    normals: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        normals = unit(np.atleast_2d(self.normals))
        values = np.asarray(self.values, dtype=float).reshape(-1)
        if normals.shape != (len(values), 3):
            raise DomainError(
                f"{len(values)} support values for {len(normals)} normals")
        if not np.all(np.isfinite(values)):
            raise DomainError("support values must be finite")
        object.__setattr__(self, "normals", normals)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_grid(cls, grid: QuadratureGrid, values) -> "SupportVector":
        return cls(grid.nodes, np.broadcast_to(np.asarray(values, float), (len(grid),)))

    def __len__(self):
        return len(self.values)

    def translated(self, c) -> "SupportVector":
        """Support vector of the body shifted by ``c``."""
        return SupportVector(self.normals, self.values + self.normals @ np.asarray(c, float))

    def scaled(self, s: float) -> "SupportVector":
        return SupportVector(self.normals, s * self.values)


@dataclass(frozen=True, eq=False)
class ConvexPolytope:
    """A realized polytope.

    ``vertices`` has one row per dual hull triangle, so a primal vertex of
    degree > 3 may appear more than once (at the same position).  Adjacent
    facet pairs are listed in ``edges`` with the two vertex rows bounding
    the shared primal edge in ``edge_vertices``.
    """

    normals: np.ndarray
    offsets: np.ndarray
    vertices: np.ndarray
    areas: np.ndarray
    edges: np.ndarray
    edge_vertices: np.ndarray
    triangles: np.ndarray
    interior_point: np.ndarray
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __len__(self):
        return len(self.offsets)

    @property
    def support(self) -> SupportVector:
        return SupportVector(self.normals, self.offsets)

    @property
    def total_area(self) -> float:
        return float(self.areas.sum())

    @cached_property
    def nonempty(self) -> np.ndarray:
        return self.areas > 0

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        xa = self.vertices[self.edge_vertices[:, 0]]
        xb = self.vertices[self.edge_vertices[:, 1]]
        return np.linalg.norm(xa - xb, axis=1)

    @cached_property
    def loops(self) -> list[np.ndarray]:
        """Per facet, vertex rows in counterclockwise order seen from outside."""
        return _facet_loops(self)

    @cached_property
    def diameter(self) -> float:
        return _diameter(self.vertices)

    def translate(self, v) -> "ConvexPolytope":
        v = np.asarray(v, float)
        return replace(
            self,
            offsets=self.offsets + self.normals @ v,
            vertices=self.vertices + v,
            interior_point=self.interior_point + v,
            translation=self.translation + v,
        )


def chebyshev_center(normals, values) -> tuple[np.ndarray, float]:
    """Center and radius of the largest ball inside ``{<x,u_i> <= h_i}``."""
    normals = np.asarray(normals, float)
    values = np.asarray(values, float)
    scale = max(float(np.max(np.abs(values))), 1.0)
    bound = 1e6 * scale
    a_ub = np.hstack([normals, np.ones((len(normals), 1))])
    res = linprog(c=[0, 0, 0, -1.0], A_ub=a_ub, b_ub=values,
                  bounds=[(-bound, bound)] * 3 + [(None, bound)], method="highs")
    if res.status != 0:
        raise EmptyBodyError(f"interior-point LP failed: {res.message}")
    center, radius = res.x[:3], float(res.x[3])
    if radius >= 0.5 * bound or np.max(np.abs(center)) >= 0.5 * bound:
        raise UnboundedIntersectionError("normals do not positively span R^3")
    return center, radius


def _interior_point(normals, values) -> np.ndarray:
    hmax = float(np.max(np.abs(values)))
    if np.min(values) > 1e-3 * hmax:
        return np.zeros(3)
    center, radius = chebyshev_center(normals, values)
    if radius <= 1e-12 * max(hmax, 1.0):
        raise EmptyBodyError("parallel body empty: the half-spaces have no common interior")
    return center


def realize(h: SupportVector) -> ConvexPolytope:
    """Intersect the half-spaces ``<x, u_i> <= h_i`` via the dual convex hull."""
    normals, values = h.normals, h.values
    if len(values) < 4:
        raise UnboundedIntersectionError("normals do not positively span R^3 (fewer than 4)")
    c = _interior_point(normals, values)
    shifted = values - normals @ c
    if np.min(shifted) <= 0:
        raise EmptyBodyError("interior point is not strictly inside every half-space")
    dual = normals / shifted[:, None]
    try:
        hull = ConvexHull(dual)
    except QhullError as exc:
        raise DegenerateHullError(f"dual hull is degenerate: {exc}") from None
    eq = hull.equations
    # origin of the dual space must be strictly inside, else unbounded primal
    if np.any(eq[:, 3] > -1e-12 * np.max(np.abs(eq[:, 3]))):
        raise UnboundedIntersectionError("normals do not positively span R^3")
    verts = eq[:, :3] / (-eq[:, 3])[:, None]

    tri = hull.simplices.copy()
    a, b, cc = dual[tri[:, 0]], dual[tri[:, 1]], dual[tri[:, 2]]
    flip = np.einsum("ij,ij->i", np.cross(b - a, cc - a), eq[:, :3]) < 0
    tri[flip, 1], tri[flip, 2] = tri[flip, 2], tri[flip, 1].copy()

    # Facet adjacency; neighbors[t, k] is across from simplices[t, k].
    nb = hull.neighbors
    t_idx = np.repeat(np.arange(len(tri)), 3)
    k_idx = np.tile(np.arange(3), len(tri))
    other = nb[t_idx, k_idx]
    keep = t_idx < other
    t_idx, k_idx, other = t_idx[keep], k_idx[keep], other[keep]
    simp = hull.simplices[t_idx]
    mask = np.ones((len(simp), 3), bool)
    mask[np.arange(len(simp)), k_idx] = False
    pair = simp[mask].reshape(-1, 2)
    # orient each pair so that the edge i->j is traversed by triangle t
    pos = np.argmax(tri[t_idx] == pair[:, :1], axis=1)
    nxt = tri[t_idx, (pos + 1) % 3]
    swap = nxt != pair[:, 1]
    pair[swap] = pair[swap][:, ::-1]
    edge_vertices = np.stack([t_idx, other], axis=1)

    areas = _edge_areas(normals, shifted, pair, verts, edge_vertices)
    return ConvexPolytope(
        normals=normals,
        offsets=values.copy(),
        vertices=verts + c,
        areas=areas,
        edges=pair,
        edge_vertices=edge_vertices,
        triangles=tri,
        interior_point=c,
    )


def _edge_areas(normals, h, pairs, verts, edge_vertices) -> np.ndarray:
    """Facet areas as half the sum of (edge length) x (foot-to-edge distance).

    ``h`` and ``verts`` are relative to a common interior point.
    """
    i, j = pairs[:, 0], pairs[:, 1]
    cos = np.clip(np.einsum("ij,ij->i", normals[i], normals[j]), -1.0, 1.0)
    sin = np.sqrt(1.0 - cos * cos)
    length = np.linalg.norm(verts[edge_vertices[:, 0]] - verts[edge_vertices[:, 1]], axis=1)
    ok = sin > 0
    dist_i = np.zeros_like(length)
    dist_j = np.zeros_like(length)
    dist_i[ok] = (h[j][ok] - h[i][ok] * cos[ok]) / sin[ok]
    dist_j[ok] = (h[i][ok] - h[j][ok] * cos[ok]) / sin[ok]
    areas = np.zeros(len(h))
    np.add.at(areas, i, 0.5 * length * dist_i)
    np.add.at(areas, j, 0.5 * length * dist_j)
    return np.maximum(areas, 0.0)


def facet_areas(P: ConvexPolytope) -> np.ndarray:
    """Per-normal facet areas by the shoelace formula in each facet plane.

    Works from the oriented edge list rather than ordered loops: each facet
    edge contributes the cross product of its endpoints (relative to the
    facet's foot point) projected on the facet normal.
    """
    i, j = P.edges[:, 0], P.edges[:, 1]
    x0 = P.vertices[P.edge_vertices[:, 0]]
    x1 = P.vertices[P.edge_vertices[:, 1]]
    foot = P.interior_point + (P.offsets - P.normals @ P.interior_point)[:, None] * P.normals
    out = np.zeros(len(P))
    # edge i->j is traversed by triangle t0; around facet i that is x1 -> x0
    ci = np.einsum("ij,ij->i", np.cross(x1 - foot[i], x0 - foot[i]), P.normals[i])
    cj = np.einsum("ij,ij->i", np.cross(x0 - foot[j], x1 - foot[j]), P.normals[j])
    np.add.at(out, i, 0.5 * ci)
    np.add.at(out, j, 0.5 * cj)
    return np.maximum(out, 0.0)


def _tetrahedra(P: ConvexPolytope):
    """Signed volumes and centroids of the fan (c, foot_i, x0, x1) per edge side."""
    c = P.interior_point
    foot = c + (P.offsets - P.normals @ c)[:, None] * P.normals
    x0 = P.vertices[P.edge_vertices[:, 0]]
    x1 = P.vertices[P.edge_vertices[:, 1]]
    vols, cents = [], []
    for side, (a, b) in ((0, (x1, x0)), (1, (x0, x1))):
        f = foot[P.edges[:, side]]
        v = np.einsum("ij,ij->i", f - c, np.cross(a - c, b - c)) / 6.0
        vols.append(v)
        cents.append((c + f + a + b) / 4.0)
    vols = np.concatenate(vols)
    cents = np.concatenate(cents)
    return vols, cents


def volume_tetrahedra(P: ConvexPolytope) -> float:
    vols, _ = _tetrahedra(P)
    return float(abs(vols.sum()))


def volume(P: ConvexPolytope, check: bool = True) -> float:
    """V = (1/3) sum h_i A_i, with h measured from an interior point."""
    h = P.offsets - P.normals @ P.interior_point
    v = float(h @ P.areas) / 3.0
    if check:
        v2 = volume_tetrahedra(P)
        if abs(v - v2) > 1e-10 * max(abs(v), 1e-300) + 1e-14:
            raise AssertionError(f"volume mismatch: support form {v!r} vs tetrahedra {v2!r}")
    return v


def centroid(P: ConvexPolytope) -> np.ndarray:
    vols, cents = _tetrahedra(P)
    return (vols[:, None] * cents).sum(0) / vols.sum()


def recenter(P: ConvexPolytope) -> tuple[ConvexPolytope, np.ndarray]:
    """Translate so the volume centroid is the origin; return the shift."""
    shift = -centroid(P)
    return P.translate(shift), shift


def support_eval(P: ConvexPolytope, u) -> float | np.ndarray:
    """max over vertices of <u, v>; vectorized over a batch of directions."""
    u = np.asarray(u, float)
    if u.ndim == 1:
        return float(np.max(P.vertices @ u))
    out = np.empty(len(u))
    chunk = max(1, 2_000_000 // max(len(P.vertices), 1))
    for s in range(0, len(u), chunk):
        out[s:s + chunk] = np.max(u[s:s + chunk] @ P.vertices.T, axis=1)
    return out


def hausdorff_distance(P: ConvexPolytope, Q: ConvexPolytope, sample: QuadratureGrid) -> float:
    """max over sample directions of |h_P(u) - h_Q(u)|."""
    return float(np.max(np.abs(support_eval(P, sample.nodes) - support_eval(Q, sample.nodes))))


def parallel_support(h: SupportVector, t: float) -> SupportVector:
    """Support vector of the outer parallel body at distance ``t``."""
    return SupportVector(h.normals, h.values + float(t))


def inradius(P: ConvexPolytope) -> tuple[float, np.ndarray]:
    center, radius = chebyshev_center(P.normals, P.offsets)
    return radius, center


def _diameter(points: np.ndarray) -> float:
    """Exact max pairwise distance, pruning points that cannot be endpoints."""
    pts = np.unique(np.round(points, 14), axis=0)
    if len(pts) < 2:
        return 0.0
    c = pts.mean(0)
    r = np.linalg.norm(pts - c, axis=1)
    # lower bound from a few extreme pairs
    lo = 0.0
    for d in np.vstack([np.eye(3), unit(pts[np.argmax(r)] - c)[None]]):
        proj = pts @ d
        lo = max(lo, float(np.linalg.norm(pts[np.argmax(proj)] - pts[np.argmin(proj)])))
    cand = pts[r >= lo - r.max()]
    best = lo
    for s in range(0, len(cand), 512):
        block = cand[s:s + 512]
        d2 = ((block[:, None, :] - cand[None, :, :]) ** 2).sum(-1)
        best = max(best, float(np.sqrt(d2.max())))
    return best


def _facet_loops(P: ConvexPolytope) -> list[np.ndarray]:
    tri = P.triangles
    nxt_tri: dict[tuple[int, int], int] = {}
    first: dict[int, int] = {}
    for t, (a, b, c) in enumerate(tri.tolist()):
        for i, j in ((a, b), (b, c), (c, a)):
            nxt_tri[(i, j)] = t
            first.setdefault(i, t)
    loops: list[np.ndarray] = [np.empty(0, dtype=np.int64) for _ in range(len(P))]
    for i, t0 in first.items():
        if P.areas[i] <= 0:
            continue
        ring = []
        t = t0
        while True:
            ring.append(t)
            a, b, c = tri[t]
            prev = {a: c, b: a, c: b}[i]
            t = nxt_tri[(i, prev)]
            if t == t0 or len(ring) > len(tri):
                break
        loop = np.array(ring, dtype=np.int64)
        # drop repeated positions from coplanar dual triangles
        pos = P.vertices[loop]
        step = np.linalg.norm(pos - np.roll(pos, -1, axis=0), axis=1)
        tol = 1e-12 * max(1.0, float(np.abs(pos).max()))
        loop = loop[step > tol] if np.any(step > tol) else loop[:1]
        if len(loop) >= 3:
            pos = P.vertices[loop]
            signed = np.einsum("ij,j->", np.cross(pos - pos.mean(0), np.roll(pos, -1, 0) - pos.mean(0)),
                               P.normals[i])
            if signed < 0:
                loop = loop[::-1]
        loops[i] = loop
    return loops
