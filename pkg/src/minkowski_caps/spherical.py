"""Spherical geometry primitives: angles, caps, annuli and icosphere quadrature.

Points on the unit sphere are plain ``numpy`` arrays of shape ``(3,)`` (or
``(N, 3)`` for batches); :func:`unit` is the single normalizing constructor.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DomainError, EvaluationError, ResourceError

MAX_LEVEL = 8

E1 = np.array([1.0, 0.0, 0.0])
E2 = np.array([0.0, 1.0, 0.0])
E3 = np.array([0.0, 0.0, 1.0])


def unit(v) -> np.ndarray:
    """Return ``v`` normalized to unit length (row-wise for 2-D input)."""
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(norm == 0) or not np.all(np.isfinite(norm)):
        raise DomainError("cannot normalize a zero or non-finite vector")
    out = v / norm
    # a second pass brings the norm to within one ulp of 1
    return out / np.linalg.norm(out, axis=-1, keepdims=True)


def spherical_angle(p, q) -> float | np.ndarray:
    """Angle in [0, pi] between unit vectors, via the clamped dot product."""
    d = np.sum(np.asarray(p, float) * np.asarray(q, float), axis=-1)
    return np.arccos(np.clip(d, -1.0, 1.0))


def tangent_frame(p) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic orthonormal basis (e1, e2) of the tangent plane at ``p``.

    ``(e1, e2, p)`` is right-handed.
    """
    p = unit(p)
    helper = E1 if abs(p[0]) < 0.9 else E2
    e1 = unit(helper - np.dot(helper, p) * p)
    e2 = np.cross(p, e1)
    return e1, e2


def exp_map(p, tangent) -> np.ndarray:
    """Point reached by following the geodesic from ``p`` along ``tangent``."""
    t = np.asarray(tangent, float)
    rho = np.linalg.norm(t, axis=-1, keepdims=True)
    safe = np.where(rho == 0, 1.0, rho)
    return np.cos(rho) * p + np.sin(rho) * t / safe


def rotation_to(a, b) -> np.ndarray:
    """A rotation matrix R with R @ a = b for unit vectors a, b."""
    a, b = unit(a), unit(b)
    v = np.cross(a, b)
    c = float(np.dot(a, b))
    if c < -1.0 + 1e-12:
        e1, _ = tangent_frame(a)
        return 2.0 * np.outer(e1, e1) - np.eye(3)
    vx = np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])
    return np.eye(3) + vx + vx @ vx / (1.0 + c)


@dataclass(frozen=True)
class SphericalCap:
    """The open cap {p : sin angle(p, center) < sin_radius, cos angle > 0}."""

    center: np.ndarray
    sin_radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", unit(self.center))
        if not 0.0 < self.sin_radius <= 1.0:
            raise DomainError(f"sin_radius must lie in (0, 1], got {self.sin_radius}")

    def contains(self, p) -> bool | np.ndarray:
        return cap_contains(self, p)

    @property
    def angular_radius(self) -> float:
        return float(np.arcsin(self.sin_radius))


@dataclass(frozen=True)
class Annulus:
    """A(q, r) = B(q, 2r) minus the closure of B(q, r)."""

    center: np.ndarray
    r: float

    def __post_init__(self):
        object.__setattr__(self, "center", unit(self.center))
        if not 0.0 < 2 * self.r <= 1.0:
            raise DomainError(f"annulus needs 0 < 2r <= 1, got r={self.r}")

    @property
    def inner(self) -> SphericalCap:
        return SphericalCap(self.center, self.r)

    @property
    def outer(self) -> SphericalCap:
        return SphericalCap(self.center, 2 * self.r)

    def contains(self, p):
        c = np.sum(np.asarray(p, float) * self.center, axis=-1)
        s = np.sqrt(np.clip(1.0 - c * c, 0.0, None))
        # closure of B(q, r) within the positive hemisphere is sin <= r, cos >= 0
        return (c > 0) & (s < 2 * self.r) & (s > self.r)


def cap_contains(cap: SphericalCap, p) -> bool | np.ndarray:
    """Strict membership test; vectorized over a leading batch axis."""
    c = np.sum(np.asarray(p, float) * cap.center, axis=-1)
    s = np.sqrt(np.clip(1.0 - c * c, 0.0, None))
    return (s < cap.sin_radius) & (c > 0)


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    """Icosphere quadrature: one node per face, weight = spherical face area.

    ``vertices``/``faces`` keep the underlying triangulation, used for the
    grid spacing and for face adjacency.
    """

    nodes: np.ndarray
    weights: np.ndarray
    level: int
    vertices: np.ndarray
    faces: np.ndarray

    def __len__(self):
        return len(self.weights)

    @property
    def spacing(self) -> float:
        return _mean_spacing(self.level)


def _icosahedron():
    phi = (1.0 + 5.0 ** 0.5) / 2.0
    verts = np.array([
        (-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
        (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
        (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1),
    ], dtype=float)
    faces = np.array([
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ], dtype=np.int64)
    return unit(verts), faces


def _subdivide(verts, faces):
    nf = len(faces)
    edges = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    edges.sort(axis=1)
    uniq, inverse = np.unique(edges, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    mids = unit(verts[uniq[:, 0]] + verts[uniq[:, 1]])
    new_verts = np.concatenate([verts, mids])
    off = len(verts)
    ab = inverse[:nf] + off
    bc = inverse[nf:2 * nf] + off
    ca = inverse[2 * nf:] + off
    a, b, c = faces[:, 0], faces[:, 1], faces[:, 2]
    new_faces = np.stack([
        np.stack([a, ab, ca], 1),
        np.stack([b, bc, ab], 1),
        np.stack([c, ca, bc], 1),
        np.stack([ab, bc, ca], 1),
    ], axis=1).reshape(-1, 3)
    return new_verts, new_faces


def spherical_triangle_area(a, b, c) -> np.ndarray:
    """Spherical excess of triangles with unit-vector corners (row-wise).

    Uses tan(E/2) = |a.(b x c)| / (1 + a.b + b.c + c.a).
    """
    num = np.abs(np.einsum("ij,ij->i", a, np.cross(b, c)))
    den = (1.0 + np.einsum("ij,ij->i", a, b) + np.einsum("ij,ij->i", b, c)
           + np.einsum("ij,ij->i", c, a))
    return 2.0 * np.arctan2(num, den)


@lru_cache(maxsize=None)
def build_grid(level: int) -> QuadratureGrid:
    """Geodesic icosphere grid with 20 * 4**level nodes (cached per level)."""
    if not isinstance(level, (int, np.integer)) or level < 0:
        raise DomainError(f"grid level must be a non-negative integer, got {level!r}")
    if level > MAX_LEVEL:
        raise ResourceError(f"grid level {level} exceeds the guard {MAX_LEVEL}")
    verts, faces = _icosahedron()
    for _ in range(level):
        verts, faces = _subdivide(verts, faces)
    a, b, c = verts[faces[:, 0]], verts[faces[:, 1]], verts[faces[:, 2]]
    weights = spherical_triangle_area(a, b, c)
    nodes = unit(a + b + c)
    for arr in (nodes, weights, verts, faces):
        arr.setflags(write=False)
    return QuadratureGrid(nodes=nodes, weights=weights, level=int(level),
                          vertices=verts, faces=faces)


@lru_cache(maxsize=None)
def _mean_spacing(level: int) -> float:
    """Mean angle between nodes of edge-adjacent faces."""
    grid = build_grid(level)
    f = grid.faces
    nf = len(f)
    edges = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    edges.sort(axis=1)
    owner = np.tile(np.arange(nf), 3)
    order = np.lexsort((edges[:, 1], edges[:, 0]))
    e, o = edges[order], owner[order]
    # every edge of a closed triangulation is shared by exactly two faces
    pairs = o.reshape(-1, 2)
    assert np.all(e[0::2] == e[1::2])
    ang = spherical_angle(grid.nodes[pairs[:, 0]], grid.nodes[pairs[:, 1]])
    return float(ang.mean())


def _evaluate(grid: QuadratureGrid, g) -> np.ndarray:
    if callable(g):
        try:
            values = np.asarray(g(grid.nodes), dtype=float)
        except (TypeError, ValueError):
            values = None
        if values is None or values.shape != grid.weights.shape:
            values = np.array([float(g(u)) for u in grid.nodes])
    else:
        values = np.asarray(g, dtype=float)
        if values.shape != grid.weights.shape:
            raise DomainError(
                f"field has shape {values.shape}, grid has {len(grid)} nodes")
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        i = int(bad[0])
        raise EvaluationError(
            f"non-finite field value {values[i]} at node {i} ({grid.nodes[i].tolist()})")
    return values


def integrate_scalar(grid: QuadratureGrid, g) -> float:
    """Sum of w_i g(u_i)."""
    return float(grid.weights @ _evaluate(grid, g))


def integrate_vector(grid: QuadratureGrid, g) -> np.ndarray:
    """Sum of w_i g(u_i) u_i, the quadrature of the integral of g(p) p dp.

    ``g`` is either a callable taking the ``(N, 3)`` node array (or, as a
    fallback, one node at a time) or an array of per-node values.
    """
    values = _evaluate(grid, g)
    return (grid.weights * values) @ grid.nodes


def cap_indicator(cap: SphericalCap):
    """Indicator field of ``cap`` usable with :func:`integrate_vector`."""
    return lambda pts: cap_contains(cap, pts).astype(float)
