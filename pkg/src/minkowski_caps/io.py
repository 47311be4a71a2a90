"""File formats: JSON with 17 significant digits, OBJ meshes and CSV series."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np
from scipy.sparse.csgraph import connected_components
from scipy.sparse import coo_matrix
from scipy.spatial import cKDTree

from .errors import InputError
from .polytope import ConvexPolytope, SupportVector, realize

MERGE_TOL = 1e-12


def fmt(x: float) -> str:
    """A float with 17 significant digits (lossless for float64)."""
    return format(float(x), ".17g")


def _encode(obj, indent: int, level: int) -> str:
    pad = "\n" + " " * (indent * (level + 1))
    end = "\n" + " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [json.dumps(str(k)) + ": " + _encode(v, indent, level + 1) for k, v in obj.items()]
        return "{" + pad + ("," + pad).join(items) + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        parts = [_encode(v, indent, level + 1) for v in seq]
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
            return "[" + ", ".join(parts) + "]"
        return "[" + pad + ("," + pad).join(parts) + end + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        # JSON has no NaN/inf; they become null
        return fmt(obj) if math.isfinite(obj) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    return _encode(obj, indent, 0) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj))


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None


def mesh(P: ConvexPolytope, with_ids: bool = False):
    """Distinct vertices (sorted lexicographically) and per-facet CCW index loops.

    Vertex rows of P that coincide within MERGE_TOL * diameter are merged.
    Empty facets are omitted; ``with_ids`` also returns the facet index of
    each face.
    """
    rows = P.vertices
    tol = MERGE_TOL * max(P.diameter, 1.0)
    pairs = cKDTree(rows).query_pairs(tol, output_type="ndarray")
    n = len(rows)
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, comp = connected_components(graph, directed=False)
    # one representative per cluster: the lowest row index
    rep = np.full(comp.max() + 1, n)
    np.minimum.at(rep, comp, np.arange(n))
    pts = rows[rep]
    order = np.lexsort(pts.T[::-1])
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    verts = pts[order]
    faces, ids = [], []
    for i in np.flatnonzero(P.nonempty):
        loop = rank[comp[P.loops[i]]]
        # drop consecutive repeats left by merging
        keep = loop != np.roll(loop, 1)
        loop = loop[keep] if keep.any() else loop[:1]
        if len(loop) >= 3:
            faces.append(loop)
            ids.append(int(i))
    return (verts, faces, ids) if with_ids else (verts, faces)


def write_obj(P: ConvexPolytope, path) -> None:
    verts, faces = mesh(P)
    lines = [f"v {fmt(x)} {fmt(y)} {fmt(z)}" for x, y, z in verts]
    lines += ["f " + " ".join(str(int(k) + 1) for k in f) for f in faces]
    Path(path).write_text("\n".join(lines) + "\n")


def read_obj(path) -> tuple[np.ndarray, list[np.ndarray]]:
    verts, faces = [], []
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            verts.append([float(x) for x in parts[1:4]])
        elif parts[0] == "f":
            faces.append(np.array([int(tok.split("/")[0]) - 1 for tok in parts[1:]]))
    return np.array(verts), faces


def mesh_volume(verts: np.ndarray, faces) -> float:
    """Volume enclosed by an outward-oriented polygon mesh (fan triangulation)."""
    total = 0.0
    for f in faces:
        a = verts[f[0]]
        b, c = verts[f[1:-1]], verts[f[2:]]
        total += float(np.sum(np.einsum("ij,ij->i", np.broadcast_to(a, b.shape), np.cross(b, c))))
    return total / 6.0


def body_to_dict(P: ConvexPolytope) -> dict:
    """Support data plus the vertex/facet lists of the realized body."""
    verts, faces, ids = mesh(P, with_ids=True)
    loops = dict(zip(ids, faces))
    facets = [{"normal_index": i,
               "vertex_loop": [int(v) for v in loops.get(i, [])],
               "area": float(P.areas[i]),
               "plane_offset": float(P.offsets[i])} for i in range(len(P))]
    return {
        "normals": P.normals.tolist(),
        "offsets": P.offsets.tolist(),
        "vertices": verts.tolist(),
        "facets": facets,
    }


def body_from_dict(data) -> ConvexPolytope:
    """Re-realize a body from its serialized normals and offsets."""
    try:
        normals = np.asarray(data["normals"], float)
        offsets = np.asarray(data["offsets"], float)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"body file needs numeric 'normals' and 'offsets' ({exc})") from None
    if normals.ndim != 2 or normals.shape[1] != 3 or len(offsets) != len(normals):
        raise InputError("body file: 'normals' must be N x 3 and 'offsets' length N")
    return realize(SupportVector(normals, offsets))


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow(["" if v is None else fmt(v) if isinstance(v, (float, np.floating)) else v
                        for v in row])
