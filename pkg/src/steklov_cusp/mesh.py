"""Triangle meshes of the cuspidal domain: construction, refinement, export.

A Mesh is immutable after construction.  Boundary edges are directed so the
domain lies on the left, carry the arc tag and exact-curve parameters of
their endpoints, and cache weight samples at the default boundary quadrature
points.  The weight is always evaluated on the exact curve through the
(tag, parameter) pair, never interpolated from polygon vertices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .geometry import BoundaryPolygon, BoundaryTag, GeometryError
from .triangulation import triangulate_polygon

# Gauss-Legendre nodes/weights on [0, 1] (sum of weights = 1)
_GAUSS01 = {
    1: (np.array([0.5]), np.array([1.0])),
    2: (np.array([0.5 - 0.5 / math.sqrt(3.0), 0.5 + 0.5 / math.sqrt(3.0)]),
        np.array([0.5, 0.5])),
    3: (np.array([0.5 - 0.5 * math.sqrt(0.6), 0.5, 0.5 + 0.5 * math.sqrt(0.6)]),
        np.array([5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0])),
    4: (np.array([0.5 - 0.5 * 0.8611363115940526, 0.5 - 0.5 * 0.3399810435848563,
                  0.5 + 0.5 * 0.3399810435848563, 0.5 + 0.5 * 0.8611363115940526]),
        np.array([0.3478548451374538, 0.6521451548625461,
                  0.6521451548625461, 0.3478548451374538]) / 2.0),
    5: (np.array([0.5 - 0.5 * 0.9061798459386640, 0.5 - 0.5 * 0.5384693101056831, 0.5,
                  0.5 + 0.5 * 0.5384693101056831, 0.5 + 0.5 * 0.9061798459386640]),
        np.array([0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
                  0.4786286704993665, 0.2369268850561891]) / 2.0),
}

DEFAULT_QUAD_ORDER = 2


def gauss01(order: int):
    if order not in _GAUSS01:
        raise ValueError(f"boundary quadrature order must be 1..5, got {order}")
    return _GAUSS01[order]


@dataclass
class BoundaryEdges:
    """Per-edge boundary data, all arrays of length E (tags as a list)."""

    v0: np.ndarray
    v1: np.ndarray
    tag: list
    p0: np.ndarray
    p1: np.ndarray
    owner: np.ndarray
    length: np.ndarray
    normal: np.ndarray

    def __len__(self):
        return len(self.v0)


@dataclass
class Mesh:
    vertices: np.ndarray
    triangles: np.ndarray
    boundary: BoundaryEdges
    spec: geometry.DomainSpec | None
    t_star: float | None
    h_max: float
    h_min: float
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)

    def tri_geometry(self):
        """Per-triangle areas and P1 basis gradients, cached.

        Returns (areas (T,), grads (T, 3, 2)) with grads[t, k] the constant
        gradient of the hat function of local vertex k on triangle t.
        """
        if "tri_geom" not in self._cache:
            v = self.vertices[self.triangles]  # (T, 3, 2)
            d1 = v[:, 1] - v[:, 0]
            d2 = v[:, 2] - v[:, 0]
            det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
            areas = 0.5 * det
            grads = np.empty((len(det), 3, 2))
            # rotate opposite edge by 90 degrees, divide by twice the area
            for k in range(3):
                pj = v[:, (k + 1) % 3]
                pk = v[:, (k + 2) % 3]
                grads[:, k, 0] = (pj[:, 1] - pk[:, 1]) / det
                grads[:, k, 1] = (pk[:, 0] - pj[:, 0]) / det
            self._cache["tri_geom"] = (areas, grads)
        return self._cache["tri_geom"]

    def boundary_quadrature(self, order: int = DEFAULT_QUAD_ORDER):
        """Gauss data on boundary edges: (xi (Q,), gw (Q,), weights (E, Q)).

        weights holds the exact-curve boundary weight at every Gauss point;
        the integral of f over the boundary is sum(length * gw * f) with f
        sampled at the points (1 - xi) * v0 + xi * v1.
        """
        key = ("bq", order)
        if key not in self._cache:
            xi, gw = gauss01(order)
            b = self.boundary
            params = b.p0[:, None] * (1.0 - xi)[None, :] + b.p1[:, None] * xi[None, :]
            w = np.ones_like(params)
            for tag in set(b.tag):
                idx = [i for i, t in enumerate(b.tag) if t is tag]
                w[idx, :] = geometry.weight_on_arc(self.spec, tag, params[idx, :])
            self._cache[key] = (xi, gw, w)
        return self._cache[key]

    def boundary_vertex_ids(self) -> np.ndarray:
        if "bverts" not in self._cache:
            self._cache["bverts"] = np.unique(
                np.concatenate([self.boundary.v0, self.boundary.v1]))
        return self._cache["bverts"]


def _edge_owner_table(vertices, triangles, segs):
    """Owning triangle for each directed boundary segment (u, v)."""
    t = len(triangles)
    edges = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]],
                            triangles[:, [2, 0]]])
    tri_of = np.concatenate([np.arange(t)] * 3)
    key = np.minimum(edges[:, 0], edges[:, 1]) * (len(vertices) + 1) \
        + np.maximum(edges[:, 0], edges[:, 1])
    order = np.argsort(key, kind="stable")
    sorted_key = key[order]
    owners = []
    for (u, v, *_rest) in segs:
        k = min(u, v) * (len(vertices) + 1) + max(u, v)
        lo = np.searchsorted(sorted_key, k, side="left")
        hi = np.searchsorted(sorted_key, k, side="right")
        if hi - lo != 1:
            raise GeometryError("boundary edge not owned by exactly one triangle")
        owners.append(int(tri_of[order[lo]]))
    return np.array(owners, dtype=np.int64)


def _build_mesh(vertices, triangles, segs, spec, t_star) -> Mesh:
    vertices = np.asarray(vertices, dtype=float)
    triangles = np.asarray(triangles, dtype=np.int64)

    v = vertices[triangles]
    det = ((v[:, 1, 0] - v[:, 0, 0]) * (v[:, 2, 1] - v[:, 0, 1])
           - (v[:, 1, 1] - v[:, 0, 1]) * (v[:, 2, 0] - v[:, 0, 0]))
    if np.any(det <= 0.0):
        bad = int(np.argmin(det))
        raise GeometryError(f"triangle {bad} has non-positive area {0.5 * det[bad]:.3e}")

    owners = _edge_owner_table(vertices, triangles, segs)
    v0 = np.array([s[0] for s in segs], dtype=np.int64)
    v1 = np.array([s[1] for s in segs], dtype=np.int64)
    tags = [s[2] for s in segs]
    p0 = np.array([s[3] for s in segs], dtype=float)
    p1 = np.array([s[4] for s in segs], dtype=float)

    d = vertices[v1] - vertices[v0]
    length = np.hypot(d[:, 0], d[:, 1])
    normal = np.stack([d[:, 1], -d[:, 0]], axis=1) / length[:, None]

    # outward check against the owning triangle
    cen = v[owners].mean(axis=1) if len(owners) else np.zeros((0, 2))
    mid = 0.5 * (vertices[v0] + vertices[v1])
    inward = np.einsum("ij,ij->i", normal, cen - mid)
    if np.any(inward >= 0.0):
        raise GeometryError("boundary normal points into the domain")

    edges_all = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]],
                                triangles[:, [2, 0]]])
    ekey = np.minimum(edges_all[:, 0], edges_all[:, 1]) * (len(vertices) + 1) \
        + np.maximum(edges_all[:, 0], edges_all[:, 1])
    uniq = np.unique(ekey)
    eu = uniq // (len(vertices) + 1)
    ev = uniq % (len(vertices) + 1)
    elen = np.hypot(*(vertices[ev] - vertices[eu]).T)

    boundary = BoundaryEdges(v0=v0, v1=v1, tag=tags, p0=p0, p1=p1,
                             owner=owners, length=length, normal=normal)
    return Mesh(vertices=vertices, triangles=triangles, boundary=boundary,
                spec=spec, t_star=t_star,
                h_max=float(elen.max()), h_min=float(elen.min()))


def triangulate(polygon: BoundaryPolygon, target_h: float,
                tip_grading: float = 2.0, budget: int = 200_000) -> Mesh:
    """Constrained Delaunay mesh of the polygon interior with graded refinement.

    All polygon edges appear as mesh edges.  Away from the cusp tip the
    minimum angle is at least 20 degrees and edge lengths stay below target_h;
    near the tip the polygon grading takes over (see triangulation module).
    """
    pts, tris, segs = triangulate_polygon(polygon, target_h, tip_grading, budget)
    t_star = polygon.t_star if polygon.spec is not None and polygon.spec.kind == "cusp" else None
    return _build_mesh(pts, tris, segs, polygon.spec, t_star)


def refine_uniform(mesh: Mesh) -> Mesh:
    """Split every triangle into four through edge midpoints.

    Midpoints of boundary edges are projected back onto the exact curve of
    their arc tag (lateral curve, cap circle or validation circle); interior
    midpoints stay at chord midpoints.  Old vertices keep their coordinates.
    """
    verts = mesh.vertices
    tris = mesh.triangles
    n = len(verts)

    edges_all = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    ekey = np.minimum(edges_all[:, 0], edges_all[:, 1]) * np.int64(n + 1) \
        + np.maximum(edges_all[:, 0], edges_all[:, 1])
    uniq, inverse = np.unique(ekey, return_inverse=True)
    eu = (uniq // (n + 1)).astype(np.int64)
    ev = (uniq % (n + 1)).astype(np.int64)
    mid_ids = n + np.arange(len(uniq))
    mid_pts = 0.5 * (verts[eu] + verts[ev])

    # project boundary midpoints onto their exact curve
    b = mesh.boundary
    bkey = np.minimum(b.v0, b.v1) * np.int64(n + 1) + np.maximum(b.v0, b.v1)
    bpos = np.searchsorted(uniq, bkey)
    chord_mid = mid_pts[bpos].copy()
    new_segs = []
    for e in range(len(b)):
        pos = bpos[e]
        pm = 0.5 * (b.p0[e] + b.p1[e])
        tag = b.tag[e]
        if tag is not BoundaryTag.SEGMENT:
            mid_pts[pos] = geometry.curve_point(mesh.spec, tag, pm)
        m = int(mid_ids[pos])
        new_segs.append((int(b.v0[e]), m, tag, float(b.p0[e]), pm, -1))
        new_segs.append((m, int(b.v1[e]), tag, pm, float(b.p1[e]), -1))

    m01 = mid_ids[inverse[:len(tris)]]
    m12 = mid_ids[inverse[len(tris):2 * len(tris)]]
    m20 = mid_ids[inverse[2 * len(tris):]]
    a, bb, c = tris[:, 0], tris[:, 1], tris[:, 2]
    new_tris = np.concatenate([
        np.stack([a, m01, m20], axis=1),
        np.stack([m01, bb, m12], axis=1),
        np.stack([m20, m12, c], axis=1),
        np.stack([m01, m12, m20], axis=1),
    ])

    # deep inside the cusp channel the chord sagitta can exceed the local
    # channel width, so projecting a midpoint may invert a sliver child;
    # revert exactly those midpoints to the chord (their weight samples stay
    # exact through the stored curve parameters)
    new_verts = np.vstack([verts, mid_pts])
    for _ in range(20):
        w = new_verts[new_tris]
        det = ((w[:, 1, 0] - w[:, 0, 0]) * (w[:, 2, 1] - w[:, 0, 1])
               - (w[:, 1, 1] - w[:, 0, 1]) * (w[:, 2, 0] - w[:, 0, 0]))
        bad = det <= 0.0
        if not bad.any():
            break
        bad_verts = np.unique(new_tris[bad])
        boundary_mids = mid_ids[bpos]
        bad_mids = np.intersect1d(bad_verts, boundary_mids)
        if len(bad_mids) == 0:
            raise GeometryError("refinement inverted a triangle away from the boundary")
        sorter = np.argsort(boundary_mids)
        sel = sorter[np.searchsorted(boundary_mids, bad_mids, sorter=sorter)]
        new_verts[bad_mids] = chord_mid[sel]
    else:
        raise GeometryError("refinement could not restore positive orientation")

    return _build_mesh(new_verts, new_tris, new_segs, mesh.spec, mesh.t_star)


def validate(mesh: Mesh) -> None:
    """Structural invariants: conformity, Euler relation, area consistency."""
    n = mesh.num_vertices
    tris = mesh.triangles
    edges_all = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    ekey = np.minimum(edges_all[:, 0], edges_all[:, 1]) * np.int64(n + 1) \
        + np.maximum(edges_all[:, 0], edges_all[:, 1])
    uniq, counts = np.unique(ekey, return_counts=True)
    if np.any(counts > 2):
        raise GeometryError("non-conforming mesh: edge shared by more than 2 triangles")
    n_edges = len(uniq)
    if n - n_edges + len(tris) != 1:
        raise GeometryError("Euler relation violated")
    bkey = np.minimum(mesh.boundary.v0, mesh.boundary.v1) * np.int64(n + 1) \
        + np.maximum(mesh.boundary.v0, mesh.boundary.v1)
    once = uniq[counts == 1]
    if sorted(bkey.tolist()) != sorted(once.tolist()):
        raise GeometryError("boundary edges do not match the mesh boundary")
    areas, _ = mesh.tri_geometry()
    if np.any(areas <= 0.0):
        raise GeometryError("non-positive triangle area")


def mesh_area(mesh: Mesh) -> float:
    areas, _ = mesh.tri_geometry()
    return float(areas.sum())


def boundary_weighted_length(mesh: Mesh, order: int = DEFAULT_QUAD_ORDER) -> float:
    """Quadrature value of the weighted boundary length (the measure of w ds)."""
    _, gw, w = mesh.boundary_quadrature(order)
    return float(np.sum(mesh.boundary.length[:, None] * gw[None, :] * w))


# -- export -------------------------------------------------------------


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def write_vtk(mesh: Mesh, path, point_data: dict | None = None, title: str = "mesh"):
    """Legacy ASCII VTK (DataFile 3.0, unstructured grid of type-5 triangles)."""
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID"]
    n = mesh.num_vertices
    lines.append(f"POINTS {n} double")
    for x, y in mesh.vertices:
        lines.append(f"{_fmt(x)} {_fmt(y)} 0")
    t = mesh.num_triangles
    lines.append(f"CELLS {t} {4 * t}")
    for a, b, c in mesh.triangles:
        lines.append(f"3 {a} {b} {c}")
    lines.append(f"CELL_TYPES {t}")
    lines.extend(["5"] * t)
    if point_data:
        lines.append(f"POINT_DATA {n}")
        for name, values in point_data.items():
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(_fmt(v) for v in np.asarray(values, dtype=float))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_vertices_csv(mesh: Mesh, path):
    with open(path, "w") as fh:
        fh.write("index,x,y\n")
        for i, (x, y) in enumerate(mesh.vertices):
            fh.write(f"{i},{_fmt(x)},{_fmt(y)}\n")


def write_triangles_csv(mesh: Mesh, path):
    with open(path, "w") as fh:
        fh.write("v0,v1,v2\n")
        for a, b, c in mesh.triangles:
            fh.write(f"{a},{b},{c}\n")


def write_boundary_csv(mesh: Mesh, path, order: int = DEFAULT_QUAD_ORDER):
    _, _, w = mesh.boundary_quadrature(order)
    b = mesh.boundary
    wcols = ",".join(f"w_gauss{q}" for q in range(w.shape[1]))
    with open(path, "w") as fh:
        fh.write(f"v0,v1,tag,length,nx,ny,{wcols}\n")
        for e in range(len(b)):
            ws = ",".join(_fmt(x) for x in w[e])
            fh.write(f"{b.v0[e]},{b.v1[e]},{b.tag[e].value},{_fmt(b.length[e])},"
                     f"{_fmt(b.normal[e, 0])},{_fmt(b.normal[e, 1])},{ws}\n")
