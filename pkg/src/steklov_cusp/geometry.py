"""Outward cuspidal domain in 2-D: boundary curves, cusp/cap junction, weight.

The domain is the union of a power cusp channel {|x| < y**alpha, 0 < y <= 1}
and the open disk of radius sqrt(2) centered at (0, 2).  For alpha > 1 the
lateral curves enter the disk before y = 1, so the actual boundary consists of
the two lateral curves up to the junction height t_star and the part of the
circle outside the channel (the "cap arc").  A validation disk centered at the
origin is supported as a second domain kind.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

CAP_CENTER = (0.0, 2.0)
CAP_RADIUS = math.sqrt(2.0)


class GeometryError(Exception):
    """Boundary construction failed (non-simple polygon, bracketing, ...)."""


class BoundaryTag(Enum):
    CUSP_LATERAL_RIGHT = "cusp_lateral_right"
    CUSP_LATERAL_LEFT = "cusp_lateral_left"
    CAP_ARC = "cap_arc"
    DISK_CIRCLE = "disk_circle"
    SEGMENT = "segment"


@dataclass(frozen=True)
class DomainSpec:
    """Parameters of the cusp+cap geometry (or of the validation disk).

    alpha is the cusp exponent in the half-width law y**alpha; the cap is
    fixed at center (0, 2), radius sqrt(2).  kind is "cusp" or "disk".
    """

    alpha: float = 2.0
    kind: str = "cusp"
    disk_radius: float = 1.0

    def __post_init__(self):
        if self.kind not in ("cusp", "disk"):
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if self.kind == "cusp" and not self.alpha > 1.0:
            raise ValueError(f"cusp exponent alpha must exceed 1, got {self.alpha}")
        if self.kind == "disk" and not self.disk_radius > 0.0:
            raise ValueError(f"disk radius must be positive, got {self.disk_radius}")

    @staticmethod
    def cusp(alpha: float) -> "DomainSpec":
        return DomainSpec(alpha=alpha, kind="cusp")

    @staticmethod
    def disk(radius: float = 1.0) -> "DomainSpec":
        return DomainSpec(kind="disk", disk_radius=radius)


def cusp_halfwidth(spec: DomainSpec, t: float) -> float:
    """Half-width t**alpha of the cusp cross-section at height t in (0, 1]."""
    if spec.kind != "cusp":
        raise ValueError("cusp_halfwidth requires a cusp domain")
    if not 0.0 < t <= 1.0:
        raise ValueError(f"height t must lie in (0, 1], got {t}")
    return t ** spec.alpha


def _junction_gap(alpha: float, t: float) -> float:
    # Positive iff the lateral point (t**alpha, t) lies outside the cap disk.
    return t ** (2.0 * alpha) + (2.0 - t) ** 2 - 2.0


def cusp_cap_intersection(spec: DomainSpec) -> float:
    """Smallest height t_star in (0, 1) where the lateral curve meets the cap circle.

    The gap g(t) = t**(2 alpha) + (2 - t)**2 - 2 is strictly convex with
    g(0) = 2 and g(1) = 0, so for alpha > 1 it has exactly one interior sign
    change.  Located by bisection and polished by Newton to 1e-12.
    """
    if spec.kind != "cusp":
        raise ValueError("cusp_cap_intersection requires a cusp domain")
    a = spec.alpha

    def gap(t):
        return _junction_gap(a, t)

    def dgap(t):
        return 2.0 * a * t ** (2.0 * a - 1.0) - 2.0 * (2.0 - t)

    # Interior minimizer of the convex gap: dgap is increasing, negative at 0+.
    lo, hi = 1e-300, 1.0
    if not dgap(hi) > 0.0:
        raise GeometryError("cusp/cap bracketing failed: gap not increasing at t=1")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if dgap(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    t_min = 0.5 * (lo + hi)
    if not gap(t_min) < 0.0:
        raise GeometryError("cusp/cap bracketing failed: no interior crossing")

    # Unique root in (0, t_min): gap(0) = 2 > 0 > gap(t_min).
    lo, hi = 0.0, t_min
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if gap(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    t = 0.5 * (lo + hi)
    for _ in range(3):
        d = dgap(t)
        if d == 0.0:
            break
        step = gap(t) / d
        t_new = t - step
        if not lo - 1e-9 <= t_new <= hi + 1e-9:
            break
        t = t_new
    if abs(gap(t)) > 1e-11:
        raise GeometryError(f"cusp/cap root polish failed, residual {gap(t):.3e}")
    return t


def cap_angle_range(spec: DomainSpec) -> tuple[float, float]:
    """Angle interval of the cap arc, counterclockwise from the right junction."""
    t_star = cusp_cap_intersection(spec)
    x_star = t_star ** spec.alpha
    theta_r = math.atan2(t_star - CAP_CENTER[1], x_star)
    return theta_r, math.pi - theta_r


def curve_point(spec: DomainSpec | None, tag: BoundaryTag, param: float) -> tuple[float, float]:
    """Exact boundary point for an arc tag and its parameter.

    Lateral arcs are parameterized by height t, circular arcs by angle.
    SEGMENT has no exact curve and must not be projected through here.
    """
    if tag is BoundaryTag.CUSP_LATERAL_RIGHT:
        return param ** spec.alpha, param
    if tag is BoundaryTag.CUSP_LATERAL_LEFT:
        return -(param ** spec.alpha), param
    if tag is BoundaryTag.CAP_ARC:
        return (CAP_CENTER[0] + CAP_RADIUS * math.cos(param),
                CAP_CENTER[1] + CAP_RADIUS * math.sin(param))
    if tag is BoundaryTag.DISK_CIRCLE:
        r = spec.disk_radius
        return r * math.cos(param), r * math.sin(param)
    raise ValueError(f"tag {tag} has no exact curve")


def weight_on_arc(spec: DomainSpec | None, tag: BoundaryTag, param) -> float | np.ndarray:
    """Boundary weight evaluated on the exact curve via (tag, parameter).

    Lateral arcs carry w = t**alpha (< 1 there); the cap arc, the validation
    circle and untagged segments carry w = 1.  Accepts scalar or array params.
    """
    if tag in (BoundaryTag.CUSP_LATERAL_RIGHT, BoundaryTag.CUSP_LATERAL_LEFT):
        return np.asarray(param, dtype=float) ** spec.alpha
    return np.ones_like(np.asarray(param, dtype=float))


_ON_BOUNDARY_TOL = 1e-10


def boundary_weight(spec: DomainSpec, point) -> float:
    """Weight at a point of the resolved boundary.

    The point must lie on one of the boundary arcs within 1e-10.  At the cusp
    tip itself the weight is 0; quadrature never samples there because Gauss
    points are interior to edges.
    """
    x, y = float(point[0]), float(point[1])
    if spec.kind == "disk":
        r = math.hypot(x, y)
        if abs(r - spec.disk_radius) > _ON_BOUNDARY_TOL:
            raise ValueError(f"point {point} not on the validation circle")
        return 1.0

    t_star = cusp_cap_intersection(spec)
    if -_ON_BOUNDARY_TOL <= y <= t_star + _ON_BOUNDARY_TOL:
        if abs(abs(x) - max(y, 0.0) ** spec.alpha) <= _ON_BOUNDARY_TOL:
            return max(y, 0.0) ** spec.alpha
    r = math.hypot(x - CAP_CENTER[0], y - CAP_CENTER[1])
    if abs(r - CAP_RADIUS) <= _ON_BOUNDARY_TOL and y >= t_star - _ON_BOUNDARY_TOL:
        return 1.0
    raise ValueError(f"point {point} does not lie on the resolved boundary")


@dataclass(frozen=True)
class BoundaryArc:
    """One smooth piece of the resolved boundary.

    parameter_range is (height interval) for lateral arcs and (angle
    interval) for circular ones; the pieces are pairwise non-overlapping and
    their closure covers the whole boundary.
    """

    tag: BoundaryTag
    parameter_range: tuple[float, float]
    arclength: float


def _lateral_arclength(spec: DomainSpec, t_hi: float, n: int = 2000) -> float:
    # composite Gauss-2 on the graded substitution t = t_hi * s**2, which
    # absorbs the integrand's derivative blowup at the tip for alpha < 2
    a = spec.alpha
    nodes = np.linspace(0.0, 1.0, n + 1)
    mid = 0.5 * (nodes[:-1] + nodes[1:])
    half = 0.5 / n / math.sqrt(3.0)
    total = 0.0
    for off in (-half, half):
        s = mid + off
        t = t_hi * s ** 2
        dt = 2.0 * t_hi * s / (2.0 * n)
        total += float(np.sum(np.sqrt(1.0 + (a * t ** (a - 1.0)) ** 2) * dt))
    return total


def boundary_arcs(spec: DomainSpec) -> list[BoundaryArc]:
    """Decomposition of the resolved boundary into tagged smooth arcs."""
    if spec.kind == "disk":
        r = spec.disk_radius
        return [BoundaryArc(BoundaryTag.DISK_CIRCLE, (0.0, 2.0 * math.pi),
                            2.0 * math.pi * r)]
    t_star = cusp_cap_intersection(spec)
    theta_r, theta_l = cap_angle_range(spec)
    lateral = _lateral_arclength(spec, t_star)
    cap = CAP_RADIUS * (theta_l - theta_r)
    return [
        BoundaryArc(BoundaryTag.CUSP_LATERAL_RIGHT, (0.0, t_star), lateral),
        BoundaryArc(BoundaryTag.CAP_ARC, (theta_r, theta_l), cap),
        BoundaryArc(BoundaryTag.CUSP_LATERAL_LEFT, (0.0, t_star), lateral),
    ]


@dataclass(frozen=True)
class PolygonEdge:
    """Directed polygon edge i -> j with its arc tag and curve parameters."""

    i: int
    j: int
    tag: BoundaryTag
    p0: float
    p1: float


@dataclass
class BoundaryPolygon:
    """Counterclockwise simple polygon approximating the domain boundary."""

    points: np.ndarray
    edges: list[PolygonEdge]
    spec: DomainSpec | None = None
    t_star: float | None = None
    _area: float | None = field(default=None, repr=False)

    @property
    def area(self) -> float:
        if self._area is None:
            self._area = polygon_area(self.points)
        return self._area


def polygon_area(points: np.ndarray) -> float:
    x, y = points[:, 0], points[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _segments_intersect(p, q, r, s) -> bool:
    # Proper or improper intersection of segments pq and rs.
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1 = orient(r, s, p)
    d2 = orient(r, s, q)
    d3 = orient(p, q, r)
    d4 = orient(p, q, s)
    if ((d1 > 0 > d2) or (d1 < 0 < d2)) and ((d3 > 0 > d4) or (d3 < 0 < d4)):
        return True

    def on_seg(a, b, c):
        return (min(a[0], b[0]) <= c[0] <= max(a[0], b[0])
                and min(a[1], b[1]) <= c[1] <= max(a[1], b[1]))

    if d1 == 0 and on_seg(r, s, p):
        return True
    if d2 == 0 and on_seg(r, s, q):
        return True
    if d3 == 0 and on_seg(p, q, r):
        return True
    if d4 == 0 and on_seg(p, q, s):
        return True
    return False


def check_simple(points: np.ndarray) -> None:
    """Raise GeometryError naming the offending pair if the polygon self-intersects.

    Bounding boxes are screened vectorized in chunks; only overlapping
    non-adjacent pairs get the exact segment test.
    """
    m = len(points)
    seg = np.stack([points, np.roll(points, -1, axis=0)], axis=1)
    lo = seg.min(axis=1)
    hi = seg.max(axis=1)
    chunk = max(1, min(m, 4_000_000 // max(m, 1)))
    for start in range(0, m, chunk):
        stop = min(start + chunk, m)
        rows = np.arange(start, stop)
        overlap = ~((lo[rows, None, 0] > hi[None, :, 0])
                    | (lo[None, :, 0] > hi[rows, None, 0])
                    | (lo[rows, None, 1] > hi[None, :, 1])
                    | (lo[None, :, 1] > hi[rows, None, 1]))
        a_idx, b_idx = np.nonzero(overlap)
        a_idx = a_idx + start
        keep = b_idx > a_idx + 1
        keep &= ~((a_idx == 0) & (b_idx == m - 1))
        for a, b in zip(a_idx[keep], b_idx[keep]):
            if _segments_intersect(seg[a, 0], seg[a, 1], seg[b, 0], seg[b, 1]):
                raise GeometryError(
                    f"polygon self-intersection between segments {a} and {b}")


def boundary_polygon(spec: DomainSpec, n_lateral: int = 32, n_arc: int = 64,
                     grading_q: float = 2.0) -> BoundaryPolygon:
    """Sample the resolved boundary into a counterclockwise simple polygon.

    The right lateral curve is sampled at t_i = t_star * (i / n_lateral)**grading_q,
    which clusters vertices at the tip where the weight degenerates; the cap arc
    is sampled uniformly in angle; the left lateral curve is the mirror image.
    The tip (0, 0) is always a polygon vertex.  For the validation disk the
    result is the regular n_arc-gon inscribed in the circle.
    """
    if n_lateral < 8:
        raise ValueError("n_lateral must be at least 8")
    if n_arc < 16:
        raise ValueError("n_arc must be at least 16")
    if grading_q < 1.0:
        raise ValueError("grading_q must be at least 1")

    if spec.kind == "disk":
        ang = 2.0 * math.pi * np.arange(n_arc) / n_arc
        pts = spec.disk_radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)
        edges = [PolygonEdge(i, (i + 1) % n_arc, BoundaryTag.DISK_CIRCLE,
                             float(ang[i]), float(ang[(i + 1) % n_arc]) if i + 1 < n_arc
                             else 2.0 * math.pi)
                 for i in range(n_arc)]
        return BoundaryPolygon(points=pts, edges=edges, spec=spec)

    t_star = cusp_cap_intersection(spec)
    theta_r, theta_l = cap_angle_range(spec)

    ts = t_star * (np.arange(n_lateral + 1) / n_lateral) ** grading_q  # ts[0] = 0 is the tip
    thetas = theta_r + (theta_l - theta_r) * np.arange(1, n_arc) / n_arc

    pts = []
    params = []
    tags = []
    for t in ts:
        pts.append((t ** spec.alpha if t > 0.0 else 0.0, t))
        params.append(float(t))
        tags.append(BoundaryTag.CUSP_LATERAL_RIGHT)
    for th in thetas:
        pts.append(curve_point(spec, BoundaryTag.CAP_ARC, float(th)))
        params.append(float(th))
        tags.append(BoundaryTag.CAP_ARC)
    for t in ts[::-1][:-1]:  # t_star down to the sample above the tip
        pts.append((-(t ** spec.alpha), t))
        params.append(float(t))
        tags.append(BoundaryTag.CUSP_LATERAL_LEFT)

    points = np.array(pts, dtype=float)
    m = len(points)
    edges = []
    for i in range(m):
        j = (i + 1) % m
        if tags[i] is BoundaryTag.CUSP_LATERAL_RIGHT and tags[j] is BoundaryTag.CAP_ARC:
            # junction vertex at t_star belongs to the lateral curve; the edge
            # leaving it is the first cap chord
            edges.append(PolygonEdge(i, j, BoundaryTag.CAP_ARC, theta_r, params[j]))
        elif tags[i] is BoundaryTag.CAP_ARC and tags[j] is BoundaryTag.CUSP_LATERAL_LEFT:
            edges.append(PolygonEdge(i, j, BoundaryTag.CAP_ARC, params[i], theta_l))
        elif tags[i] is BoundaryTag.CAP_ARC:
            edges.append(PolygonEdge(i, j, BoundaryTag.CAP_ARC, params[i], params[j]))
        elif tags[i] is BoundaryTag.CUSP_LATERAL_RIGHT:
            edges.append(PolygonEdge(i, j, BoundaryTag.CUSP_LATERAL_RIGHT, params[i], params[j]))
        else:
            edges.append(PolygonEdge(i, j, BoundaryTag.CUSP_LATERAL_LEFT, params[i], params[j]))

    # the closing edge (last left-lateral sample back to the tip)
    last = edges[-1]
    edges[-1] = PolygonEdge(last.i, 0, BoundaryTag.CUSP_LATERAL_LEFT, last.p0, 0.0)

    if polygon_area(points) <= 0.0:
        raise GeometryError("boundary polygon is not counterclockwise")
    check_simple(points)
    return BoundaryPolygon(points=points, edges=edges, spec=spec, t_star=t_star)


def polygon_from_points(points) -> BoundaryPolygon:
    """Wrap a raw counterclockwise point list (weight 1, straight segments)."""
    pts = np.asarray(points, dtype=float)
    m = len(pts)
    edges = [PolygonEdge(i, (i + 1) % m, BoundaryTag.SEGMENT, 0.0, 1.0) for i in range(m)]
    if polygon_area(pts) <= 0.0:
        raise GeometryError("polygon is not counterclockwise")
    check_simple(pts)
    return BoundaryPolygon(points=pts, edges=edges, spec=None)
