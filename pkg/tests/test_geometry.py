import math

import numpy as np
import pytest

from steklov_cusp import (BoundaryTag, DomainSpec, GeometryError, boundary_polygon,
                          boundary_weight, cusp_cap_intersection, cusp_halfwidth,
                          polygon_from_points)
from steklov_cusp.geometry import cap_angle_range, polygon_area

from helpers import exact_cusp_area, junction_height, shoelace


def test_halfwidth_direct_substitution():
    assert cusp_halfwidth(DomainSpec.cusp(2.0), 0.5) == pytest.approx(0.25, abs=1e-15)
    assert cusp_halfwidth(DomainSpec.cusp(1.5), 0.81) == pytest.approx(0.729, abs=1e-12)


def test_halfwidth_domain_errors():
    spec = DomainSpec.cusp(2.0)
    with pytest.raises(ValueError):
        cusp_halfwidth(spec, 0.0)
    with pytest.raises(ValueError):
        cusp_halfwidth(spec, 1.5)
    with pytest.raises(ValueError):
        DomainSpec.cusp(1.0)  # exponent must exceed 1


def test_junction_large_alpha_closed_form():
    # as alpha grows the lateral term dies and the junction solves (2-t)^2 = 2
    t = cusp_cap_intersection(DomainSpec.cusp(200.0))
    assert t == pytest.approx(2.0 - math.sqrt(2.0), abs=1e-12)


def test_junction_sign_change_oracle():
    spec = DomainSpec.cusp(1.5)
    t = cusp_cap_intersection(spec)

    def gap(s):
        return s ** 3.0 + (2.0 - s) ** 2 - 2.0

    assert gap(0.5) > 0.0 > gap(0.9)
    assert 0.5 < t < 0.9
    assert abs(gap(t)) < 1e-11
    assert t == pytest.approx(junction_height(1.5), abs=1e-10)


@pytest.mark.parametrize("alpha", [1.25, 1.5, 2.0, 2.5, 3.0])
def test_junction_is_first_crossing(alpha):
    spec = DomainSpec.cusp(alpha)
    t = cusp_cap_intersection(spec)
    for s in np.linspace(1e-6, t * 0.999, 37):
        assert s ** (2 * alpha) + (2.0 - s) ** 2 - 2.0 > 0.0


def test_boundary_weight_on_lateral():
    spec = DomainSpec.cusp(2.0)
    assert boundary_weight(spec, (0.25, 0.5)) == pytest.approx(0.25, abs=1e-12)
    assert boundary_weight(spec, (-0.25, 0.5)) == pytest.approx(0.25, abs=1e-12)


def test_boundary_weight_on_cap_is_one():
    for alpha in (1.5, 2.0, 3.0):
        spec = DomainSpec.cusp(alpha)
        assert boundary_weight(spec, (0.0, 2.0 + math.sqrt(2.0))) == 1.0


def test_boundary_weight_at_junction():
    spec = DomainSpec.cusp(1.5)
    t = cusp_cap_intersection(spec)
    w = boundary_weight(spec, (t ** 1.5, t))
    assert w == pytest.approx(t ** 1.5, abs=1e-12)
    assert w < 1.0


def test_boundary_weight_off_boundary_raises():
    spec = DomainSpec.cusp(2.0)
    with pytest.raises(ValueError):
        boundary_weight(spec, (0.5, 0.5))
    with pytest.raises(ValueError):
        boundary_weight(DomainSpec.disk(1.0), (0.5, 0.5))


def test_weight_jump_at_junction_convention():
    # the lateral side approaches t_star^alpha while the cap side carries 1;
    # the implemented convention is the jump, asserted here explicitly
    spec = DomainSpec.cusp(2.5)
    t = cusp_cap_intersection(spec)
    lateral = boundary_weight(spec, (t ** 2.5, t))
    cap_pt = (math.sqrt(2.0) * math.cos(cap_angle_range(spec)[0] + 1e-3),)
    theta = cap_angle_range(spec)[0] + 1e-3
    cap = boundary_weight(spec, (math.sqrt(2.0) * math.cos(theta),
                                 2.0 + math.sqrt(2.0) * math.sin(theta)))
    assert lateral < 1.0 and cap == 1.0


def test_disk_polygon_is_regular_gon():
    poly = boundary_polygon(DomainSpec.disk(1.0), n_arc=64)
    assert len(poly.points) == 64
    ang = 2.0 * np.pi * np.arange(64) / 64
    assert np.allclose(poly.points, np.stack([np.cos(ang), np.sin(ang)], axis=1),
                       atol=1e-15)


def test_cusp_polygon_grading_samples():
    spec = DomainSpec.cusp(2.0)
    poly = boundary_polygon(spec, n_lateral=16, n_arc=32, grading_q=2.0)
    t_star = cusp_cap_intersection(spec)
    ts = poly.points[:17, 1]  # tip plus right lateral samples
    expect = t_star * (np.arange(17) / 16.0) ** 2
    assert np.allclose(ts, expect, atol=1e-15)
    assert np.all(np.diff(ts) > 0.0)
    assert poly.points[0, 0] == 0.0 and poly.points[0, 1] == 0.0


def test_polygon_vertex_count_and_orientation():
    poly = boundary_polygon(DomainSpec.cusp(1.5), n_lateral=12, n_arc=24)
    assert len(poly.points) == 2 * 12 + 24
    assert polygon_area(poly.points) > 0.0


@pytest.mark.parametrize("alpha", [1.5, 2.0, 2.5])
def test_polygon_area_converges_to_exact(alpha):
    spec = DomainSpec.cusp(alpha)
    exact = exact_cusp_area(alpha)
    errs = []
    for n in (24, 48, 96):
        poly = boundary_polygon(spec, n_lateral=n, n_arc=2 * n, grading_q=2.0)
        errs.append(abs(shoelace(poly.points) - exact))
    # the cap-arc chord deficit dominates: about r^2 sweep theta^2 / 12
    assert errs[-1] < 2e-3
    # O(n^-2): quadrupling the resolution cuts the error by about 16
    assert errs[0] / errs[-1] > 12.0


def test_polygon_preconditions():
    spec = DomainSpec.cusp(2.0)
    with pytest.raises(ValueError):
        boundary_polygon(spec, n_lateral=4)
    with pytest.raises(ValueError):
        boundary_polygon(spec, n_arc=8)
    with pytest.raises(ValueError):
        boundary_polygon(spec, grading_q=0.5)


def test_self_intersection_detection():
    with pytest.raises(GeometryError):
        polygon_from_points([(0, 0), (1, 1), (1, 0), (0, 1)])


def test_boundary_arcs_cover_and_lengths():
    from steklov_cusp.geometry import boundary_arcs
    from helpers import adaptive_simpson
    spec = DomainSpec.cusp(1.5)
    arcs = boundary_arcs(spec)
    assert [a.tag for a in arcs] == [BoundaryTag.CUSP_LATERAL_RIGHT,
                                     BoundaryTag.CAP_ARC,
                                     BoundaryTag.CUSP_LATERAL_LEFT]
    t_star = junction_height(1.5)
    assert arcs[0].parameter_range == pytest.approx((0.0, t_star), abs=1e-10)
    lateral_oracle = adaptive_simpson(
        lambda t: math.sqrt(1.0 + (1.5 * t ** 0.5) ** 2), 0.0, t_star, 1e-12)
    assert arcs[0].arclength == pytest.approx(lateral_oracle, rel=1e-8)
    x_star = t_star ** 1.5
    cap_oracle = math.sqrt(2.0) * (2.0 * math.pi - 2.0 * math.asin(x_star / math.sqrt(2.0)))
    assert arcs[1].arclength == pytest.approx(cap_oracle, rel=1e-10)
    disk_arcs = boundary_arcs(DomainSpec.disk(2.0))
    assert disk_arcs[0].arclength == pytest.approx(4.0 * math.pi, rel=1e-14)


def test_weight_range_on_polygon_edges():
    spec = DomainSpec.cusp(1.5)
    poly = boundary_polygon(spec, n_lateral=16, n_arc=32)
    for e in poly.edges:
        if e.tag in (BoundaryTag.CUSP_LATERAL_LEFT, BoundaryTag.CUSP_LATERAL_RIGHT):
            hi = max(e.p0, e.p1)
            assert 0.0 < hi ** spec.alpha < 1.0
