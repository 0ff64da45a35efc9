import math

import numpy as np
import pytest

from geometry import (
    TWO_PI,
    DiskDomain,
    GeometryError,
    LatticeEmbedding,
    StripDomain,
    contains,
    contains_many,
    domain_from_dict,
    domain_label,
    domain_to_dict,
    exit_record,
    is_admissible_spacing,
    origin_clearance,
    project,
    project_many,
    scaled_to_lattice,
    wrap_angle,
)
from harmonic import strip_parameter


def test_domains_must_contain_the_origin():
    with pytest.raises(GeometryError):
        DiskDomain(center_x=2.0, center_y=0.0, radius=1.0)
    with pytest.raises(GeometryError):
        DiskDomain(center_x=0.0, center_y=0.0, radius=0.0)
    with pytest.raises(GeometryError):
        StripDomain(top=0.5, bottom=0.1)


def test_contains_is_strict(d1, d2):
    assert contains(d1, (0.0, 0.0))
    assert not contains(d1, (1.3, -0.25))
    assert contains(d2, (100.0, 0.59))
    assert not contains(d2, (0.0, 0.6))
    assert not contains(d2, (0.0, -0.4))


def test_contains_many_matches_scalar_form(d1):
    rng = np.random.default_rng(3)
    x = rng.uniform(-1.5, 1.5, size=200)
    y = rng.uniform(-1.5, 1.5, size=200)

    vectorized = contains_many(d1, x, y)
    assert vectorized.tolist() == [contains(d1, (a, b)) for a, b in zip(x, y)]


def test_origin_clearance_and_admissible_spacing(d1, d2):
    assert origin_clearance(d1) == pytest.approx(1.0 - math.hypot(0.3, 0.25))
    assert origin_clearance(d2) == pytest.approx(0.4)
    assert is_admissible_spacing(d2, 0.005)
    assert not is_admissible_spacing(d2, 0.5)
    assert not is_admissible_spacing(d1, 0.0)


def test_scaled_to_lattice_reports_lattice_units(d1, d2):
    disk = scaled_to_lattice(d1, 0.005)
    strip = scaled_to_lattice(d2, 0.005)

    assert (disk.center_x, disk.center_y, disk.radius) == pytest.approx((60.0, -50.0, 200.0))
    assert strip.width == pytest.approx(200.0)
    assert strip.top == pytest.approx(120.0)


def test_lattice_embedding_rotates_sites():
    embedding = LatticeEmbedding(spacing=0.5, rotation=math.pi / 2)

    x, y = embedding.to_plane(1, 0)
    assert x == pytest.approx(0.0, abs=1e-15)
    assert y == pytest.approx(0.5)

    with pytest.raises(GeometryError):
        LatticeEmbedding(spacing=-1.0)


def test_wrap_angle_stays_in_half_open_interval():
    assert wrap_angle(TWO_PI) == 0.0
    assert wrap_angle(-0.1) == pytest.approx(TWO_PI - 0.1)
    assert 0.0 <= wrap_angle(-1e-18) < TWO_PI


def test_disk_projection_is_radial_from_centre(d1):
    boundary, theta, side = project(d1, (1.8, -0.25))
    assert boundary == pytest.approx((1.3, -0.25))
    assert theta == pytest.approx(0.0)
    assert side == "circle"

    boundary, theta, _ = project(d1, (0.3, -1.75))
    assert boundary == pytest.approx((0.3, -1.25))
    assert theta == pytest.approx(1.5 * math.pi)


def test_strip_projection_picks_nearest_line(d2):
    boundary, theta, side = project(d2, (0.25, 0.65))
    assert side == "top"
    assert boundary == (0.25, 0.6)
    assert theta == pytest.approx(strip_parameter(d2, "top", 0.25))

    _, _, side = project(d2, (-3.0, -0.41))
    assert side == "bottom"


def test_projecting_an_interior_point_fails(d1):
    with pytest.raises(GeometryError):
        project(d1, (0.0, 0.0))


def test_project_many_matches_project(d1, d2):
    points = [(1.5, 0.2), (-0.8, -0.9), (0.31, 0.8), (-0.7, 0.1), (0.2, 0.7), (-1.0, -0.5), (2.5, 0.61)]
    for domain in (d1, d2):
        outside = [p for p in points if not contains(domain, p)]
        assert len(outside) >= 3
        x = np.array([p[0] for p in outside])
        y = np.array([p[1] for p in outside])
        theta, side = project_many(domain, x, y)
        for index, point in enumerate(outside):
            _, expected_theta, expected_side = project(domain, point)
            assert theta[index] == pytest.approx(expected_theta, abs=1e-12)
            assert side[index] == expected_side


def test_exit_record_keeps_raw_location(d2):
    record = exit_record(d2, (1.0, -0.45), steps=17)

    assert record.outside_point == (1.0, -0.45)
    assert record.boundary_point == (1.0, -0.4)
    assert record.side == "bottom"
    assert record.steps == 17
    assert 0.0 <= record.theta < TWO_PI


def test_domain_dict_round_trip_and_errors(d1, d2):
    assert domain_from_dict(domain_to_dict(d1)) == d1
    assert domain_from_dict(domain_to_dict(d2)) == d2
    assert domain_label(d2) == "strip(top=0.6,bottom=-0.4)"

    with pytest.raises(GeometryError):
        domain_from_dict({"kind": "annulus"})
    with pytest.raises(GeometryError):
        domain_from_dict({"kind": "disk", "center_x": 0.0, "center_y": 0.0})
    with pytest.raises(GeometryError):
        domain_from_dict({"kind": "strip", "top": "high", "bottom": -1})
