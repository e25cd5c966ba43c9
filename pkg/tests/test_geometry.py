import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blockforge.catalog import BlockSpec, Orientation, Placement, Shape
from blockforge.geometry import (
    GROUND,
    PlacedBlock,
    contact_patch,
    footprint_depth,
    gravity_axis_overlap,
    in_collision,
    surface_distance,
)

from .oracles import closest_distance, disc_overlap_area, sampled_distance

CUBE = BlockSpec("cube", Shape.CUBOID, (40, 40, 40), 9)


def box(x, y, z, ex=40, ey=40, ez=40):
    spec = BlockSpec("b", Shape.CUBOID, (ex, ey, ez), 1)
    return PlacedBlock.create(spec, Placement("b", Orientation(), (x, y), "gray"), z)


def cyl(x, y, z, d=20, h=40):
    spec = BlockSpec("c", Shape.CYLINDER, (d, h), 1)
    return PlacedBlock.create(spec, Placement("c", Orientation("upright"), (x, y), "gray"), z)


def test_cubes_50_apart_are_10_apart():
    assert surface_distance(box(0, 0, 20), box(50, 0, 20)) == pytest.approx(10)


def test_coincident_cubes_touch():
    assert surface_distance(box(0, 0, 20), box(0, 0, 20)) == 0


def test_cube_to_disc_matches_dense_sampling():
    a, b = box(0, 0, 20), cyl(40, 0, 20)
    assert surface_distance(a, b) == pytest.approx(10)
    assert sampled_distance(a, b, step=1.0) == pytest.approx(10, abs=0.1)


@pytest.mark.parametrize(
    "z_a, z_b, expected",
    [((0, 40), (40, 80), True), ((0, 40), (41, 80), False), ((0, 40), (20, 60), True)],
)
def test_gravity_axis_overlap(z_a, z_b, expected):
    a = box(0, 0, (z_a[0] + z_a[1]) / 2, ez=z_a[1] - z_a[0])
    b = box(100, 0, (z_b[0] + z_b[1]) / 2, ez=z_b[1] - z_b[0])
    assert gravity_axis_overlap(a, b) is expected
    assert gravity_axis_overlap(b, a) is expected


def test_stacked_cubes_are_not_in_collision():
    assert not in_collision(box(0, 0, 20), box(0, 0, 60), tol=0.01)


def test_cubes_39_apart_collide():
    assert in_collision(box(0, 0, 20), box(39, 0, 20))


def test_discs_29_apart_collide_by_area_sampling():
    a, b = cyl(0, 0, 20, d=30), cyl(29, 0, 20, d=30)
    assert disc_overlap_area((0, 0), 15, (29, 0), 15) > 0
    assert in_collision(a, b)
    assert disc_overlap_area((0, 0), 15, (31, 0), 15) == 0
    assert not in_collision(a, cyl(31, 0, 20, d=30))


def test_contact_patch_offset_cube():
    patch = contact_patch(box(30, 0, 60), box(0, 0, 20), support_id=0)
    minx, miny, maxx, maxy = patch.polygon.bounds
    assert (minx, maxx, miny, maxy) == pytest.approx((10, 20, -20, 20))
    assert patch.support_id == 0


def test_floating_cube_has_no_patch():
    assert contact_patch(box(0, 0, 65), box(0, 0, 20), tol=0.5) is None


def test_cylinder_on_cube_patch_is_its_disc():
    patch = contact_patch(cyl(0, 0, 60, d=30), box(0, 0, 20))
    assert patch.area == pytest.approx(math.pi * 15**2, rel=2e-3)


def test_ground_patch():
    patch = contact_patch(box(0, 0, 20), None)
    assert patch.support_id == GROUND
    assert patch.area == pytest.approx(1600)
    assert contact_patch(box(0, 0, 60), None) is None


boxes = st.builds(
    box,
    st.floats(-60, 60),
    st.floats(-60, 60),
    st.floats(10, 80),
    st.floats(5, 60),
    st.floats(5, 60),
    st.floats(5, 60),
)
cyls = st.builds(cyl, st.floats(-60, 60), st.floats(-60, 60), st.floats(10, 80), st.floats(5, 60), st.floats(5, 60))


@settings(max_examples=150, deadline=None)
@given(boxes, boxes)
def test_box_distance_matches_closest_point_oracle(a, b):
    assert surface_distance(a, b) == pytest.approx(closest_distance(a, b), abs=0.1)


@settings(max_examples=100, deadline=None)
@given(st.one_of(boxes, cyls), cyls)
def test_disc_distance_matches_closest_point_oracle(a, b):
    assert surface_distance(a, b) == pytest.approx(closest_distance(a, b), abs=0.1)


@settings(max_examples=100, deadline=None)
@given(st.one_of(boxes, cyls), st.one_of(boxes, cyls))
def test_distance_symmetry_and_collision(a, b):
    d = surface_distance(a, b)
    assert d == surface_distance(b, a)
    assert d >= 0
    if in_collision(a, b, tol=0.0):
        assert d == 0


@settings(max_examples=100, deadline=None)
@given(st.one_of(boxes, cyls), st.one_of(boxes, cyls))
def test_patch_area_bounded_by_faces(upper, lower):
    upper = upper.at(upper.center_mm[0], upper.center_mm[1], lower.top_z + upper.extents_mm[2] / 2)
    patch = contact_patch(upper, lower)
    if patch is None:
        assert footprint_depth(upper, lower) <= 1e-6 or upper.footprint.intersection(lower.footprint).area < 1e-6
    else:
        assert patch.area <= min(upper.footprint.area, lower.footprint.area) + 1e-6
        hull = patch.polygon.convex_hull
        assert hull.area == pytest.approx(patch.polygon.area, abs=1e-6)
