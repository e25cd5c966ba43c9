import json
from collections import Counter

import pytest
from hypothesis import given
from hypothesis import strategies as st

from blockforge.catalog import (
    CUBOID_PERMS,
    AssemblyPlan,
    BlockSpec,
    CylinderPose,
    InvalidOrientation,
    Orientation,
    ParseError,
    Placement,
    Shape,
    ValidationError,
    catalog_hash,
    effective_dims,
    load_catalog,
    load_plan,
    orientation_from_dims,
    parse_catalog,
    save_catalog,
    save_plan,
    validate_plan,
)

from .conftest import make_plan, place


def test_cuboid_permutation_puts_height_on_x():
    spec = BlockSpec("b", Shape.CUBOID, (20, 40, 60), 1)
    assert effective_dims(spec, Orientation((2, 0, 1))) == (60, 20, 40)


def test_cylinder_poses():
    spec = BlockSpec("c", Shape.CYLINDER, (30, 50), 1)
    assert effective_dims(spec, Orientation("upright")) == (30, 30, 50)
    assert effective_dims(spec, Orientation("lying_x")) == (50, 30, 30)
    assert effective_dims(spec, Orientation("lying_y")) == (30, 50, 30)


def test_shape_orientation_mismatch_raises():
    box = BlockSpec("b", Shape.CUBOID, (20, 40, 60), 1)
    cyl = BlockSpec("c", Shape.CYLINDER, (30, 50), 1)
    with pytest.raises(InvalidOrientation):
        effective_dims(box, Orientation(CylinderPose.UPRIGHT))
    with pytest.raises(InvalidOrientation):
        effective_dims(cyl, Orientation((0, 1, 2)))
    with pytest.raises(InvalidOrientation):
        Orientation((0, 0, 1))


@pytest.mark.parametrize("perm", CUBOID_PERMS)
def test_perm_then_inverse_restores_dims(perm):
    spec = BlockSpec("b", Shape.CUBOID, (11, 22, 33), 1)
    o = Orientation(perm)
    placed = effective_dims(spec, o)
    assert tuple(placed[a] for a in o.inverse().perm) == spec.dims_mm


def test_six_perms_give_six_distinct_extents():
    spec = BlockSpec("b", Shape.CUBOID, (11, 22, 33), 1)
    assert len({effective_dims(spec, Orientation(p)) for p in CUBOID_PERMS}) == 6


def test_orientation_from_dims_prefers_identity_for_cubes():
    cube = BlockSpec("cube", Shape.CUBOID, (40, 40, 40), 1)
    assert orientation_from_dims(cube, [40, 40, 40]).perm == (0, 1, 2)
    brick = BlockSpec("brick", Shape.CUBOID, (80, 40, 20), 1)
    assert effective_dims(brick, orientation_from_dims(brick, [20, 80, 40])) == (20, 80, 40)
    with pytest.raises(InvalidOrientation):
        orientation_from_dims(brick, [80, 40, 21])


def test_blockspec_rejects_bad_dims():
    with pytest.raises(ValidationError):
        BlockSpec("b", Shape.CUBOID, (10, 10), 1)
    with pytest.raises(ValidationError):
        BlockSpec("b", Shape.CUBOID, (10, -1, 10), 1)
    with pytest.raises(ValidationError):
        BlockSpec("b", Shape.CYLINDER, (10, 10), -2)


def test_catalog_round_trip(tmp_path, catalog):
    save_catalog(catalog, tmp_path / "c.json")
    assert load_catalog(tmp_path / "c.json") == catalog


def test_catalog_accepts_bare_array_and_checks_version():
    items = [{"id": "cube", "shape": "cuboid", "dims_mm": [40, 40, 40], "count": 2}]
    assert parse_catalog(json.dumps(items))[0].count == 2
    with pytest.raises(ParseError):
        parse_catalog(json.dumps({"schema_version": 99, "blocks": items}))
    with pytest.raises(ValidationError):
        parse_catalog(json.dumps(items + items))
    with pytest.raises(ParseError):
        parse_catalog("{nope")


def test_catalog_hash_is_content_based(catalog):
    assert catalog_hash(catalog) == catalog_hash(list(catalog))
    bumped = [BlockSpec(s.id, s.shape, s.dims_mm, s.count + 1) for s in catalog]
    assert catalog_hash(bumped) != catalog_hash(catalog)


def test_plan_round_trip(tmp_path, catalog):
    plan = make_plan(catalog, place("cube", 0, 0), Placement("cylinder", Orientation("lying_x"), (10.5, -3), "red"))
    save_plan(plan, tmp_path / "p.json")
    again = load_plan(tmp_path / "p.json")
    assert again == plan
    assert again.digest() == plan.digest()
    assert json.loads(plan.to_json())["schema_version"] == 1


def test_validate_plan_flags_each_kind(catalog):
    plan = make_plan(
        catalog,
        place("unobtainium", 0, 0),
        place("disc", 0, 0),  # cuboid permutation on a cylinder
        place("cube", 250, 0),
        place("slab", 0, 0),
        place("slab", 0, 0),
        place("slab", 0, 0),
        place("slab", 0, 0),
    )
    report = validate_plan(plan, catalog)
    assert report.kinds() == {"unavailable block", "invalid orientation", "out of workspace", "count exceeded"}
    assert not report.ok


def test_under_use_is_legal(catalog):
    assert validate_plan(make_plan(catalog, place("cube", 0, 0)), catalog).ok


@given(st.lists(st.sampled_from(["cube", "small_cube", "brick", "plank", "slab", "pillar"]), max_size=20))
def test_ok_implies_usage_within_counts(ids):
    from blockforge.cli import bundled_catalog

    catalog = load_catalog(bundled_catalog())
    plan = AssemblyPlan("p", tuple(place(i, 0, 0) for i in ids), catalog_hash(catalog))
    counts = {s.id: s.count for s in catalog}
    used = Counter(ids)
    recount_ok = all(used[i] <= counts[i] for i in used)
    assert validate_plan(plan, catalog).ok == recount_ok
