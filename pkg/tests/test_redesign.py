import math

import numpy as np
import pytest
from sklearn.base import clone

from blockforge.catalog import ValidationError, catalog_index
from blockforge.redesign import (
    Criterion,
    PerturbationRedesign,
    RedesignParams,
    needs_perturbation,
    perturb_block,
    redesign,
    sample_offsets,
)
from blockforge.statics import Scene, check_scene_stability, drop_settle, scene_from_plan

from .conftest import make_plan, place
from .oracles import closest_distance


def stack(catalog, *placements):
    index = catalog_index(catalog)
    scene = Scene()
    for p in placements:
        scene = drop_settle(scene, p, catalog=index)
    return scene


def expected_offsets():
    rows = []
    for k in range(10):
        r = 1 + k * (15 - 1) / 9
        for j in range(8):
            rows.append((r * math.cos(j * math.pi / 4), r * math.sin(j * math.pi / 4)))
    return np.array(rows + [(0.0, 0.0)])


def test_sample_offsets_are_eight_points_on_ten_circles():
    offsets = sample_offsets()
    assert offsets.shape == (81, 2)
    np.testing.assert_allclose(offsets, expected_offsets(), atol=1e-9)
    radii = np.unique(np.round(np.hypot(offsets[:-1, 0], offsets[:-1, 1]), 9))
    assert len(radii) == 10 and radii[0] == 1 and radii[-1] == 15


def test_sample_offsets_follow_parameters():
    offsets = sample_offsets(RedesignParams(circles=3, points_per_circle=4, radius_min_mm=2, radius_max_mm=6))
    assert offsets.shape == (13, 2)
    np.testing.assert_allclose(np.hypot(*offsets[:4].T), 2)
    np.testing.assert_allclose(np.hypot(*offsets[8:12].T), 6)


@pytest.mark.parametrize(
    "kwargs",
    [{"collision_threshold_mm": 0}, {"radius_min_mm": 20}, {"circles": 0}, {"points_per_circle": 2}, {"max_visits_per_block": 0}],
)
def test_bad_params_are_rejected(kwargs):
    with pytest.raises(ValueError):
        RedesignParams(**kwargs)


def test_two_mm_gap_flags_proximity(small_catalog):
    scene = stack(small_catalog, place("cube", 0, 0), place("cube", 42, 0))
    assert needs_perturbation(scene, 0) == {Criterion.PROXIMITY}


def test_gap_between_disjoint_heights_is_ignored(catalog):
    # a small cube on a pillar sits above the neighbouring cube's top face
    scene = stack(catalog, place("cube", 0, 0), place("pillar", 37, 0), place("small_cube", 32, 0))
    assert scene.blocks[2].bottom_z == 80
    assert Criterion.PROXIMITY not in needs_perturbation(scene, 2)


def test_stacked_blocks_are_not_too_close(small_catalog):
    scene = stack(small_catalog, place("cube", 0, 0), place("cube", 0, 0))
    assert needs_perturbation(scene, 1) == set()


def test_com_half_mm_from_margin_flags_nearby_instability(small_catalog):
    # offset 18.5: margin 1.5 mm, stable; every probe with dx > 0.5 cuts it below 1 mm
    scene = stack(small_catalog, place("cube", 0, 0), place("cube", 18.5, 0))
    assert check_scene_stability(scene).stable
    tipping = [o for o in expected_offsets() if 20 - (18.5 + o[0]) <= 1.0]
    assert tipping, "the probe set should reach past the margin"
    assert needs_perturbation(scene, 1) == {Criterion.NEARBY_INSTABILITY}


def test_centered_stack_has_slack(small_catalog):
    scene = stack(small_catalog, place("cube", 0, 0), place("cube", 4, 0))
    # worst probe: 4 + 15 = 19 leaves exactly 1 mm, which is not strictly inside the margin
    assert needs_perturbation(scene, 1) == {Criterion.NEARBY_INSTABILITY}
    scene = stack(small_catalog, place("cube", 0, 0), place("cube", 3, 0))
    assert needs_perturbation(scene, 1) == set()


def test_crowded_block_moves_away_by_feasible_mean(small_catalog):
    scene = stack(small_catalog, place("cube", 0, 0), place("cube", 42, 0))
    # gap to the neighbour is 2 - dx; feasible samples keep it at 5 mm or more
    feasible = [o for o in expected_offsets() if 2 - o[0] >= 5]
    expected = np.round(np.mean(feasible, axis=0), 3)
    new_xy, count = perturb_block(scene, 0)
    assert count == len(feasible)
    assert new_xy[0] < 0
    np.testing.assert_allclose(new_xy, expected, atol=1e-9)


def test_boxed_in_block_is_infeasible(small_catalog):
    scene = stack(small_catalog, place("cube", -42, 0), place("cube", 0, 0), place("cube", 42, 0))
    assert Criterion.PROXIMITY in needs_perturbation(scene, 1)
    assert perturb_block(scene, 1) == (None, 0)


def test_fixpoint_plan_is_returned_unchanged(small_catalog):
    plan = make_plan(small_catalog, place("cube", 0, 0), place("cube", 100, 0), place("cube", 0, 0))
    out, report = redesign(plan, small_catalog)
    assert out == plan
    assert report.converged and report.adjusted == [] and report.visits == [0, 0, 0]
    assert report.stability.stable


def test_columns_three_mm_apart_are_pushed_past_threshold(catalog):
    # cubes as wide as the plank, so a 15 mm sideways probe of the plank keeps its COM supported
    plan = make_plan(catalog, place("cube", -21.5, 0), place("cube", 21.5, 0), place("plank", 0, 0))
    out, report = redesign(plan, catalog)
    assert report.converged
    scene = scene_from_plan(out, catalog)
    assert closest_distance(scene.blocks[0], scene.blocks[1]) >= 5.0 - 1e-6
    assert scene.supports(2) == {0, 1}
    assert check_scene_stability(scene).stable
    assert {a.index for a in report.adjusted} <= {0, 1}


def test_redesign_keeps_identity_and_respects_visit_cap(designs, catalog):
    params = RedesignParams(max_visits_per_block=2)
    for plan in designs.values():
        out, report = redesign(plan, catalog, params)
        assert len(out.placements) == len(plan.placements)
        for a, b in zip(plan.placements, out.placements):
            assert (a.block_id, a.orientation, a.color) == (b.block_id, b.orientation, b.color)
        assert max(report.visits) <= 2
        assert report.n_perturbations <= 2 * len(plan.placements)
        assert len(report.adjusted) <= report.n_perturbations


def test_redesign_is_deterministic(designs, catalog):
    plan = designs["sofa"]
    a, ra = redesign(plan, catalog)
    b, rb = redesign(plan, catalog)
    assert a.to_json() == b.to_json()
    assert ra.to_json() == rb.to_json()


def test_redesigned_plan_is_a_fixpoint(designs, catalog):
    out, report = redesign(designs["sofa"], catalog)
    assert report.converged and report.adjusted
    again, second = redesign(out, catalog)
    assert again == out
    assert second.n_perturbations == 0 and second.converged


def test_estimator_api(designs, catalog):
    est = PerturbationRedesign(catalog, max_visits_per_block=3)
    assert est.get_params()["max_visits_per_block"] == 3
    twin = clone(est)
    assert twin.get_params() == est.get_params()
    out = est.fit().transform([designs["sofa"], designs["shark"]])
    assert len(out) == 2 and len(est.reports_) == 2
    single = clone(est).fit_transform(designs["sofa"])
    assert single[0] == out[0]


def test_estimator_rejects_foreign_blocks(small_catalog, catalog):
    plan = make_plan(catalog, place("pillar", 0, 0))
    with pytest.raises(ValidationError):
        PerturbationRedesign(small_catalog).fit().transform(plan)


def test_transform_before_fit_raises(catalog, designs):
    from sklearn.exceptions import NotFittedError

    with pytest.raises(NotFittedError):
        PerturbationRedesign(catalog).transform(designs["sofa"])
