"""Perturbation-based redesign.

Blocks that sit too close to a neighbour, interpenetrate one, or become
unstable when nudged a little are moved to the mean of the nearby positions
that are stable, collision-free and clear of neighbours. Only (x, y) ever
changes; the loop runs block by block until nothing moves.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Mapping

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_catalog, check_plans
from .catalog import AssemblyPlan, catalog_index
from .geometry import PlacedBlock, gravity_axis_overlap, in_collision, surface_distance
from .statics import (
    Scene,
    SimParams,
    check_block_stability,
    check_scene_stability,
    resting_z,
    scene_from_plan,
    settle_plan,
)

COLLISION_TOL_MM = 0.01
XY_DECIMALS = 3


class Criterion(str, Enum):
    PROXIMITY = "proximity"
    COLLISION = "collision"
    NEARBY_INSTABILITY = "nearby_instability"


@dataclass(frozen=True)
class RedesignParams:
    collision_threshold_mm: float = 5.0
    circles: int = 10
    points_per_circle: int = 8
    radius_min_mm: float = 1.0
    radius_max_mm: float = 15.0
    max_visits_per_block: int = 10
    instability_probe_radius_mm: float | None = None

    def __post_init__(self):
        if self.instability_probe_radius_mm is None:
            object.__setattr__(self, "instability_probe_radius_mm", self.radius_max_mm)
        if not (self.collision_threshold_mm > 0 and self.radius_min_mm > 0 and self.instability_probe_radius_mm > 0):
            raise ValueError("thresholds and radii must be positive")
        if self.radius_min_mm > self.radius_max_mm:
            raise ValueError("radius_min_mm must not exceed radius_max_mm")
        if self.circles < 1 or self.points_per_circle < 3 or self.max_visits_per_block < 1:
            raise ValueError("need circles >= 1, points_per_circle >= 3, max_visits_per_block >= 1")


def sample_offsets(params: RedesignParams = RedesignParams()) -> np.ndarray:
    """Concentric-circle offsets, ring by ring from angle 0, then the origin last."""
    radii = np.linspace(params.radius_min_mm, params.radius_max_mm, params.circles)
    angles = 2 * np.pi * np.arange(params.points_per_circle) / params.points_per_circle
    ring = np.column_stack([np.cos(angles), np.sin(angles)])
    pts = (radii[:, None, None] * ring[None, :, :]).reshape(-1, 2)
    pts = np.round(pts, 12) + 0.0  # flush -0.0 and 1e-16 residue
    return np.vstack([pts, [[0.0, 0.0]]])


def probe_scene(scene: Scene, idx: int, xy, sim: SimParams = SimParams()) -> Scene:
    """Re-drop only block ``idx`` at ``xy`` onto the blocks placed before it; all others stay frozen."""
    block = scene.blocks[idx]
    z = resting_z(scene.blocks[:idx], block.at(xy[0], xy[1], 0.0))
    return scene.replace(idx, block.at(xy[0], xy[1], z), sim)


def _touching(scene: Scene, i: int, j: int) -> bool:
    return j in scene.supports(i) or i in scene.supports(j)


def _proximity_clear(scene: Scene, i: int, threshold: float) -> bool:
    a = scene.blocks[i]
    for j, b in enumerate(scene.blocks):
        if j == i or _touching(scene, i, j):
            continue
        if gravity_axis_overlap(a, b) and surface_distance(a, b) < threshold:
            return False
    return True


def _collision_free(scene: Scene, i: int) -> bool:
    a = scene.blocks[i]
    return not any(in_collision(a, b, COLLISION_TOL_MM) for j, b in enumerate(scene.blocks) if j != i)


def _in_workspace(xy, sim: SimParams) -> bool:
    return abs(xy[0]) <= sim.workspace_half_mm and abs(xy[1]) <= sim.workspace_half_mm


def needs_perturbation(
    scene: Scene,
    idx: int,
    params: RedesignParams = RedesignParams(),
    sim: SimParams = SimParams(),
) -> set[Criterion]:
    """Criteria violated by block ``idx``.

    Blocks in a direct support relation are exempt from the proximity test;
    a shared face would otherwise flag every stack. The nearby-instability
    probe judges only the probed block, with the load still resting on it.
    """
    out = set()
    if not _proximity_clear(scene, idx, params.collision_threshold_mm):
        out.add(Criterion.PROXIMITY)
    if not _collision_free(scene, idx):
        out.add(Criterion.COLLISION)
    nominal = np.asarray(scene.blocks[idx].center_mm[:2])
    for off in sample_offsets(params):
        if np.hypot(*off) > params.instability_probe_radius_mm + 1e-9:
            continue
        xy = nominal + off
        if not _in_workspace(xy, sim):
            continue
        if not check_block_stability(probe_scene(scene, idx, xy, sim), idx, sim).stable:
            out.add(Criterion.NEARBY_INSTABILITY)
            break
    return out


def feasible_positions(
    scene: Scene,
    idx: int,
    params: RedesignParams = RedesignParams(),
    sim: SimParams = SimParams(),
) -> np.ndarray:
    nominal = np.asarray(scene.blocks[idx].center_mm[:2])
    keep = []
    for off in sample_offsets(params):
        xy = nominal + off
        if not _in_workspace(xy, sim):
            continue
        probe = probe_scene(scene, idx, xy, sim)
        if not _collision_free(probe, idx):
            continue
        if not _proximity_clear(probe, idx, params.collision_threshold_mm):
            continue
        if not check_scene_stability(probe, sim).stable:
            continue
        keep.append(xy)
    return np.array(keep).reshape(-1, 2)


def perturb_block(
    scene: Scene,
    idx: int,
    params: RedesignParams = RedesignParams(),
    sim: SimParams = SimParams(),
) -> tuple[tuple[float, float] | None, int]:
    """Mean of the feasible sampled positions, or ``None`` when no sample is feasible."""
    pts = feasible_positions(scene, idx, params, sim)
    if len(pts) == 0:
        return None, 0
    mean = np.round(pts.mean(axis=0), XY_DECIMALS) + 0.0
    return (float(mean[0]), float(mean[1])), len(pts)


@dataclass
class Adjustment:
    index: int
    old_xy: tuple[float, float]
    new_xy: tuple[float, float]
    criteria: tuple[Criterion, ...]


@dataclass
class RedesignReport:
    adjusted: list[Adjustment] = field(default_factory=list)
    visits: list[int] = field(default_factory=list)
    converged: bool = False
    infeasible: list[int] = field(default_factory=list)
    passes: int = 0
    stability: object = None

    @property
    def n_perturbations(self) -> int:
        return sum(self.visits)

    def to_dict(self) -> dict:
        return {
            "adjusted": [
                {
                    "index": a.index,
                    "old_xy": list(a.old_xy),
                    "new_xy": list(a.new_xy),
                    "criteria": sorted(c.value for c in a.criteria),
                }
                for a in self.adjusted
            ],
            "visits": list(self.visits),
            "converged": self.converged,
            "infeasible": list(self.infeasible),
            "passes": self.passes,
            "stability": None if self.stability is None else self.stability.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def redesign(
    plan: AssemblyPlan,
    catalog,
    params: RedesignParams = RedesignParams(),
    sim: SimParams = SimParams(),
) -> tuple[AssemblyPlan, RedesignReport]:
    """Sweep blocks in placement order, perturbing flagged ones, until a pass moves nothing.

    A block stops being perturbed once it has been visited
    ``max_visits_per_block`` times. ``converged`` means the final pass found
    no block violating any criterion.
    """
    index = catalog if isinstance(catalog, Mapping) else catalog_index(catalog)
    placements = list(plan.placements)
    n = len(placements)
    report = RedesignReport(visits=[0] * n)
    infeasible = set()
    scene = scene_from_plan(plan, index, sim)
    while True:
        report.passes += 1
        moved = flagged = False
        for i in range(n):
            criteria = needs_perturbation(scene, i, params, sim)
            if not criteria:
                infeasible.discard(i)
                continue
            flagged = True
            if report.visits[i] >= params.max_visits_per_block:
                continue
            report.visits[i] += 1
            new_xy, _ = perturb_block(scene, i, params, sim)
            if new_xy is None:
                infeasible.add(i)
                continue
            infeasible.discard(i)
            old_xy = placements[i].xy_mm
            if new_xy == old_xy:
                continue
            placements[i] = placements[i].moved(new_xy)
            report.adjusted.append(Adjustment(i, old_xy, new_xy, tuple(sorted(criteria, key=lambda c: c.value))))
            scene = scene_from_plan(plan.with_placements(placements), index, sim)
            moved = True
        if not moved:
            report.converged = not flagged
            break
    out = plan.with_placements(placements)
    report.infeasible = sorted(infeasible)
    _, steps = settle_plan(out, index, sim)
    report.stability = steps[-1] if steps else check_scene_stability(Scene(), sim)
    return out, report


class PerturbationRedesign(TransformerMixin, BaseEstimator):
    """Estimator wrapper around :func:`redesign`.

    Parameters
    ----------
    catalog : list of BlockSpec or path
        Block inventory the plans draw from.
    collision_threshold_mm, circles, points_per_circle, radius_min_mm,
    radius_max_mm, max_visits_per_block, instability_probe_radius_mm
        See :class:`RedesignParams`.
    sim_params : SimParams, optional
        Stability oracle settings. Defaults to ``SimParams()``.

    Attributes
    ----------
    params_ : RedesignParams
    sim_ : SimParams
    catalog_ : dict of str to BlockSpec
    reports_ : list of RedesignReport
        One per plan from the most recent :meth:`transform`.
    """

    def __init__(
        self,
        catalog=None,
        *,
        collision_threshold_mm=5.0,
        circles=10,
        points_per_circle=8,
        radius_min_mm=1.0,
        radius_max_mm=15.0,
        max_visits_per_block=10,
        instability_probe_radius_mm=None,
        sim_params=None,
    ):
        self.catalog = catalog
        self.collision_threshold_mm = collision_threshold_mm
        self.circles = circles
        self.points_per_circle = points_per_circle
        self.radius_min_mm = radius_min_mm
        self.radius_max_mm = radius_max_mm
        self.max_visits_per_block = max_visits_per_block
        self.instability_probe_radius_mm = instability_probe_radius_mm
        self.sim_params = sim_params

    def fit(self, X=None, y=None):
        self.catalog_ = catalog_index(check_catalog(self.catalog))
        self.params_ = RedesignParams(
            collision_threshold_mm=self.collision_threshold_mm,
            circles=self.circles,
            points_per_circle=self.points_per_circle,
            radius_min_mm=self.radius_min_mm,
            radius_max_mm=self.radius_max_mm,
            max_visits_per_block=self.max_visits_per_block,
            instability_probe_radius_mm=self.instability_probe_radius_mm,
        )
        self.sim_ = self.sim_params if self.sim_params is not None else SimParams()
        if X is not None:
            check_plans(X, list(self.catalog_.values()), self.sim_.workspace_half_mm)
        return self

    def transform(self, X):
        check_is_fitted(self, "params_")
        plans = check_plans(X, list(self.catalog_.values()), self.sim_.workspace_half_mm)
        out, self.reports_ = [], []
        for plan in plans:
            new, report = redesign(plan, self.catalog_, self.params_, self.sim_)
            out.append(new)
            self.reports_.append(report)
        return out

    def get_feature_names_out(self, input_features=None):
        return np.array(["plan"], dtype=object)


def params_dict(params: RedesignParams) -> dict:
    return asdict(params)
