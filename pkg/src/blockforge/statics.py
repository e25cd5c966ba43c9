"""Drop-settle placement and the quasi-static stability oracle.

Blocks are lowered at fixed (x, y) until they meet the highest top face under
their footprint, then frozen. A block is stable when the load it carries (its
own weight plus whatever rests on it, transitively) has its center of mass
strictly inside the convex hull of its contact patches, shrunk by a margin.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from shapely.geometry import Point
from shapely.ops import nearest_points, unary_union

from .catalog import AssemblyPlan, BlockSpec, Placement, WORKSPACE_HALF_MM, catalog_index
from .geometry import CONTACT_TOL_MM, GROUND, ContactPatch, PlacedBlock, contact_patch, footprint_depth


class DropError(Exception):
    pass


class OutOfWorkspace(DropError):
    pass


@dataclass(frozen=True)
class SimParams:
    density_kg_m3: float = 1000.0
    lateral_friction: float = 0.5  # carried for dynamic backends; unused here
    spinning_friction: float = 0.2  # carried for dynamic backends; unused here
    gravity_m_s2: float = -9.81
    pos_threshold_mm: float = 10.0
    rot_threshold_rad: float = 0.1
    com_margin_mm: float = 1.0
    contact_tol_mm: float = CONTACT_TOL_MM
    workspace_half_mm: float = WORKSPACE_HALF_MM

    def __post_init__(self):
        if not self.density_kg_m3 > 0:
            raise ValueError("density_kg_m3 must be positive")
        if not (self.pos_threshold_mm > 0 and self.rot_threshold_rad > 0):
            raise ValueError("thresholds must be positive")
        if self.com_margin_mm < 0 or self.contact_tol_mm < 0:
            raise ValueError("margins and tolerances must be non-negative")


@dataclass(frozen=True)
class Scene:
    """Settled blocks plus, per block, the contact patches it rests on."""

    blocks: tuple[PlacedBlock, ...] = ()
    patches: tuple[tuple[ContactPatch, ...], ...] = ()

    def __len__(self):
        return len(self.blocks)

    @property
    def support_graph(self) -> tuple[tuple[int, ...], ...]:
        return tuple(tuple(p.support_id for p in ps) for ps in self.patches)

    def supports(self, i: int) -> frozenset[int]:
        return frozenset(p.support_id for p in self.patches[i])

    @classmethod
    def build(cls, blocks: Sequence[PlacedBlock], params: SimParams = SimParams()) -> "Scene":
        blocks = tuple(blocks)
        return cls(blocks, tuple(_contacts(blocks, i, params) for i in range(len(blocks))))

    def replace(self, i: int, block: PlacedBlock, params: SimParams = SimParams()) -> "Scene":
        blocks = self.blocks[:i] + (block,) + self.blocks[i + 1 :]
        patches = list(self.patches)
        for k in range(len(blocks)):
            # only i's own contacts and contacts onto i can change
            if k == i or any(p.support_id == i for p in patches[k]) or (
                abs(blocks[k].bottom_z - block.top_z) <= params.contact_tol_mm
            ):
                patches[k] = _contacts(blocks, k, params)
        return Scene(blocks, tuple(patches))

    def without(self, indices, params: SimParams = SimParams()) -> "Scene":
        drop = set(indices)
        return Scene.build([b for k, b in enumerate(self.blocks) if k not in drop], params)

    def dependents(self, i: int) -> set[int]:
        """Blocks resting on ``i``, transitively, including ``i``."""
        out = {i}
        changed = True
        while changed:
            changed = False
            for k, ps in enumerate(self.patches):
                if k not in out and any(p.support_id in out for p in ps):
                    out.add(k)
                    changed = True
        return out

    def to_json(self) -> str:
        rows = []
        for k, b in enumerate(self.blocks):
            rows.append(
                {
                    "index": k,
                    "block_id": b.placement.block_id,
                    "kind": b.kind,
                    "center_mm": [round(c, 6) for c in b.center_mm],
                    "extents_mm": list(b.extents_mm),
                    "color": b.placement.color,
                    "supports": sorted(self.supports(k)),
                }
            )
        return json.dumps(rows, indent=2) + "\n"


def _contacts(blocks: Sequence[PlacedBlock], i: int, params: SimParams) -> tuple[ContactPatch, ...]:
    upper = blocks[i]
    out = []
    ground = contact_patch(upper, None, params.contact_tol_mm, params.workspace_half_mm)
    if ground is not None:
        out.append(ground)
    for k, lower in enumerate(blocks):
        if k == i:
            continue
        patch = contact_patch(upper, lower, params.contact_tol_mm, support_id=k)
        if patch is not None:
            out.append(patch)
    return tuple(out)


def resting_z(blocks: Sequence[PlacedBlock], new: PlacedBlock) -> float:
    """Center z of ``new`` after lowering it onto ``blocks``."""
    base = 0.0
    for b in blocks:
        if b.top_z > base and footprint_depth(b, new) > 1e-9:
            base = b.top_z
    return base + new.extents_mm[2] / 2


def _spec_for(catalog, block_id: str) -> BlockSpec:
    index = catalog if isinstance(catalog, Mapping) else catalog_index(catalog)
    return index[block_id]


def place_block(scene: Scene, block: PlacedBlock, params: SimParams = SimParams()) -> Scene:
    x, y, _ = block.center_mm
    w = params.workspace_half_mm
    if abs(x) > w or abs(y) > w:
        raise OutOfWorkspace(f"({x:g}, {y:g}) is outside the ±{w:g} mm workspace")
    settled = block.at(x, y, resting_z(scene.blocks, block))
    blocks = scene.blocks + (settled,)
    return Scene(blocks, scene.patches + (_contacts(blocks, len(blocks) - 1, params),))


def drop_settle(scene: Scene, p: Placement, params: SimParams = SimParams(), catalog=None) -> Scene:
    """Return a new scene with ``p`` dropped from above at its (x, y)."""
    spec = _spec_for(catalog, p.block_id)
    return place_block(scene, PlacedBlock.create(spec, p), params)


@dataclass
class BlockLoad:
    mass_kg: float
    com_xy: tuple[float, float]
    margin_mm: float  # signed distance of com_xy inside the support hull
    toward: tuple[float, float]  # unit vector from com toward the nearest hull boundary point


def block_loads(scene: Scene, params: SimParams = SimParams()) -> list[BlockLoad]:
    """Propagate loads top-down and measure each block's support margin.

    A block's accumulated load is split equally over its supports. The share
    handed to a support acts at the point of their contact patch nearest the
    load's center of mass, so a single support sees the exact combined COM.
    """
    n = len(scene.blocks)
    mass = [b.mass_kg(params.density_kg_m3) for b in scene.blocks]
    mx = [m * b.center_mm[0] for m, b in zip(mass, scene.blocks)]
    my = [m * b.center_mm[1] for m, b in zip(mass, scene.blocks)]
    order = sorted(range(n), key=lambda k: (-scene.blocks[k].bottom_z, k))
    loads: list[BlockLoad | None] = [None] * n
    for k in order:
        com = (mx[k] / mass[k], my[k] / mass[k])
        loads[k] = _margin(scene.patches[k], mass[k], com)
        patches = scene.patches[k]
        if not patches:
            continue
        share = mass[k] / len(patches)
        for patch in patches:
            if patch.support_id == GROUND:
                continue
            ax, ay = _clamp_into(patch.polygon, com)
            s = patch.support_id
            mass[s] += share
            mx[s] += share * ax
            my[s] += share * ay
    return loads


def _clamp_into(poly, xy):
    p = Point(xy)
    if poly.covers(p):
        return xy
    q = nearest_points(poly, p)[0]
    return (q.x, q.y)


def _margin(patches, mass, com) -> BlockLoad:
    if not patches:
        return BlockLoad(mass, com, -math.inf, (0.0, 0.0))
    hull = unary_union([p.polygon for p in patches]).convex_hull
    p = Point(com)
    boundary = hull.exterior
    q = nearest_points(boundary, p)[0]
    dist = p.distance(boundary)
    inside = hull.covers(p)
    signed = dist if inside else -dist
    dx, dy = q.x - com[0], q.y - com[1]
    norm = math.hypot(dx, dy)
    toward = (dx / norm, dy / norm) if norm > 1e-12 else (0.0, 0.0)
    return BlockLoad(mass, com, signed, toward)


@dataclass
class StabilityReport:
    stable: bool
    offender: int | None = None
    displacement_mm: list[float] = field(default_factory=list)
    diagnostic: str = ""
    direction: tuple[float, float] | None = None
    margins_mm: list[float] = field(default_factory=list)
    views: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "stable": self.stable,
            "offender": self.offender,
            "displacement_mm": [round(d, 6) for d in self.displacement_mm],
            "diagnostic": self.diagnostic,
            "direction": None if self.direction is None else [round(v, 6) for v in self.direction],
        }


def direction_label(v) -> str:
    if v is None or v == (0.0, 0.0):
        return "down"
    x, y = v
    if abs(x) >= abs(y):
        return "+x" if x > 0 else "-x"
    return "+y" if y > 0 else "-y"


def _report(scene: Scene, loads: list[BlockLoad], candidates, params: SimParams) -> StabilityReport:
    margin = params.com_margin_mm
    displacement = [max(margin - ld.margin_mm, 0.0) if math.isfinite(ld.margin_mm) else math.inf for ld in loads]
    margins = [ld.margin_mm for ld in loads]
    failing = [k for k in candidates if not loads[k].margin_mm > margin]
    if not failing:
        return StabilityReport(True, None, [0.0] * len(loads), "stable", None, margins)
    k = min(failing)
    ld = loads[k]
    if not scene.patches[k]:
        direction = (0.0, 0.0)
        cause = f"block {k} has no support"
    else:
        # falling direction: outward when the COM left the hull, else toward the near edge
        direction = (-ld.toward[0], -ld.toward[1]) if ld.margin_mm < 0 else ld.toward
        where = "outside" if ld.margin_mm < 0 else "within the margin of"
        cause = (
            f"COM {where} support polygon of block {k} "
            f"(margin {ld.margin_mm:.2f} mm), would tip toward {direction_label(direction)}"
        )
    return StabilityReport(False, k, displacement, cause, direction, margins)


def check_block_stability(scene: Scene, idx: int, params: SimParams = SimParams()) -> StabilityReport:
    if not -len(scene.blocks) <= idx < len(scene.blocks):
        raise IndexError(f"block index {idx} out of range for {len(scene.blocks)} blocks")
    idx %= len(scene.blocks)
    return _report(scene, block_loads(scene, params), [idx], params)


def check_scene_stability(scene: Scene, params: SimParams = SimParams()) -> StabilityReport:
    if not scene.blocks:
        return StabilityReport(True, diagnostic="empty scene")
    loads = block_loads(scene, params)
    return _report(scene, loads, range(len(scene.blocks)), params)


def settle_plan(
    plan: AssemblyPlan,
    catalog,
    params: SimParams = SimParams(),
    fail_fast: bool = False,
) -> tuple[Scene, list[StabilityReport]]:
    index = catalog if isinstance(catalog, Mapping) else catalog_index(catalog)
    scene = Scene()
    reports = []
    for p in plan.placements:
        scene = drop_settle(scene, p, params, index)
        report = check_scene_stability(scene, params)
        reports.append(report)
        if fail_fast and not report.stable:
            break
    return scene, reports


def scene_from_plan(plan: AssemblyPlan, catalog, params: SimParams = SimParams()) -> Scene:
    """Settled scene only, skipping per-step stability checks."""
    index = catalog if isinstance(catalog, Mapping) else catalog_index(catalog)
    scene = Scene()
    for p in plan.placements:
        scene = drop_settle(scene, p, params, index)
    return scene
