"""Axis-aligned primitives for placed blocks.

Every block is a vertical prism: a 2D footprint (rectangle, or disc for an
upright cylinder) swept over a z-interval. Lying cylinders use their
rectangular shadow. Distances between two prisms factor into an in-plane
part and a vertical part, which keeps everything closed-form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

from shapely import box as _box
from shapely.geometry import Point, Polygon

from .catalog import BlockSpec, CylinderPose, Placement, Shape, WORKSPACE_HALF_MM, effective_dims

GROUND = -1
CONTACT_TOL_MM = 0.5
DISC_SEGMENTS = 16  # per quarter circle

_CYL_KIND = {CylinderPose.UPRIGHT: "cyl_z", CylinderPose.LYING_X: "cyl_x", CylinderPose.LYING_Y: "cyl_y"}


@dataclass(frozen=True)
class PlacedBlock:
    placement: Placement
    extents_mm: tuple[float, float, float]
    center_mm: tuple[float, float, float]
    kind: str = "box"  # box | cyl_z | cyl_x | cyl_y (cylinder axis direction)
    volume_mm3: float = 0.0

    @classmethod
    def create(cls, spec: BlockSpec, placement: Placement, z_center: float | None = None):
        ext = effective_dims(spec, placement.orientation)
        z = ext[2] / 2 if z_center is None else z_center
        kind = "box"
        if spec.shape is Shape.CYLINDER:
            kind = _CYL_KIND[placement.orientation.perm]
        x, y = placement.xy_mm
        return cls(placement, ext, (x, y, z), kind, spec.volume_mm3)

    def at(self, x: float, y: float, z: float) -> "PlacedBlock":
        return PlacedBlock(self.placement.moved((x, y)), self.extents_mm, (x, y, z), self.kind, self.volume_mm3)

    @property
    def disc(self) -> bool:
        """Footprint is a disc (upright cylinder)."""
        return self.kind == "cyl_z"

    @property
    def bottom_z(self) -> float:
        return self.center_mm[2] - self.extents_mm[2] / 2

    @property
    def top_z(self) -> float:
        return self.center_mm[2] + self.extents_mm[2] / 2

    @property
    def radius(self) -> float:
        return self.extents_mm[0] / 2

    @cached_property
    def footprint(self) -> Polygon:
        x, y, _ = self.center_mm
        if self.disc:
            return Point(x, y).buffer(self.radius, quad_segs=DISC_SEGMENTS)
        hx, hy = self.extents_mm[0] / 2, self.extents_mm[1] / 2
        return _box(x - hx, y - hy, x + hx, y + hy)

    def mass_kg(self, density_kg_m3: float) -> float:
        return density_kg_m3 * self.volume_mm3 * 1e-9


@dataclass(frozen=True)
class ContactPatch:
    polygon: Polygon
    support_id: int | None

    @property
    def area(self) -> float:
        return self.polygon.area


def _point_rect_distance(px, py, cx, cy, hx, hy) -> float:
    dx = max(abs(px - cx) - hx, 0.0)
    dy = max(abs(py - cy) - hy, 0.0)
    return math.hypot(dx, dy)


def footprint_gap(a: PlacedBlock, b: PlacedBlock) -> float:
    """In-plane distance between footprints; 0 when they touch or overlap."""
    ax, ay, _ = a.center_mm
    bx, by, _ = b.center_mm
    if a.disc and b.disc:
        return max(math.hypot(ax - bx, ay - by) - (a.radius + b.radius), 0.0)
    if a.disc or b.disc:
        d, r = (a, b) if a.disc else (b, a)
        dx, dy, _ = d.center_mm
        rx, ry, _ = r.center_mm
        dist = _point_rect_distance(dx, dy, rx, ry, r.extents_mm[0] / 2, r.extents_mm[1] / 2)
        return max(dist - d.radius, 0.0)
    gx = max(abs(ax - bx) - (a.extents_mm[0] + b.extents_mm[0]) / 2, 0.0)
    gy = max(abs(ay - by) - (a.extents_mm[1] + b.extents_mm[1]) / 2, 0.0)
    return math.hypot(gx, gy)


def footprint_depth(a: PlacedBlock, b: PlacedBlock) -> float:
    """Signed in-plane penetration depth; positive iff the footprint interiors overlap."""
    ax, ay, _ = a.center_mm
    bx, by, _ = b.center_mm
    if a.disc and b.disc:
        return a.radius + b.radius - math.hypot(ax - bx, ay - by)
    if a.disc or b.disc:
        d, r = (a, b) if a.disc else (b, a)
        dx, dy, _ = d.center_mm
        rx, ry, _ = r.center_mm
        hx, hy = r.extents_mm[0] / 2, r.extents_mm[1] / 2
        if abs(dx - rx) <= hx and abs(dy - ry) <= hy:
            return d.radius + min(hx - abs(dx - rx), hy - abs(dy - ry))
        return d.radius - _point_rect_distance(dx, dy, rx, ry, hx, hy)
    return min(
        (a.extents_mm[0] + b.extents_mm[0]) / 2 - abs(ax - bx),
        (a.extents_mm[1] + b.extents_mm[1]) / 2 - abs(ay - by),
    )


def _z_overlap(a: PlacedBlock, b: PlacedBlock) -> float:
    return (a.extents_mm[2] + b.extents_mm[2]) / 2 - abs(a.center_mm[2] - b.center_mm[2])


def surface_distance(a: PlacedBlock, b: PlacedBlock) -> float:
    gz = max(-_z_overlap(a, b), 0.0)
    return math.hypot(footprint_gap(a, b), gz)


def gravity_axis_overlap(a: PlacedBlock, b: PlacedBlock) -> bool:
    """True iff the closed z-intervals intersect (a shared face counts)."""
    return a.bottom_z <= b.top_z and b.bottom_z <= a.top_z


def penetration_depth(a: PlacedBlock, b: PlacedBlock) -> float:
    return min(footprint_depth(a, b), _z_overlap(a, b))


def in_collision(a: PlacedBlock, b: PlacedBlock, tol: float = 0.01) -> bool:
    return penetration_depth(a, b) > tol


def contact_patch(
    upper: PlacedBlock,
    lower: PlacedBlock | None,
    tol: float = CONTACT_TOL_MM,
    workspace_half_mm: float = WORKSPACE_HALF_MM,
    support_id: int | None = None,
) -> ContactPatch | None:
    """Region where ``upper``'s bottom face meets ``lower``'s top face.

    ``lower=None`` is the ground plane, bounded by the workspace square.
    """
    if lower is None:
        if abs(upper.bottom_z) > tol:
            return None
        w = workspace_half_mm
        poly = upper.footprint.intersection(_box(-w, -w, w, w))
        sid = GROUND
    else:
        if abs(upper.bottom_z - lower.top_z) > tol:
            return None
        if footprint_depth(upper, lower) <= 1e-9:
            return None
        poly = upper.footprint.intersection(lower.footprint)
        sid = support_id
    if poly.is_empty or poly.area <= 1e-9:
        return None
    return ContactPatch(poly, sid)
