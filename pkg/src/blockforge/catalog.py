"""Block inventory and assembly-plan document model.

Catalog and plan files are JSON with explicit millimeter units and a
``schema_version`` field. Orientations are axis permutations only, so every
placed block stays axis-aligned.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

SCHEMA_VERSION = 1
WORKSPACE_HALF_MM = 200.0


class ParseError(ValueError):
    """A catalog or plan document could not be decoded."""


class ValidationError(ValueError):
    """A document decoded but violates a domain invariant."""

    def __init__(self, message: str, violations: Sequence["Violation"] = ()):
        super().__init__(message)
        self.violations = list(violations)


class InvalidOrientation(ValueError):
    pass


class Shape(str, Enum):
    CUBOID = "cuboid"
    CYLINDER = "cylinder"


class CylinderPose(str, Enum):
    UPRIGHT = "upright"
    LYING_X = "lying_x"
    LYING_Y = "lying_y"


CUBOID_PERMS = tuple(itertools.permutations(range(3)))


@dataclass(frozen=True)
class BlockSpec:
    """One catalog entry.

    ``dims_mm`` is ``(length, width, height)`` for cuboids and
    ``(diameter, height)`` for cylinders.
    """

    id: str
    shape: Shape
    dims_mm: tuple[float, ...]
    count: int

    def __post_init__(self):
        object.__setattr__(self, "shape", Shape(self.shape))
        object.__setattr__(self, "dims_mm", tuple(float(d) for d in self.dims_mm))
        expected = 3 if self.shape is Shape.CUBOID else 2
        if len(self.dims_mm) != expected:
            raise ValidationError(
                f"block {self.id!r}: {self.shape.value} needs {expected} dims, "
                f"got {len(self.dims_mm)}"
            )
        if any(not d > 0 for d in self.dims_mm):
            raise ValidationError(f"block {self.id!r}: dimensions must be positive")
        if int(self.count) != self.count or self.count < 0:
            raise ValidationError(f"block {self.id!r}: count must be a non-negative integer")

    @property
    def volume_mm3(self) -> float:
        if self.shape is Shape.CUBOID:
            l, w, h = self.dims_mm
            return l * w * h
        d, h = self.dims_mm
        return 3.141592653589793 * (d / 2) ** 2 * h

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "shape": self.shape.value,
            "dims_mm": list(self.dims_mm),
            "count": self.count,
        }


@dataclass(frozen=True)
class Orientation:
    """Dimension permutation mapping catalog dims onto world axes.

    For cuboids ``perm[k]`` is the index of the catalog dimension laid along
    world axis ``k`` (x, y, z). For cylinders ``perm`` is a :class:`CylinderPose`.
    """

    perm: tuple[int, int, int] | CylinderPose = (0, 1, 2)

    def __post_init__(self):
        p = self.perm
        if isinstance(p, str):
            try:
                object.__setattr__(self, "perm", CylinderPose(p))
            except ValueError:
                raise InvalidOrientation(f"unknown cylinder pose {p!r}") from None
        else:
            p = tuple(int(v) for v in p)
            if p not in CUBOID_PERMS:
                raise InvalidOrientation(f"{p} is not a permutation of (0, 1, 2)")
            object.__setattr__(self, "perm", p)

    @property
    def is_cylinder(self) -> bool:
        return isinstance(self.perm, CylinderPose)

    def inverse(self) -> "Orientation":
        if self.is_cylinder:
            raise InvalidOrientation("cylinder poses have no permutation inverse")
        inv = [0, 0, 0]
        for axis, dim in enumerate(self.perm):
            inv[dim] = axis
        return Orientation(tuple(inv))

    def to_json(self):
        return self.perm.value if self.is_cylinder else list(self.perm)

    @classmethod
    def from_json(cls, value) -> "Orientation":
        if isinstance(value, str):
            return cls(value)
        if isinstance(value, (list, tuple)) and len(value) == 3:
            return cls(tuple(value))
        raise InvalidOrientation(f"cannot decode orientation {value!r}")


UPRIGHT = Orientation(CylinderPose.UPRIGHT)
IDENTITY = Orientation((0, 1, 2))


def effective_dims(spec: BlockSpec, o: Orientation) -> tuple[float, float, float]:
    """World-axis extents ``(x, y, z)`` of ``spec`` placed with orientation ``o``."""
    if spec.shape is Shape.CUBOID:
        if o.is_cylinder:
            raise InvalidOrientation(f"cuboid {spec.id!r} cannot take pose {o.perm.value}")
        return tuple(spec.dims_mm[i] for i in o.perm)
    if not o.is_cylinder:
        raise InvalidOrientation(f"cylinder {spec.id!r} needs a cylinder pose, got {o.perm}")
    d, h = spec.dims_mm
    if o.perm is CylinderPose.UPRIGHT:
        return (d, d, h)
    if o.perm is CylinderPose.LYING_X:
        return (h, d, d)
    return (d, h, d)


def orientation_from_dims(spec: BlockSpec, dims: Sequence[float], tol: float = 1e-6) -> Orientation:
    """Recover the orientation whose extents equal ``dims`` (rearranged dimensions).

    Identity-like choices win ties, which matters for cubes and square bars.
    """
    dims = tuple(float(d) for d in dims)
    if len(dims) != 3:
        raise InvalidOrientation(f"expected 3 rearranged dims, got {len(dims)}")
    if spec.shape is Shape.CUBOID:
        candidates = [Orientation(p) for p in CUBOID_PERMS]
    else:
        candidates = [Orientation(p) for p in CylinderPose]
    for o in candidates:
        if all(abs(a - b) <= tol for a, b in zip(effective_dims(spec, o), dims)):
            return o
    raise InvalidOrientation(
        f"{list(dims)} is not a rearrangement of {spec.id!r} dims {list(spec.dims_mm)}"
    )


@dataclass(frozen=True)
class Placement:
    block_id: str
    orientation: Orientation = IDENTITY
    xy_mm: tuple[float, float] = (0.0, 0.0)
    color: str = "gray"

    def __post_init__(self):
        object.__setattr__(self, "xy_mm", (float(self.xy_mm[0]), float(self.xy_mm[1])))

    def moved(self, xy) -> "Placement":
        return Placement(self.block_id, self.orientation, tuple(xy), self.color)

    def to_dict(self) -> dict:
        return {
            "block_id": self.block_id,
            "orientation": self.orientation.to_json(),
            "xy_mm": list(self.xy_mm),
            "color": self.color,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Placement":
        try:
            return cls(
                block_id=str(d["block_id"]),
                orientation=Orientation.from_json(d.get("orientation", [0, 1, 2])),
                xy_mm=tuple(d["xy_mm"]),
                color=str(d.get("color", "gray")),
            )
        except InvalidOrientation:
            raise
        except (KeyError, TypeError, IndexError, ValueError) as exc:
            raise ParseError(f"bad placement {d!r}: {exc}") from exc


@dataclass(frozen=True)
class AssemblyPlan:
    """Ordered placements; list position is construction order."""

    prompt: str
    placements: tuple[Placement, ...] = ()
    catalog_ref: str = ""

    def __post_init__(self):
        object.__setattr__(self, "placements", tuple(self.placements))

    def __len__(self):
        return len(self.placements)

    def with_placements(self, placements: Iterable[Placement]) -> "AssemblyPlan":
        return AssemblyPlan(self.prompt, tuple(placements), self.catalog_ref)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "prompt": self.prompt,
            "catalog_hash": self.catalog_ref,
            "placements": [p.to_dict() for p in self.placements],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    @classmethod
    def from_dict(cls, d: dict) -> "AssemblyPlan":
        if not isinstance(d, dict) or "placements" not in d:
            raise ParseError("plan document must be an object with 'placements'")
        _check_version(d)
        if not isinstance(d["placements"], list):
            raise ParseError("'placements' must be a list")
        return cls(
            prompt=str(d.get("prompt", "")),
            placements=tuple(Placement.from_dict(p) for p in d["placements"]),
            catalog_ref=str(d.get("catalog_hash", "")),
        )


def _check_version(d: dict):
    version = d.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ParseError(f"unsupported schema_version {version!r}")


def catalog_from_list(items) -> list[BlockSpec]:
    specs = []
    seen = set()
    for item in items:
        if not isinstance(item, dict):
            raise ParseError(f"catalog entry must be an object, got {item!r}")
        try:
            spec = BlockSpec(
                id=str(item["id"]),
                shape=Shape(item["shape"]),
                dims_mm=tuple(item["dims_mm"]),
                count=item["count"],
            )
        except (KeyError, TypeError) as exc:
            raise ParseError(f"bad catalog entry {item!r}: {exc}") from exc
        except ValueError as exc:
            if isinstance(exc, ValidationError):
                raise
            raise ParseError(f"bad catalog entry {item!r}: {exc}") from exc
        if spec.id in seen:
            raise ValidationError(f"duplicate block id {spec.id!r}")
        seen.add(spec.id)
        specs.append(spec)
    return specs


def catalog_to_json(catalog: Sequence[BlockSpec]) -> str:
    doc = {"schema_version": SCHEMA_VERSION, "blocks": [s.to_dict() for s in catalog]}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def catalog_hash(catalog: Sequence[BlockSpec]) -> str:
    return hashlib.sha256(catalog_to_json(catalog).encode()).hexdigest()[:16]


def parse_catalog(text: str) -> list[BlockSpec]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"catalog is not valid JSON: {exc}") from exc
    if isinstance(doc, dict):
        _check_version(doc)
        doc = doc.get("blocks")
    if not isinstance(doc, list):
        raise ParseError("catalog must be a list of blocks")
    return catalog_from_list(doc)


def load_catalog(path) -> list[BlockSpec]:
    return parse_catalog(Path(path).read_text())


def save_catalog(catalog: Sequence[BlockSpec], path) -> None:
    Path(path).write_text(catalog_to_json(catalog))


def load_plan(path) -> AssemblyPlan:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"plan is not valid JSON: {exc}") from exc
    return AssemblyPlan.from_dict(doc)


def save_plan(plan: AssemblyPlan, path) -> None:
    Path(path).write_text(plan.to_json())


def catalog_index(catalog: Sequence[BlockSpec]) -> dict[str, BlockSpec]:
    return {s.id: s for s in catalog}


@dataclass(frozen=True)
class Violation:
    kind: str
    index: int | None
    message: str

    def __str__(self):
        where = "plan" if self.index is None else f"placement {self.index}"
        return f"{where}: {self.kind}: {self.message}"


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)
    n_placements: int = 0

    @property
    def ok(self) -> bool:
        return not self.violations

    def kinds(self) -> set[str]:
        return {v.kind for v in self.violations}


def validate_plan(
    plan: AssemblyPlan,
    catalog: Sequence[BlockSpec],
    workspace_half_mm: float = WORKSPACE_HALF_MM,
) -> ValidationReport:
    """Collect structural violations; never raises."""
    index = catalog_index(catalog)
    report = ValidationReport(n_placements=len(plan.placements))
    usage = Counter()
    for i, p in enumerate(plan.placements):
        spec = index.get(p.block_id)
        if spec is None:
            report.violations.append(
                Violation("unavailable block", i, f"{p.block_id!r} is not in the catalog")
            )
            continue
        usage[p.block_id] += 1
        try:
            effective_dims(spec, p.orientation)
        except InvalidOrientation as exc:
            report.violations.append(Violation("invalid orientation", i, str(exc)))
        x, y = p.xy_mm
        if not (abs(x) <= workspace_half_mm and abs(y) <= workspace_half_mm):
            report.violations.append(
                Violation("out of workspace", i, f"({x:g}, {y:g}) outside ±{workspace_half_mm:g} mm")
            )
    for block_id, used in sorted(usage.items()):
        available = index[block_id].count
        if used > available:
            report.violations.append(
                Violation("count exceeded", None, f"{block_id!r} used {used} times, {available} available")
            )
    return report
