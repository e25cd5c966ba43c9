"""Input coercion shared by the estimator front-ends."""

from __future__ import annotations

from os import PathLike
from pathlib import Path

from .catalog import (
    WORKSPACE_HALF_MM,
    AssemblyPlan,
    BlockSpec,
    ValidationError,
    catalog_from_list,
    load_catalog,
    load_plan,
    validate_plan,
)


def check_catalog(catalog) -> list[BlockSpec]:
    """Accept a path, a list of ``BlockSpec``/dicts, or a ``{id: BlockSpec}`` mapping."""
    if catalog is None:
        raise ValueError("a block catalog is required")
    if isinstance(catalog, (str, PathLike)):
        return load_catalog(catalog)
    if isinstance(catalog, dict):
        catalog = list(catalog.values())
    catalog = list(catalog)
    if all(isinstance(c, BlockSpec) for c in catalog):
        ids = [c.id for c in catalog]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate block id in catalog")
        return catalog
    return catalog_from_list(catalog)


def check_plan(plan, catalog, workspace_half_mm: float = WORKSPACE_HALF_MM) -> AssemblyPlan:
    if isinstance(plan, (str, PathLike)):
        plan = load_plan(Path(plan))
    elif isinstance(plan, dict):
        plan = AssemblyPlan.from_dict(plan)
    if not isinstance(plan, AssemblyPlan):
        raise TypeError(f"expected an AssemblyPlan, got {type(plan).__name__}")
    report = validate_plan(plan, catalog, workspace_half_mm)
    if not report.ok:
        raise ValidationError("; ".join(map(str, report.violations)), report.violations)
    return plan


def check_plans(X, catalog, workspace_half_mm: float = WORKSPACE_HALF_MM) -> list[AssemblyPlan]:
    """Coerce ``X`` (one plan or a sequence of plans) to a validated list."""
    if isinstance(X, (AssemblyPlan, dict, str, PathLike)):
        X = [X]
    return [check_plan(p, catalog, workspace_half_mm) for p in X]
