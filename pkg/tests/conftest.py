from pathlib import Path

import pytest

from blockforge.catalog import AssemblyPlan, BlockSpec, Orientation, Placement, Shape, catalog_hash, load_catalog, load_plan
from blockforge.cli import bundled_catalog, bundled_designs

GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture(scope="session")
def catalog():
    return load_catalog(bundled_catalog())


@pytest.fixture(scope="session")
def designs():
    """Bundled design plans by name, in file order."""
    return {path.name.removesuffix(".plan.json"): load_plan(path) for path in bundled_designs()}


@pytest.fixture
def small_catalog():
    return [
        BlockSpec("cube", Shape.CUBOID, (40, 40, 40), 8),
        BlockSpec("plank", Shape.CUBOID, (160, 40, 20), 4),
        BlockSpec("cyl", Shape.CYLINDER, (40, 40), 4),
    ]


def place(block_id, x, y, orientation=(0, 1, 2), color="gray"):
    return Placement(block_id, Orientation(orientation), (x, y), color)


def make_plan(catalog, *placements, prompt="test"):
    return AssemblyPlan(prompt, tuple(placements), catalog_hash(catalog))
