"""Author the bundled fragile designs used by the redesign ablation.

Run from the repository root: ``python tools/make_designs.py``.
"""

from pathlib import Path

from blockforge.catalog import AssemblyPlan, Orientation, Placement, catalog_hash, load_catalog, save_plan

ROOT = Path(__file__).resolve().parents[1] / "src" / "blockforge" / "data"
CATALOG = load_catalog(ROOT / "catalog.json")

UPRIGHT = "upright"
FLAT = (0, 1, 2)
ON_EDGE = (0, 2, 1)  # brick (80, 40, 20) -> (80, 20, 40)
TURNED = (1, 0, 2)  # swap length and width
ON_EDGE_TURNED = (2, 0, 1)  # brick -> (20, 80, 40)


def P(block_id, xy, orientation=FLAT, color="gray"):
    return Placement(block_id, Orientation(orientation), xy, color)


DESIGNS = {
    "sofa": [
        P("brick", (0, 0), FLAT, "blue"),
        P("brick", (0, 30), ON_EDGE, "blue"),
        P("cube", (-60, 0), FLAT, "navy"),
        P("cube", (60, 0), FLAT, "navy"),
    ],
    "sandbox": [
        P("brick", (0, -50), ON_EDGE, "yellow"),
        P("brick", (0, 50), ON_EDGE, "yellow"),
        P("brick", (-52, 0), ON_EDGE_TURNED, "yellow"),
        P("brick", (52, 0), ON_EDGE_TURNED, "yellow"),
        P("cylinder", (20, 0), UPRIGHT, "red"),
    ],
    "shark": [
        P("cylinder", (-45, 0), UPRIGHT, "gray"),
        P("cylinder", (45, 0), UPRIGHT, "gray"),
        P("plank", (0, 0), FLAT, "blue"),
        P("cube", (0, 0), FLAT, "blue"),
        P("small_cube", (-32, 0), FLAT, "white"),
        P("small_cube", (62, 0), FLAT, "blue"),
    ],
    "ceiling_fan": [
        P("plank", (0, 0), FLAT, "white"),
        P("cylinder", (0, 0), UPRIGHT, "gray"),
        P("small_cube", (33, 0), FLAT, "yellow"),
        P("small_cube", (-33, 0), FLAT, "yellow"),
        P("cylinder", (0, 0), UPRIGHT, "gray"),
        P("plank", (0, 0), FLAT, "brown"),
        P("plank", (0, 0), TURNED, "brown"),
    ],
    "taj_mahal": [
        P("slab", (0, 0), FLAT, "white"),
        P("cube", (0, 0), FLAT, "white"),
        P("cylinder", (0, 0), UPRIGHT, "white"),
        P("small_cube", (0, 0), FLAT, "yellow"),
        P("pillar", (-58, -25), FLAT, "white"),
        P("pillar", (58, -25), FLAT, "white"),
        P("pillar", (-58, 25), FLAT, "white"),
        P("pillar", (58, 25), FLAT, "white"),
        P("small_cube", (-20, -53), FLAT, "gray"),
        P("small_cube", (20, -53), FLAT, "gray"),
    ],
}


def main():
    out = ROOT / "designs"
    out.mkdir(parents=True, exist_ok=True)
    for name, placements in DESIGNS.items():
        plan = AssemblyPlan(name.replace("_", " "), tuple(placements), catalog_hash(CATALOG))
        save_plan(plan, out / f"{name}.plan.json")
        print(f"wrote {name} ({len(placements)} blocks)")


if __name__ == "__main__":
    main()
