"""Regenerate the golden files under tests/golden that pin renderer and redesign output.

Run from the repository root after an intentional change to rendering, mesh
export or redesign: ``python tools/make_goldens.py``. Review the diff before
committing; these files exist to catch unintentional changes.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from blockforge.catalog import load_catalog, load_plan
from blockforge.cli import bundled_catalog, bundled_designs
from blockforge.redesign import redesign
from blockforge.render import Axis, mesh_text, render_ortho
from blockforge.statics import scene_from_plan

GOLDEN = Path(__file__).resolve().parents[1] / "tests" / "golden"


def sha(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def render_hashes(catalog) -> dict:
    out = {}
    for path in bundled_designs():
        name = path.name.removesuffix(".plan.json")
        scene = scene_from_plan(load_plan(path), catalog)
        entry = {axis.value: sha(render_ortho(scene, axis).to_ppm()) for axis in Axis}
        entry["mesh"] = sha(mesh_text(scene).encode())
        out[name] = entry
    return out


def main():
    catalog = load_catalog(bundled_catalog())
    hashes = render_hashes(catalog)
    (GOLDEN / "render_hashes.json").write_text(json.dumps(hashes, indent=2, sort_keys=True) + "\n")
    sofa = next(p for p in bundled_designs() if p.name.startswith("sofa"))
    _, report = redesign(load_plan(sofa), catalog)
    (GOLDEN / "sofa.redesign.json").write_text(report.to_json())
    print(f"wrote {len(hashes)} render hashes and the sofa redesign report")


if __name__ == "__main__":
    main()
