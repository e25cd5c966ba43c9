"""Record the bundled replay transcripts for the "table" and "letter U" prompts.

A scripted stand-in model answers every prompt of the design pipeline; the
recordings it leaves behind let ``blockforge design --client replay:<dir>``
run offline. Some chains deliberately exercise the repair paths: an unstable
first draft, a catalog overflow, a reply with no JSON, and a design that stays
unstable after two repair rounds.

Run from the repository root: ``python tools/make_replay_fixtures.py``.
"""

from __future__ import annotations

import hashlib
import json
import re
import shutil
import tempfile
from pathlib import Path

import blockforge.designer.client as client_mod
from blockforge.catalog import load_catalog
from blockforge.cli import run_design

ROOT = Path(__file__).resolve().parents[1]
DATA = ROOT / "src" / "blockforge" / "data"
GOLDEN = ROOT / "tests" / "golden"
STAMP = "2026-01-01T00:00:00Z"

PILLAR = [30, 30, 80]
SLAB = [80, 80, 20]


def block(name, block_id, dims, xy, color):
    return {"name": name, "block_id": block_id, "dims_mm": dims, "xy_mm": list(xy), "color": color}


def legs(xy_list, block_id="pillar", dims=PILLAR, color="brown"):
    names = ["front left leg", "front right leg", "back left leg", "back right leg", "middle leg", "extra leg", "spare leg"]
    return [block(names[k], block_id, dims, xy, color) for k, xy in enumerate(xy_list)]


CORNERS = [(-25, -25), (25, -25), (-25, 25), (25, 25)]


def table_plans(variant: int) -> list[list[dict]]:
    """Successive drafts for one chain: first answer, then one per repair request."""
    top = lambda xy=(0, 0), color="tan": block("tabletop", "slab", SLAB, xy, color)  # noqa: E731
    if variant == 1:
        return [legs(CORNERS) + [top()]]
    if variant == 2:
        return [legs([(-24, -24), (24, -24), (-24, 24), (24, 24)], color="black") + [top(color="white")]]
    if variant == 3:
        return [legs(CORNERS) + [top((45, 0))], legs(CORNERS) + [top()]]
    if variant == 4:
        crowded = legs(CORNERS + [(0, 0), (-60, 0), (60, 0)])
        return [crowded + [top()], legs(CORNERS) + [top()]]
    if variant == 5:
        return [[top(color="brown")] + legs(CORNERS, color="brown")]
    if variant == 6:
        return [legs([(-22, -22), (22, -22), (-22, 22), (22, 22)], "cylinder", [40, 40, 40], "gray") + [top()]]
    if variant == 7:
        return [legs(CORNERS) + [top((50, 0))], legs(CORNERS) + [top((48, 0))], legs(CORNERS) + [top((46, 0))]]
    if variant == 8:
        return [None, legs(CORNERS, color="orange") + [top(color="orange")]]
    if variant == 9:
        row = [(-62, 0), (-21, 0), (21, 0), (62, 0)]
        return [legs(row) + [block("tabletop", "plank", [160, 40, 20], (0, 0), "tan")]]
    return [legs([(-20, -20), (20, -20), (-20, 20), (20, 20)]) + [block("round top", "disc", [80, 80, 20], (0, 0), "tan")]]


def letter_u_plans(variant: int) -> list[list[dict]]:
    base = lambda color="blue": block("bottom bar", "plank", [160, 40, 20], (0, 0), color)  # noqa: E731
    arm = lambda side, x, color="blue", block_id="pillar", dims=PILLAR: block(  # noqa: E731
        f"{side} arm", block_id, dims, (x, 0), color
    )
    if variant in (1, 6):
        return [[base(), arm("left", -65), arm("right", 65)]]
    if variant in (2, 7):
        upright = [20, 40, 80]
        return [[base("red"), arm("left", -70, "red", "brick", upright), arm("right", 70, "red", "brick", upright)]]
    if variant in (3, 8):
        return [[base("green"), arm("left", -65, "green", "roller", [30, 30, 100]), arm("right", 65, "green", "roller", [30, 30, 100])]]
    if variant == 4:
        return [[base(), arm("left", -85), arm("right", 85)], [base(), arm("left", -62), arm("right", 62)]]
    if variant == 5:
        return [[arm("left", -65, "yellow"), arm("right", 65, "yellow"), base("yellow")]]
    if variant == 9:
        return [[base("purple"), arm("left", -60, "purple"), arm("right", 60, "purple"), block("left cap", "small_cube", [20, 20, 20], (-60, 0), "purple")]]
    return [[base("gray"), arm("left", -66, "gray"), arm("right", 66, "gray")]]


PLANS = {"table": table_plans, "letter U": letter_u_plans}

ELABORATIONS = {
    "table": "A table is a flat rectangular or round top held up by four legs of equal height, one near each corner. "
    "The top is wide and thin, the legs are tall and slender, and the space under the top is open.",
    "letter U": "The capital letter U is two vertical strokes of equal height joined at the bottom by a curve or bar. "
    "Seen from the front it is symmetric, open at the top, and taller than it is wide.",
}

ROLES = {
    "table": "Four pillars serve as legs, one under each corner of the top. A slab lies across them as the tabletop.",
    "letter U": "A plank lies flat as the bottom bar. Two tall upright blocks stand on its ends as the two strokes.",
}


def _fence(blocks):
    doc = {"blocks": blocks, "order": [b["name"] for b in blocks]}
    return "Here is the plan.\n```json\n" + json.dumps(doc, indent=1) + "\n```"


def _digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


class ScriptedModel:
    """Deterministic stand-in that answers the design, rating and comparison prompts."""

    model = "scripted-v1"

    def send(self, conversation):
        system = conversation[0].text if conversation[0].role == "system" else ""
        last = conversation[-1]
        text = last.text
        prompt_match = re.search(r'"([^"]+)"', text)
        if text.startswith("Describe what"):
            return ELABORATIONS[prompt_match.group(1)]
        if text.startswith("Target object:"):
            return ROLES[prompt_match.group(1)]
        if text.startswith(("Now write the assembly plan", "That plan cannot", "I simulated your plan")):
            return self._draft(conversation, system)
        if text.startswith("The attached images show the front"):
            score = 3 + int(_digest(last.images[0])[:8], 16) % 3
            # one design gets a malformed first answer to exercise the re-ask
            return "7/5" if score == 5 and _digest(last.images[0])[0] in "01234567" else str(score)
        if text.startswith("Please answer with just one integer"):
            return "7"
        if text.startswith("Two block structures"):
            a, b = (_digest(im) for im in last.images)
            return "A" if a < b else "B"
        if text.startswith("Please answer with exactly one letter"):
            return "A"
        raise KeyError(f"unscripted prompt: {text[:60]!r}")

    def _draft(self, conversation, system):
        variant = int(re.search(r"variant (\d+) of", system).group(1))
        first_user = next(m for m in conversation if m.role == "user").text
        prompt = re.search(r'"([^"]+)"', first_user).group(1)
        drafts = PLANS[prompt](variant)
        step = sum(1 for m in conversation if m.role == "assistant" and ("```" in m.text or "no plan" in m.text))
        blocks = drafts[min(step, len(drafts) - 1)]
        if blocks is None:
            return "Sorry, no plan yet: I would start with the legs and then add the top."
        return _fence(blocks)


def main():
    client_mod._now = lambda: STAMP
    catalog = load_catalog(DATA / "catalog.json")
    model = ScriptedModel()
    GOLDEN.mkdir(parents=True, exist_ok=True)
    for prompt in PLANS:
        slug = re.sub(r"[^a-z0-9]+", "_", prompt.lower()).strip("_")
        with tempfile.TemporaryDirectory() as tmp:
            entry = run_design(prompt, catalog, model, tmp, 10, client_label="scripted")
            target = DATA / "replay" / slug
            shutil.rmtree(target, ignore_errors=True)
            shutil.copytree(Path(tmp) / "transcripts", target)
            shutil.copy(Path(tmp) / "winner.plan.json", GOLDEN / f"{slug}.winner.plan.json")
        flags = {c["transcript_id"]: c["flags"] for c in entry["candidates"] if c["flags"]}
        print(f"{prompt}: winner {entry['winner']}, {len(entry['candidates'])} candidates, flags {flags}")


if __name__ == "__main__":
    main()
