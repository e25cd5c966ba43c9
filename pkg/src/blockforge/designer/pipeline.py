"""Describe -> plan -> generate -> repair chains, rating, and knockout selection."""

from __future__ import annotations

import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from string import Template
from typing import Callable, Sequence

from ..catalog import (
    WORKSPACE_HALF_MM,
    AssemblyPlan,
    BlockSpec,
    InvalidOrientation,
    Orientation,
    ParseError,
    Placement,
    Shape,
    ValidationError,
    Violation,
    catalog_hash,
    catalog_index,
    catalog_to_json,
    orientation_from_dims,
    validate_plan,
)
from ..render import RenderConfig, render_pair
from ..statics import DropError, Scene, SimParams, StabilityReport, direction_label, settle_plan
from .client import LmClient, LmError, Message, RecordingClient, Transcript

log = logging.getLogger(__name__)

PROMPT_VERSION = "v1"
RATING_WINDOW = 1
MAX_REPAIR_ROUNDS = 2


def template(name: str) -> Template:
    path = resources.files(__package__).joinpath("prompts", PROMPT_VERSION, f"{name}.txt")
    return Template(path.read_text().strip())


class Chat:
    """One growing conversation against a client."""

    def __init__(self, client: LmClient, system: str | None = None):
        self.client = client
        self.messages: list[Message] = []
        if system:
            self.messages.append(Message("system", system))

    def ask(self, text: str, images: Sequence[bytes] = ()) -> str:
        self.messages.append(Message("user", text, tuple(images)))
        reply = self.client.send(list(self.messages))
        self.messages.append(Message("assistant", reply))
        return reply


@dataclass
class DesignCandidate:
    plan: AssemblyPlan
    names: list[str]
    scene: Scene
    report: StabilityReport
    rating: int | None = None
    renders: tuple[bytes, ...] = ()
    transcript_id: str = ""
    repair_rounds: int = 0
    flags: list[str] = field(default_factory=list)
    transcript: Transcript | None = field(default=None, repr=False)

    @property
    def stable(self) -> bool:
        return self.report.stable

    def summary(self) -> dict:
        return {
            "transcript_id": self.transcript_id,
            "plan_digest": self.plan.digest(),
            "n_blocks": len(self.plan),
            "stable": self.stable,
            "diagnostic": self.report.diagnostic,
            "rating": self.rating,
            "repair_rounds": self.repair_rounds,
            "flags": list(self.flags),
        }


def assess_plan(plan: AssemblyPlan, catalog, sim: SimParams = SimParams()) -> tuple[Scene, StabilityReport]:
    """Settle ``plan``; the report is the first unstable step, else the final one."""
    scene, steps = settle_plan(plan, catalog, sim)
    for step in steps:
        if not step.stable:
            return scene, step
    return scene, steps[-1] if steps else StabilityReport(True, diagnostic="empty scene")


def make_candidate(
    plan: AssemblyPlan,
    names: Sequence[str],
    catalog,
    sim: SimParams = SimParams(),
    render_config: RenderConfig = RenderConfig(),
    transcript_id: str = "",
) -> DesignCandidate:
    scene, report = assess_plan(plan, catalog, sim)
    highlights = () if report.offender is None else (report.offender,)
    views = render_pair(scene, highlights, render_config)
    report.views = views
    return DesignCandidate(
        plan, list(names), scene, report, renders=tuple(v.to_ppm() for v in views), transcript_id=transcript_id
    )


def elaborate(prompt: str, chat: Chat) -> str:
    if not prompt or not prompt.strip():
        raise ValueError("prompt must be non-empty")
    return chat.ask(template("elaborate").substitute(prompt=prompt.strip()))


def plan_blocks(prompt: str, elaboration: str, catalog: Sequence[BlockSpec], chat: Chat) -> str:
    """Ask which blocks play which role. ``elaboration`` is already in the chat history."""
    if not catalog:
        raise ValueError("a non-empty catalog is required")
    if not elaboration:
        raise ValueError("elaboration must come first")
    return chat.ask(template("plan").substitute(prompt=prompt, catalog_json=catalog_to_json(catalog).strip()))


_FENCE = re.compile(r"```[ \t]*(?:json|JSON)?[ \t]*\n?(.*?)```", re.S)


def extract_json_block(text: str):
    match = _FENCE.search(text or "")
    if match is None:
        raise ParseError("reply contains no fenced JSON block")
    try:
        return json.loads(match.group(1))
    except json.JSONDecodeError as exc:
        raise ParseError(f"fenced block is not valid JSON: {exc}") from exc


def parse_plan_reply(
    text: str, catalog: Sequence[BlockSpec], prompt: str = ""
) -> tuple[AssemblyPlan, list[str], list[Violation]]:
    """Decode the model's fenced plan into an ordered plan plus block names.

    Orientation and ordering problems are returned as violations rather than
    raised, so they can be quoted back in a repair round.
    """
    doc = extract_json_block(text)
    if not isinstance(doc, dict) or not isinstance(doc.get("blocks"), list):
        raise ParseError("plan JSON must be an object with a 'blocks' list")
    index = catalog_index(catalog)
    violations: list[Violation] = []
    by_name: dict[str, Placement] = {}
    listed: list[str] = []
    for k, item in enumerate(doc["blocks"]):
        if not isinstance(item, dict):
            raise ParseError(f"block entry {k} is not an object")
        name = str(item.get("name") or f"block {k + 1}")
        try:
            block_id = str(item["block_id"])
            x, y = (float(v) for v in item["xy_mm"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"block {name!r} lacks block_id or a 2-element xy_mm: {exc}") from exc
        spec = index.get(block_id)
        orientation = Orientation("upright") if spec is not None and spec.shape is Shape.CYLINDER else Orientation()
        try:
            if "orientation" in item:
                orientation = Orientation.from_json(item["orientation"])
            elif "dims_mm" in item and spec is not None:
                orientation = orientation_from_dims(spec, item["dims_mm"])
        except (InvalidOrientation, TypeError, ValueError) as exc:
            violations.append(Violation("invalid orientation", k, f"{name}: {exc}"))
        if name in by_name:
            violations.append(Violation("duplicate name", k, f"name {name!r} is used twice"))
            name = f"{name} #{k + 1}"
        by_name[name] = Placement(block_id, orientation, (x, y), str(item.get("color", "gray")))
        listed.append(name)
    order = doc.get("order", listed)
    if not isinstance(order, list) or sorted(map(str, order)) != sorted(listed):
        violations.append(Violation("bad order", None, "'order' must list every block name exactly once"))
        order = listed
    names = [str(n) for n in order]
    plan = AssemblyPlan(prompt, tuple(by_name[n] for n in names), catalog_hash(catalog))
    return plan, names, violations


def _check_reply(text, catalog, prompt, workspace_half_mm):
    plan, names, violations = parse_plan_reply(text, catalog, prompt)
    violations += validate_plan(plan, catalog, workspace_half_mm).violations
    return plan, names, violations


def generate_plan(
    prompt: str,
    elaboration: str,
    roles: str,
    catalog: Sequence[BlockSpec],
    chat: Chat,
    workspace_half_mm: float = WORKSPACE_HALF_MM,
) -> tuple[AssemblyPlan, list[str]]:
    """Request the structured plan; one repair round on parse or validation failure."""
    if not (elaboration and roles):
        raise ValueError("elaborate and plan_blocks must run first")
    reply = chat.ask(template("generate").substitute(workspace=f"{workspace_half_mm:g}"))
    for attempt in range(2):
        try:
            plan, names, violations = _check_reply(reply, catalog, prompt, workspace_half_mm)
        except ParseError as exc:
            if attempt:
                raise
            problems = [str(exc)]
        else:
            if not violations:
                return plan, names
            if attempt:
                raise ValidationError("; ".join(map(str, violations)), violations)
            problems = [str(v) for v in violations]
        listing = "\n".join(f"- {p}" for p in problems)
        reply = chat.ask(template("repair_validation").substitute(violations=listing))
    raise AssertionError("unreachable")


def repair_loop(
    candidate: DesignCandidate,
    chat: Chat,
    catalog: Sequence[BlockSpec],
    max_rounds: int = MAX_REPAIR_ROUNDS,
    sim: SimParams = SimParams(),
    render_config: RenderConfig = RenderConfig(),
) -> DesignCandidate:
    """Feed simulator findings back until the design is stable or rounds run out."""
    best_stable = candidate if candidate.stable else None
    rounds = 0
    while not candidate.stable and rounds < max_rounds:
        rounds += 1
        report = candidate.report
        k = report.offender
        text = template("repair_stability").substitute(
            name=candidate.names[k],
            position=k + 1,
            diagnostic=report.diagnostic,
            direction=direction_label(report.direction),
        )
        reply = chat.ask(text, images=candidate.renders)
        try:
            plan, names, violations = _check_reply(reply, catalog, candidate.plan.prompt, sim.workspace_half_mm)
            if violations:
                raise ValidationError("; ".join(map(str, violations)), violations)
        except (ParseError, ValidationError) as exc:
            log.info("repair round %d aborted: %s", rounds, exc)
            fallback = best_stable or candidate
            fallback.repair_rounds = rounds
            fallback.flags.append(f"repair aborted: {exc}")
            return fallback
        previous = candidate
        candidate = make_candidate(plan, names, catalog, sim, render_config, previous.transcript_id)
        candidate.transcript = previous.transcript
        candidate.flags = previous.flags
        candidate.repair_rounds = rounds
        if candidate.stable:
            best_stable = candidate
    if not candidate.stable:
        candidate.flags.append("unstable after repair")
    return candidate


def slugify(text: str) -> str:
    return re.sub(r"[^a-z0-9]+", "-", text.lower()).strip("-") or "design"


def run_chain(
    prompt: str,
    catalog: Sequence[BlockSpec],
    client: LmClient,
    variant: int = 1,
    n_variants: int = 1,
    sim: SimParams = SimParams(),
    render_config: RenderConfig = RenderConfig(),
    max_rounds: int = MAX_REPAIR_ROUNDS,
) -> DesignCandidate:
    chat = Chat(client, template("system").substitute(variant=variant, n_variants=n_variants))
    elaboration = elaborate(prompt, chat)
    roles = plan_blocks(prompt, elaboration, catalog, chat)
    plan, names = generate_plan(prompt, elaboration, roles, catalog, chat, sim.workspace_half_mm)
    candidate = make_candidate(plan, names, catalog, sim, render_config)
    return repair_loop(candidate, chat, catalog, max_rounds, sim, render_config)


@dataclass
class ChainFailure:
    chain: int
    error: str
    transcript: Transcript


def generate_candidates(
    prompt: str,
    catalog: Sequence[BlockSpec],
    client: LmClient,
    n: int = 10,
    sim: SimParams = SimParams(),
    render_config: RenderConfig = RenderConfig(),
    max_workers: int | None = None,
    failures: list | None = None,
) -> list[DesignCandidate]:
    """Run ``n`` independent chains concurrently, each with its own transcript.

    Failed chains are logged (and appended to ``failures``); only an empty
    result is an error.
    """
    if n < 1:
        raise ValueError("need at least one candidate")
    if not prompt or not prompt.strip():
        raise ValueError("prompt must be non-empty")
    slug = slugify(prompt)

    def chain(i: int):
        transcript = Transcript(f"{slug}-chain{i:02d}")
        rec = RecordingClient(client, transcript)
        try:
            cand = run_chain(prompt, catalog, rec, i + 1, n, sim, render_config)
        except (LmError, ParseError, ValidationError, DropError) as exc:
            log.warning("chain %d failed: %s: %s", i, type(exc).__name__, exc)
            return ChainFailure(i, f"{type(exc).__name__}: {exc}", transcript)
        cand.transcript_id = transcript.id
        cand.transcript = transcript
        return cand

    with ThreadPoolExecutor(max_workers=max_workers or min(n, 10)) as pool:
        results = list(pool.map(chain, range(n)))
    out = [r for r in results if isinstance(r, DesignCandidate)]
    if failures is not None:
        failures.extend(r for r in results if isinstance(r, ChainFailure))
    if not out:
        raise NoCandidates(f"all {n} design chains failed")
    return out


class NoCandidates(Exception):
    pass


def parse_rating(text: str) -> int | None:
    found = re.findall(r"-?\d+", text or "")
    return int(found[0]) if found else None


def ask_rating(candidate: DesignCandidate, client: LmClient, prompt: str | None = None) -> tuple[int, bool]:
    """Return ``(rating, clamped)``; out-of-range replies are re-asked once, then clamped."""
    if not candidate.renders:
        raise ValueError("candidate has no renders")
    prompt = prompt or candidate.plan.prompt
    chat = Chat(client)
    value = parse_rating(chat.ask(template("rate").substitute(prompt=prompt), candidate.renders))
    if value is not None and 1 <= value <= 5:
        return value, False
    value = parse_rating(chat.ask(template("rate_retry").template))
    if value is None:
        raise LmError("rating reply contains no integer")
    if 1 <= value <= 5:
        return value, False
    log.warning("rating %d out of range; clamping", value)
    return min(max(value, 1), 5), True


def rate_candidate(candidate: DesignCandidate, client: LmClient, prompt: str | None = None) -> int:
    return ask_rating(candidate, client, prompt)[0]


def _parse_choice(text: str) -> str | None:
    letters = set(re.findall(r"\b([AB])\b", text or ""))
    return letters.pop() if len(letters) == 1 else None


def compare_pair(a: DesignCandidate, b: DesignCandidate, client: LmClient, prompt: str) -> DesignCandidate:
    chat = Chat(client)
    choice = _parse_choice(chat.ask(template("compare").substitute(prompt=prompt), (a.renders[0], b.renders[0])))
    if choice is None:
        choice = _parse_choice(chat.ask(template("compare_retry").template))
    if choice is None:
        log.warning("no clear head-to-head answer; keeping the higher seed")
        return a
    return a if choice == "A" else b


def knockout(entrants: Sequence, play: Callable, record: list | None = None):
    """Single elimination over ``entrants`` given in seed order.

    An odd round gives the top seed a bye; the rest pair best against worst.
    """
    seed = {id(e): k for k, e in enumerate(entrants)}
    field_ = list(entrants)
    rnd = 0
    while len(field_) > 1:
        rnd += 1
        winners = []
        if len(field_) % 2:
            winners.append(field_[0])
            if record is not None:
                record.append({"round": rnd, "bye": seed[id(field_[0])]})
            field_ = field_[1:]
        for k in range(len(field_) // 2):
            a, b = field_[k], field_[-1 - k]
            w = play(a, b)
            winners.append(w)
            if record is not None:
                record.append({"round": rnd, "a": seed[id(a)], "b": seed[id(b)], "winner": seed[id(w)]})
        field_ = sorted(winners, key=lambda e: seed[id(e)])
    return field_[0]


def select_best(
    candidates: Sequence[DesignCandidate],
    client: LmClient,
    prompt: str | None = None,
    record: list | None = None,
) -> DesignCandidate:
    """Rate, keep the top-rated stable designs, then run a knockout bracket."""
    if not candidates:
        raise ValueError("need at least one candidate")
    if len(candidates) == 1:
        return candidates[0]
    prompt = prompt or candidates[0].plan.prompt
    pool = [c for c in candidates if c.stable] or list(candidates)
    if len(pool) == 1:
        return pool[0]
    for c in pool:
        if c.rating is None:
            c.rating, clamped = ask_rating(c, client, prompt)
            if clamped:
                c.flags.append("rating clamped")
    top = max(c.rating for c in pool)
    finalists = sorted((c for c in pool if c.rating >= top - RATING_WINDOW), key=lambda c: (-c.rating, c.plan.digest()))
    return knockout(finalists, lambda a, b: compare_pair(a, b, client, prompt), record)


def list_objects(n: int, client: LmClient) -> list[str]:
    if n < 1:
        raise ValueError("n must be positive")
    reply = Chat(client).ask(template("list_objects").substitute(n=n))
    out, seen = [], set()
    for line in reply.splitlines():
        item = re.sub(r"^\s*(?:[-*•]|\d+[.)])\s*", "", line).strip()
        if item and item.lower() not in seen:
            seen.add(item.lower())
            out.append(item)
    return out[:n]
