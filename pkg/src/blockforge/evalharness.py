"""Noisy simulated assembly trials, the redesign ablation, and label ranking.

A trial drops every block at its planned (x, y) plus Gaussian noise. After
each drop, blocks that fail the stability check fall (together with whatever
rests on them) and are taken out of the build. A block counts as correct
when it is still standing within ``pos_threshold_mm`` of its noiseless pose
and rests on the same supports.
"""

from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_catalog, check_plans
from .catalog import AssemblyPlan, catalog_index
from .designer.client import LmClient, LmError
from .designer.pipeline import Chat, template
from .geometry import GROUND, PlacedBlock
from .redesign import RedesignParams, RedesignReport, redesign
from .statics import OutOfWorkspace, Scene, SimParams, check_scene_stability, place_block, scene_from_plan


class ProtocolError(LmError):
    """The model's ranking was not a permutation of the offered labels."""


@dataclass(frozen=True)
class NoiseModel:
    xy_sigma_mm: float = 3.0
    seed: int = 0
    truncate_sigmas: float = 3.0

    def __post_init__(self):
        if self.xy_sigma_mm < 0:
            raise ValueError("xy_sigma_mm must be non-negative")

    def offsets(self, n: int, trial_seed: int) -> np.ndarray:
        """``n`` isotropic (x, y) offsets with norm at most ``truncate_sigmas`` sigmas."""
        out = np.zeros((n, 2))
        if self.xy_sigma_mm == 0 or n == 0:
            return out
        rng = np.random.default_rng([self.seed, trial_seed])
        limit = self.truncate_sigmas * self.xy_sigma_mm
        for k in range(n):
            while True:
                d = rng.normal(0.0, self.xy_sigma_mm, 2)
                if np.hypot(*d) <= limit:
                    out[k] = d
                    break
        return out


@dataclass
class BlockOutcome:
    placed_correct: bool
    end_correct: bool
    fallen: bool
    pose_error_mm: float


@dataclass
class TrialMetrics:
    correct_at_placement: float
    correct_end_state: float
    full_completion: bool
    blocks: list[BlockOutcome] = field(default_factory=list)


def _supports_by_plan(scene: Scene, k: int, ids: Sequence[int]) -> frozenset:
    return frozenset(GROUND if s == GROUND else ids[s] for s in scene.supports(k))


def _matches(block: PlacedBlock, supports, ref: PlacedBlock, ref_supports, tol: float) -> tuple[bool, float]:
    err = float(np.linalg.norm(np.subtract(block.center_mm, ref.center_mm)))
    return err <= tol and supports == ref_supports, err


def simulate_trial(
    plan: AssemblyPlan,
    catalog,
    sim: SimParams = SimParams(),
    noise: NoiseModel = NoiseModel(),
    trial_seed: int = 0,
    reference: Scene | None = None,
) -> TrialMetrics:
    index = catalog if isinstance(catalog, Mapping) else catalog_index(catalog)
    n = len(plan.placements)
    if reference is None:
        reference = scene_from_plan(plan, index, sim)
    ref_supports = [reference.supports(k) for k in range(n)]
    offsets = noise.offsets(n, trial_seed)
    scene, ids = Scene(), []
    placed_ok = [False] * n
    fallen = [False] * n
    for i, p in enumerate(plan.placements):
        x, y = p.xy_mm
        block = PlacedBlock.create(index[p.block_id], p.moved((x + offsets[i, 0], y + offsets[i, 1])))
        try:
            scene = place_block(scene, block, sim)
        except OutOfWorkspace:
            fallen[i] = True  # the gripper cannot reach it; it never enters the build
            continue
        ids.append(i)
        k = len(ids) - 1
        ok, _ = _matches(scene.blocks[k], _supports_by_plan(scene, k, ids), reference.blocks[i], ref_supports[i], sim.pos_threshold_mm)
        scene, ids, down = _collapse(scene, ids, sim)
        for j in down:
            fallen[j] = True
        placed_ok[i] = ok and i not in down
    end_ok = [False] * n
    errors = [float("nan")] * n
    for k, i in enumerate(ids):
        end_ok[i], errors[i] = _matches(
            scene.blocks[k], _supports_by_plan(scene, k, ids), reference.blocks[i], ref_supports[i], sim.pos_threshold_mm
        )
    outcomes = [BlockOutcome(placed_ok[i], end_ok[i], fallen[i], errors[i]) for i in range(n)]
    frac = (lambda xs: sum(xs) / n) if n else (lambda xs: 1.0)
    return TrialMetrics(frac(placed_ok), frac(end_ok), all(end_ok), outcomes)


def _collapse(scene: Scene, ids: list[int], sim: SimParams):
    """Remove unstable blocks and everything resting on them until the scene holds."""
    down = set()
    while scene.blocks:
        report = check_scene_stability(scene, sim)
        if report.stable:
            break
        gone = scene.dependents(report.offender)
        down.update(ids[k] for k in gone)
        ids = [i for k, i in enumerate(ids) if k not in gone]
        scene = scene.without(gone, sim)
    return scene, ids, down


@dataclass
class ArmSummary:
    correct_at_placement: float
    correct_end_state: float
    full_completion: float
    trials: list[TrialMetrics] = field(default_factory=list, repr=False)

    @classmethod
    def of(cls, trials: Sequence[TrialMetrics]) -> "ArmSummary":
        return cls(
            float(np.mean([t.correct_at_placement for t in trials])),
            float(np.mean([t.correct_end_state for t in trials])),
            float(np.mean([t.full_completion for t in trials])),
            list(trials),
        )

    def to_dict(self) -> dict:
        return {
            "correct_at_placement": self.correct_at_placement,
            "correct_end_state": self.correct_end_state,
            "full_completion": self.full_completion,
        }


def run_trials(plan, catalog, sim=SimParams(), noise=NoiseModel(), n_trials=10) -> ArmSummary:
    if n_trials < 1:
        raise ValueError("n_trials must be at least 1")
    index = catalog if isinstance(catalog, Mapping) else catalog_index(catalog)
    reference = scene_from_plan(plan, index, sim)
    return ArmSummary.of([simulate_trial(plan, index, sim, noise, t, reference) for t in range(n_trials)])


@dataclass
class AblationResult:
    name: str
    n_blocks: int
    without_redesign: ArmSummary
    with_redesign: ArmSummary
    redesigned: AssemblyPlan
    report: RedesignReport

    @property
    def completion_ratio(self) -> float:
        base = self.without_redesign.full_completion
        return float("inf") if base == 0 else self.with_redesign.full_completion / base

    def to_dict(self) -> dict:
        ratio = self.completion_ratio
        return {
            "object": self.name,
            "n_blocks": self.n_blocks,
            "without_redesign": self.without_redesign.to_dict(),
            "with_redesign": self.with_redesign.to_dict(),
            "completion_ratio": None if ratio == float("inf") else ratio,
            "redesign_converged": self.report.converged,
        }


def run_ablation(
    plan: AssemblyPlan,
    catalog,
    sim: SimParams = SimParams(),
    noise: NoiseModel = NoiseModel(),
    n_trials: int = 10,
    params: RedesignParams = RedesignParams(),
    name: str | None = None,
    redesigned: tuple[AssemblyPlan, RedesignReport] | None = None,
) -> AblationResult:
    """Paired trials (same seeds) on the raw plan and on its redesign."""
    if n_trials < 1:
        raise ValueError("n_trials must be at least 1")
    index = catalog if isinstance(catalog, Mapping) else catalog_index(catalog)
    new_plan, report = redesigned if redesigned is not None else redesign(plan, index, params, sim)
    return AblationResult(
        name or plan.prompt,
        len(plan),
        run_trials(plan, index, sim, noise, n_trials),
        run_trials(new_plan, index, sim, noise, n_trials),
        new_plan,
        report,
    )


ABLATION_COLUMNS = [
    "object",
    "n_blocks",
    "correct_placed_without",
    "correct_placed_with",
    "end_state_without",
    "end_state_with",
    "full_completion_without",
    "full_completion_with",
]


def _pct(v: float) -> str:
    return f"{100 * v:.1f}"


def ablation_csv(results: Sequence[AblationResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ABLATION_COLUMNS)
    rows = []
    for r in results:
        a, b = r.without_redesign, r.with_redesign
        rows.append([a.correct_at_placement, b.correct_at_placement, a.correct_end_state, b.correct_end_state, a.full_completion, b.full_completion])
        w.writerow([r.name, r.n_blocks] + [_pct(v) for v in rows[-1]])
    if rows:
        w.writerow(["Average", ""] + [_pct(v) for v in np.mean(rows, axis=0)])
    return buf.getvalue()


def trials_csv(name: str, n_blocks: int, arm: ArmSummary) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["object", "n_blocks", "correct_placed", "end_state", "full_completion"])
    w.writerow([name, n_blocks, _pct(arm.correct_at_placement), _pct(arm.correct_end_state), _pct(arm.full_completion)])
    return buf.getvalue()


@dataclass
class RecogResult:
    n_labels: int
    top1: list[bool]
    rank_of_correct: list[int]

    @property
    def top1_accuracy(self) -> float:
        return sum(self.top1) / len(self.top1) if self.top1 else 0.0

    @property
    def avg_ranking(self) -> float:
        return float(np.mean(self.rank_of_correct)) if self.rank_of_correct else 0.0

    @property
    def relative_ranking(self) -> float:
        return self.avg_ranking / self.n_labels

    def to_dict(self) -> dict:
        return {
            "n_labels": self.n_labels,
            "top1_accuracy": self.top1_accuracy,
            "avg_ranking": self.avg_ranking,
            "relative_ranking": self.relative_ranking,
            "rank_of_correct": list(self.rank_of_correct),
        }


def recognizability_csv(results: Sequence[RecogResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["N", "top1_accuracy", "avg_ranking", "relative_ranking"])
    for r in results:
        w.writerow([r.n_labels, _pct(r.top1_accuracy), f"{r.avg_ranking:.2f}", _pct(r.relative_ranking)])
    return buf.getvalue()


def _norm(label: str) -> str:
    return re.sub(r"\s+", " ", label.strip().strip("\"'").lower())


def parse_ranking(text: str, labels: Sequence[str]) -> list[str] | None:
    """Ranked labels if ``text`` holds a permutation of ``labels``, else ``None``."""
    canon = {_norm(l): l for l in labels}
    items = None
    match = re.search(r"\[.*\]", text or "", re.S)
    if match:
        try:
            decoded = json.loads(match.group(0))
            if isinstance(decoded, list):
                items = [str(x) for x in decoded]
        except json.JSONDecodeError:
            pass
    if items is None:
        items = [re.sub(r"^\s*(?:[-*•]|\d+[.)])\s*", "", ln) for ln in (text or "").splitlines()]
        items = [ln for ln in items if ln.strip()]
    ranked = [_norm(x) for x in items]
    if len(ranked) != len(canon) or set(ranked) != set(canon):
        return None
    return [canon[r] for r in ranked]


def sample_labels(correct: str, pool: Sequence[str], n: int, seed: int, design_index: int) -> list[str]:
    """Correct label plus ``n - 1`` distractors without replacement, shuffled."""
    others = sorted({l for l in pool if _norm(l) != _norm(correct)})
    if n - 1 > len(others):
        raise ValueError(f"label pool too small for n={n}")
    rng = np.random.default_rng([seed, design_index])
    picks = [others[k] for k in rng.choice(len(others), size=n - 1, replace=False)] if n > 1 else []
    labels = [correct] + picks
    return [labels[k] for k in rng.permutation(n)]


def recognizability(
    designs: Sequence[tuple[bytes, str]],
    label_pool: Sequence[str],
    n: int,
    client: LmClient,
    seed: int = 0,
) -> RecogResult:
    """Ask the model to rank ``n`` labels for each render; record where the true label lands."""
    pool_norm = {_norm(l) for l in label_pool}
    if n < 1 or n > len(pool_norm):
        raise ValueError(f"n must be between 1 and the pool size ({len(pool_norm)})")
    top1, ranks = [], []
    for d, (image, correct) in enumerate(designs):
        if _norm(correct) not in pool_norm:
            raise ValueError(f"label pool lacks correct label {correct!r}")
        labels = sample_labels(correct, label_pool, n, seed, d)
        listing = "\n".join(f"- {l}" for l in labels)
        chat = Chat(client)
        ranked = parse_ranking(chat.ask(template("recognize").substitute(labels=listing), (image,)), labels)
        if ranked is None:
            ranked = parse_ranking(chat.ask(template("recognize_retry").substitute(labels=", ".join(labels))), labels)
        if ranked is None:
            raise ProtocolError(f"design {d}: ranking is not a permutation of the labels")
        rank = ranked.index(correct) + 1
        ranks.append(rank)
        top1.append(rank == 1)
    return RecogResult(n, top1, ranks)


class ConstructabilityEvaluator(BaseEstimator):
    """Score plans by simulated full-completion rate under placement noise.

    Parameters
    ----------
    catalog : list of BlockSpec or path
    xy_sigma_mm : float, default=3.0
    n_trials : int, default=10
    random_state : int, default=0
    sim_params : SimParams, optional
    """

    def __init__(self, catalog=None, *, xy_sigma_mm=3.0, n_trials=10, random_state=0, sim_params=None):
        self.catalog = catalog
        self.xy_sigma_mm = xy_sigma_mm
        self.n_trials = n_trials
        self.random_state = random_state
        self.sim_params = sim_params

    def fit(self, X=None, y=None):
        if int(self.n_trials) < 1:
            raise ValueError("n_trials must be at least 1")
        self.catalog_ = catalog_index(check_catalog(self.catalog))
        self.sim_ = self.sim_params if self.sim_params is not None else SimParams()
        self.noise_ = NoiseModel(self.xy_sigma_mm, int(self.random_state))
        return self

    def evaluate(self, X) -> list[ArmSummary]:
        check_is_fitted(self, "noise_")
        plans = check_plans(X, list(self.catalog_.values()), self.sim_.workspace_half_mm)
        return [run_trials(p, self.catalog_, self.sim_, self.noise_, int(self.n_trials)) for p in plans]

    def score(self, X, y=None) -> float:
        return float(np.mean([arm.full_completion for arm in self.evaluate(X)]))
