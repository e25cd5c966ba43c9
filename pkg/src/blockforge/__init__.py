"""Block-assembly design toolkit.

Generate block structures with a chat model, check them with a quasi-static
drop-and-settle simulator, nudge fragile placements apart, and measure how
reliably the result can be built under placement noise.
"""

from .catalog import (
    AssemblyPlan,
    BlockSpec,
    Orientation,
    ParseError,
    Placement,
    ValidationError,
    load_catalog,
    load_plan,
    save_plan,
    validate_plan,
)
from .evalharness import ConstructabilityEvaluator, NoiseModel, run_ablation, simulate_trial
from .redesign import PerturbationRedesign, RedesignParams, redesign
from .render import Axis, RenderConfig, export_mesh, render_ortho
from .statics import Scene, SimParams, check_scene_stability, settle_plan

__version__ = "0.1.0"

__all__ = [
    "AssemblyPlan",
    "Axis",
    "BlockSpec",
    "ConstructabilityEvaluator",
    "NoiseModel",
    "Orientation",
    "ParseError",
    "PerturbationRedesign",
    "Placement",
    "RedesignParams",
    "RenderConfig",
    "Scene",
    "SimParams",
    "ValidationError",
    "check_scene_stability",
    "export_mesh",
    "load_catalog",
    "load_plan",
    "redesign",
    "render_ortho",
    "run_ablation",
    "save_plan",
    "settle_plan",
    "simulate_trial",
    "validate_plan",
]
