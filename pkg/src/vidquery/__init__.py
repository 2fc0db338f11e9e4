"""Declarative video-object query engine over detection traces."""

from .datamodel import UNDEFINED, FrameGraph, Track, VObjInstance, is_defined
from .dsl import parse, validate
from .executor import ExecConfig, QueryOutcome, ResultStore, Session, run_plans
from .planner import PlanDag, PlannerConfig, plan_query
from .registry import Registry, builtin_registry, load_manifest
from .synth import ObjectScript, WorldSpec, generate, write_world
from .trace_io import VideoMeta, open_trace
from .tracker import SortTracker, TrackerConfig

__version__ = "0.1.0"

__all__ = [
    "ExecConfig",
    "FrameGraph",
    "ObjectScript",
    "PlanDag",
    "PlannerConfig",
    "QueryOutcome",
    "Registry",
    "ResultStore",
    "Session",
    "SortTracker",
    "Track",
    "TrackerConfig",
    "UNDEFINED",
    "VObjInstance",
    "VideoMeta",
    "WorldSpec",
    "builtin_registry",
    "generate",
    "is_defined",
    "load_manifest",
    "open_trace",
    "parse",
    "plan_query",
    "run_plans",
    "validate",
    "write_world",
    "__version__",
]
