"""Shared helpers: program builders, scripted worlds, and run wrappers."""

from __future__ import annotations

from pathlib import Path

import pytest

from vidquery.dsl import parse, validate
from vidquery.executor import ExecConfig, Session
from vidquery.planner import PlannerConfig, plan_query
from vidquery.registry import (
    ErrorProfile,
    Registration,
    Registry,
    builtin_registry,
)
from vidquery.synth import ObjectScript, WorldSpec, write_world
from vidquery.trace_io import VideoMeta


def pytest_runtest_logreport(report):
    # one pass/fail line per acceptance criterion
    if report.when == "call" and "test_acceptance" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        verdict = "PASS" if report.passed else "FAIL"
        print(f"\n{name}: {verdict}")


def make_program(src: str, file: str = "test.vq"):
    return validate(parse(src, file=file), file=file)


def frozen_registry(extra: list[Registration] = ()) -> Registry:
    registry = builtin_registry()
    for reg in extra:
        registry.register(reg)
    registry.freeze()
    return registry


def specialized_red_car(miss_rate: float = 0.05, seed: int = 1234) -> Registration:
    return Registration(
        name="red_car",
        kind="detector",
        cost_units=20.0,
        params={
            "classes": ["car"],
            "requires_attrs": {"color": "red"},
            "specializes": "Car",
            "subsumes": {"color": "red"},
        },
        error_profile=ErrorProfile(miss_rate=miss_rate, seed=seed),
    )


CAR_PROGRAM = """
vobj Car {
  detector: "general_car"
  property color: stateless(impl="attr:color") intrinsic
  property center: stateless(impl="center", deps=[bbox])
  property direction: stateful(impl="direction", deps=[center], window=5)
  property speed: stateful(impl="speed", deps=[center], window=5)
}
"""


def meta_1000(frames: int, fps: float = 10.0, px_per_m: float = 10.0) -> VideoMeta:
    return VideoMeta(
        fps=fps, width=1000, height=1000, frame_count=frames, px_per_m=px_per_m
    )


def car(label, start, end, center, velocity=(0.0, 0.0), color="red", **kw):
    return ObjectScript(
        label=label,
        class_name="car",
        start_frame=start,
        end_frame=end,
        start_center=center,
        velocity=velocity,
        attrs={"color": color},
        **kw,
    )


@pytest.fixture
def world_dir(tmp_path):
    def materialize(world: WorldSpec) -> dict[str, Path]:
        return write_world(world, tmp_path / "world")

    return materialize


def run_single(
    vprog,
    query: str,
    trace_path,
    meta,
    registry=None,
    planner_config: PlannerConfig | None = None,
    exec_config: ExecConfig | None = None,
    result_store=None,
):
    """Plan one query, run it in a fresh session, return (outcome, stats, dag)."""
    registry = registry or frozen_registry()
    planner_config = planner_config or PlannerConfig()
    dag = plan_query(vprog, query, registry, planner_config, meta)
    session = Session(vprog, registry, meta, exec_config)
    outcome = session.run([dag], trace_path, result_store=result_store)[0]
    return outcome, session.stats, dag
