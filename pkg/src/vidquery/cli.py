"""Command-line interface: validate, explain, profile, run, and synth.

Exit codes: 1 for parse/validation errors, 2 for planning errors, 3 for
runtime errors.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path
from typing import Optional

import click

from .dsl import DslSyntaxError, ValidationError, parse, validate
from .executor import (
    ExecConfig,
    ExecError,
    ResultStore,
    run_plans,
    serialize_outcome,
)
from .operators import InternalError, PlanLinkError
from .planner import (
    PlanError,
    PlanLoadError,
    PlannerConfig,
    ProfilingError,
    enumerate_alternatives,
    explain_dot,
    load_plan,
    plan_query,
    profile as profile_plans,
    save_plan,
    select_plan,
)
from .registry import ConfigurationError, RegistryError, builtin_registry, load_manifest
from .synth import load_world, write_world
from .trace_io import TraceError, load_meta
from .tracker import TrackerConfig

EXIT_VALIDATION = 1
EXIT_PLAN = 2
EXIT_RUNTIME = 3


def _fail(code: int, message: str):
    click.echo(message, err=True)
    sys.exit(code)


def _load_program(path: str):
    try:
        source = Path(path).read_text()
    except OSError as exc:
        _fail(EXIT_VALIDATION, f"cannot read program: {exc}")
    try:
        return validate(parse(source, file=path), file=path)
    except (DslSyntaxError, ValidationError) as exc:
        _fail(EXIT_VALIDATION, str(exc))


def _load_registry(manifest: Optional[str]):
    registry = builtin_registry()
    if manifest:
        try:
            registry = load_manifest(manifest, registry)
        except (OSError, json.JSONDecodeError, RegistryError, ValueError) as exc:
            _fail(EXIT_VALIDATION, f"bad registry manifest: {exc}")
    registry.freeze()
    return registry


def _load_meta(path: Optional[str]):
    if path is None:
        return None
    try:
        return load_meta(path)
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        _fail(EXIT_VALIDATION, f"bad meta file: {exc}")


def _planner_config(**kwargs) -> PlannerConfig:
    return PlannerConfig(tracker=TrackerConfig(), **kwargs)


@click.group()
def main():
    """Declarative video-object queries over detection traces."""


@main.command()
@click.option("--program", "-p", required=True, help="Query program file.")
@click.option("--registry", "manifest", default=None, help="Registry manifest JSON.")
def validate_cmd(program, manifest):
    """Parse and validate a program; exits non-zero on diagnostics."""
    vprog = _load_program(program)
    _load_registry(manifest)
    names = ", ".join(vprog.query_order) or "none"
    click.echo(f"ok: {len(vprog.types)} types, {len(vprog.queries)} queries ({names})")


main.add_command(validate_cmd, name="validate")


@main.command()
@click.option("--program", "-p", required=True)
@click.option("--query", "-q", required=True)
@click.option("--registry", "manifest", default=None)
@click.option("--meta", "meta_path", default=None)
@click.option("--no-pullup", is_flag=True)
@click.option("--no-fusion", is_flag=True)
def explain(program, query, manifest, meta_path, no_pullup, no_fusion):
    """Print the planned operator DAG in DOT form."""
    vprog = _load_program(program)
    registry = _load_registry(manifest)
    meta = _load_meta(meta_path)
    config = _planner_config(
        enable_pullup=not no_pullup, enable_fusion=not no_fusion
    )
    try:
        dag = plan_query(vprog, query, registry, config, meta)
    except PlanError as exc:
        _fail(EXIT_PLAN, f"planning failed: {exc}")
    click.echo(f"// plan {dag.plan_id}")
    click.echo(explain_dot(dag))


@main.command(name="profile")
@click.option("--program", "-p", required=True)
@click.option("--query", "-q", required=True)
@click.option("--trace", required=True, help="Canary trace file.")
@click.option("--meta", "meta_path", required=True)
@click.option("--registry", "manifest", default=None)
@click.option("--canary-frames", default=0, show_default=True,
              help="0 profiles the whole canary trace.")
@click.option("--accuracy-target", default=0.9, show_default=True)
@click.option("--batch-size", default=16, show_default=True)
@click.option("--save-plan", "save_path", default=None,
              help="Write the selected plan to this file.")
def profile_cmd(program, query, trace, meta_path, manifest, canary_frames,
                accuracy_target, batch_size, save_path):
    """Enumerate plan alternatives, profile them on a canary, and select."""
    vprog = _load_program(program)
    registry = _load_registry(manifest)
    meta = _load_meta(meta_path)
    config = _planner_config(
        accuracy_target=accuracy_target,
        canary_frames=canary_frames,
        batch_size=batch_size,
    )
    try:
        dags = enumerate_alternatives(vprog, query, registry, config, meta)
        reports = profile_plans(dags, trace, meta, vprog, registry, config)
        selected, fell_back = select_plan(dags, reports, config)
    except PlanError as exc:
        _fail(EXIT_PLAN, f"planning failed: {exc}")
    except (ProfilingError, TraceError, PlanLinkError, ConfigurationError,
            ExecError, InternalError, OSError) as exc:
        _fail(EXIT_RUNTIME, f"profiling failed: {exc}")
    if fell_back:
        click.echo(
            f"warning: no plan met accuracy target {accuracy_target}; "
            f"using the reference plan", err=True,
        )
    out = {
        "query": query,
        "accuracy_target": accuracy_target,
        "selected": selected.plan_id,
        "fallback": fell_back,
        "candidates": [
            {
                "plan_id": r.plan_id,
                "f1": r.f1,
                "cost_units": r.cost_units,
                "op_count": r.op_count,
                "breakdown": r.breakdown,
            }
            for r in reports
        ],
    }
    click.echo(json.dumps(out, sort_keys=True, indent=2))
    if save_path:
        save_plan(selected, save_path)


@main.command()
@click.option("--program", "-p", required=True)
@click.option("--query", "-q", "queries", multiple=True,
              help="Repeatable; defaults to every declared query.")
@click.option("--trace", required=True)
@click.option("--meta", "meta_path", required=True)
@click.option("--registry", "manifest", default=None)
@click.option("--batch-size", default=16, show_default=True)
@click.option("--accuracy-target", default=0.9, show_default=True)
@click.option("--plan-file", default=None,
              help="Execute a saved plan instead of planning.")
@click.option("--results", "results_dir", default=None,
              help="Result-cache directory; identical (trace, plan) pairs "
                   "are served from cache.")
@click.option("--out", "out_path", default=None,
              help="Write results to this file instead of stdout.")
@click.option("--no-memo", is_flag=True)
@click.option("--no-lazy", is_flag=True)
@click.option("--no-pullup", is_flag=True)
@click.option("--no-fusion", is_flag=True)
def run(program, queries, trace, meta_path, manifest, batch_size,
        accuracy_target, plan_file, results_dir, out_path,
        no_memo, no_lazy, no_pullup, no_fusion):
    """Plan and execute queries over a trace."""
    vprog = _load_program(program)
    registry = _load_registry(manifest)
    meta = _load_meta(meta_path)
    names = list(queries) or list(vprog.query_order)
    for name in names:
        if name not in vprog.queries:
            _fail(EXIT_VALIDATION, f"unknown query {name!r}")
    config = _planner_config(
        accuracy_target=accuracy_target,
        enable_pullup=not no_pullup,
        enable_fusion=not no_fusion,
        memo_enabled=not no_memo,
        batch_size=batch_size,
    )
    try:
        if plan_file:
            dags = [load_plan(plan_file, registry)]
        else:
            dags = [
                plan_query(vprog, name, registry, config, meta)
                for name in names
            ]
    except PlanLoadError as exc:
        _fail(EXIT_PLAN, f"cannot load plan: {exc}")
    except PlanError as exc:
        _fail(EXIT_PLAN, f"planning failed: {exc}")
    store = ResultStore(results_dir) if results_dir else None
    exec_config = ExecConfig(
        batch_size=batch_size, lazy=not no_lazy, memo=not no_memo
    )
    try:
        outcomes, stats = run_plans(
            vprog, dags, trace, registry, meta, exec_config, store
        )
    except (TraceError, PlanLinkError, ConfigurationError, ExecError,
            InternalError, OSError) as exc:
        _fail(EXIT_RUNTIME, f"execution failed: {exc}")
    text = "".join(serialize_outcome(o) for o in outcomes)
    if out_path:
        Path(out_path).write_text(text)
    else:
        click.echo(text, nl=False)
    click.echo(
        f"cost_units={stats.cost_units:g} "
        f"op_invocations={stats.total_op_invocations}",
        err=True,
    )


@main.command()
@click.option("--world", "-w", required=True, help="World description JSON.")
@click.option("--out", "-o", "out_dir", required=True)
def synth(world, out_dir):
    """Render a scripted world into trace, meta, and ground-truth files."""
    try:
        spec = load_world(world)
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        _fail(EXIT_VALIDATION, f"bad world file: {exc}")
    paths = write_world(spec, out_dir)
    for name, path in sorted(paths.items()):
        click.echo(f"{name}: {path}")


if __name__ == "__main__":
    main()
