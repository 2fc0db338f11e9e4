"""Semantic validation: inheritance flattening, dependency ordering, and the
composition rules for higher-order queries."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

from .ast import (
    And,
    Compare,
    DurationDecl,
    Not,
    Or,
    Program,
    PropertyDef,
    PropRef,
    QueryDecl,
    RelationDecl,
    SpatialDecl,
    TemporalDecl,
    VObjTypeDecl,
    conjoin,
    conjuncts,
    walk_refs,
)

SCENE_TYPE = "Scene"
BUILTIN_PROPS = {"bbox", "frame_rate"}


@dataclass(frozen=True)
class Diagnostic:
    message: str
    line: int = 0
    col: int = 0
    file: str = "<source>"

    def __str__(self) -> str:
        return f"{self.file}:{self.line}:{self.col}: {self.message}"


class ValidationError(Exception):
    def __init__(self, diagnostics: list[Diagnostic]):
        super().__init__("\n".join(str(d) for d in diagnostics))
        self.diagnostics = diagnostics


@dataclass
class FlatVObjType:
    """A VObj type with inheritance flattened (child overrides parent)."""

    name: str
    ancestors: list[str]  # self first, root last
    detector: Optional[str]
    props: dict[str, PropertyDef]
    prop_order: list[str]  # dependency-respecting order
    feeders: frozenset[str]  # deps of stateful properties (history sources)
    window_bounds: dict[str, int]  # feeder -> largest declared window


@dataclass
class FlatQuery:
    name: str
    kind: str  # basic | duration | spatial | temporal
    bindings: list[tuple[str, str]] = field(default_factory=list)
    frame_pred: Optional[Any] = None
    video_pred: Optional[Any] = None
    frame_output: list[PropRef] = field(default_factory=list)
    video_output: Optional[tuple[str, str]] = None
    # duration
    base: Optional[str] = None
    min_frames: Optional[int] = None
    min_seconds: Optional[float] = None
    gap_tolerance: int = 0
    # spatial
    first: Optional[str] = None
    second: Optional[str] = None
    relation: Optional[str] = None
    relation_pred: Optional[Any] = None
    # temporal
    then: Optional[str] = None
    max_interval_frames: Optional[int] = None
    max_interval_seconds: Optional[float] = None


@dataclass
class ValidatedProgram:
    program: Program
    types: dict[str, FlatVObjType]
    relations: dict[str, RelationDecl]
    queries: dict[str, FlatQuery]
    query_order: list[str]


def _chain(decls: dict[str, Any], name: str) -> Optional[list[str]]:
    """Inheritance chain self-first, or None on a cycle/missing parent."""
    chain, cur, seen = [], name, set()
    while cur is not None:
        if cur in seen or cur not in decls:
            return None
        seen.add(cur)
        chain.append(cur)
        cur = decls[cur].parent
    return chain


def _flatten_vobj(
    program: Program, decl: VObjTypeDecl, diags: list[Diagnostic], file: str
) -> Optional[FlatVObjType]:
    vobjs = program.vobjs
    chain = _chain(vobjs, decl.name)
    if chain is None:
        loc = decl.loc
        diags.append(Diagnostic(
            f"vobj {decl.name!r}: undeclared parent or inheritance cycle",
            loc.line if loc else 0, loc.col if loc else 0, file,
        ))
        return None
    props: dict[str, PropertyDef] = {}
    detector = None
    for tname in reversed(chain):  # root first so children override
        t = vobjs[tname]
        if t.detector:
            detector = t.detector
        for p in t.properties:
            props[p.name] = p
    # per-property checks
    ok = True
    for p in props.values():
        loc = p.loc
        where = (loc.line if loc else 0, loc.col if loc else 0)
        if p.intrinsic and p.kind != "stateless":
            diags.append(Diagnostic(
                f"{decl.name}.{p.name}: intrinsic properties must be stateless",
                *where, file))
            ok = False
        if p.kind == "stateful":
            if p.window is None or p.window < 1:
                diags.append(Diagnostic(
                    f"{decl.name}.{p.name}: stateful property needs window >= 1",
                    *where, file))
                ok = False
            if len(p.deps) != 1:
                diags.append(Diagnostic(
                    f"{decl.name}.{p.name}: stateful property takes exactly one "
                    f"dependency", *where, file))
                ok = False
        for dep in p.deps:
            if dep not in props and dep not in BUILTIN_PROPS:
                diags.append(Diagnostic(
                    f"{decl.name}.{p.name}: unknown dependency {dep!r}",
                    *where, file))
                ok = False
    if not ok:
        return None
    # dependency order (declaration-order DFS); detect cycles
    order: list[str] = []
    state: dict[str, int] = {}

    def visit(name: str, stack: list[str]) -> bool:
        if name in BUILTIN_PROPS or state.get(name) == 2:
            return True
        if state.get(name) == 1:
            cycle = " -> ".join(stack[stack.index(name):] + [name])
            diags.append(Diagnostic(
                f"{decl.name}: property dependency cycle {cycle}", 0, 0, file))
            return False
        state[name] = 1
        for dep in props[name].deps:
            if not visit(dep, stack + [name]):
                return False
        state[name] = 2
        order.append(name)
        return True

    for p in props.values():
        if not visit(p.name, []):
            return None
    feeders = set()
    bounds: dict[str, int] = {}
    for p in props.values():
        if p.kind == "stateful":
            dep = p.deps[0]
            feeders.add(dep)
            bounds[dep] = max(bounds.get(dep, 0), p.window or 1)
    return FlatVObjType(
        name=decl.name,
        ancestors=chain,
        detector=detector,
        props=props,
        prop_order=order,
        feeders=frozenset(feeders),
        window_bounds=bounds,
    )


def _lit_is_numeric(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _check_pred(
    expr,
    bindings: dict[str, str],
    vp_types: dict[str, FlatVObjType],
    relations: dict[str, RelationDecl],
    owner: str,
    diags: list[Diagnostic],
    file: str,
) -> None:
    for ref in walk_refs(expr):
        if ref.relation is not None:
            rel = relations.get(ref.relation)
            if rel is None:
                diags.append(Diagnostic(
                    f"{owner}: undeclared relation {ref.relation!r}", 0, 0, file))
                continue
            for arg in ref.args or ():
                if arg not in bindings:
                    diags.append(Diagnostic(
                        f"{owner}: unknown binding {arg!r} in relation "
                        f"{ref.relation}", 0, 0, file))
            if ref.prop not in {p.name for p in rel.properties}:
                diags.append(Diagnostic(
                    f"{owner}: relation {ref.relation} has no property "
                    f"{ref.prop!r}", 0, 0, file))
            continue
        if ref.binding not in bindings:
            diags.append(Diagnostic(
                f"{owner}: unknown binding {ref.binding!r}", 0, 0, file))
            continue
        btype = bindings[ref.binding]
        if btype == SCENE_TYPE:
            continue  # scene properties are trace channels, resolved at runtime
        ftype = vp_types.get(btype)
        if ftype is None:
            continue  # binding-type error reported elsewhere
        if ref.prop not in ftype.props and ref.prop not in BUILTIN_PROPS:
            diags.append(Diagnostic(
                f"{owner}: {btype} has no property {ref.prop!r}", 0, 0, file))
    # literal typing for ordered comparisons
    def check_ops(e):
        if isinstance(e, Compare):
            if e.op in ("<", "<=", ">", ">=") and not _lit_is_numeric(e.literal):
                diags.append(Diagnostic(
                    f"{owner}: ordered comparison needs a numeric literal, "
                    f"got {e.literal!r}", 0, 0, file))
            if e.op == "in" and not isinstance(e.literal, tuple):
                diags.append(Diagnostic(
                    f"{owner}: 'in' needs a literal list", 0, 0, file))
        elif isinstance(e, (And, Or)):
            for item in e.items:
                check_ops(item)
        elif isinstance(e, Not):
            check_ops(e.item)

    if expr is not None:
        check_ops(expr)


def _conjunct_bindings(conj, relations) -> tuple[set[str], bool]:
    """Bindings referenced by one conjunct, and whether it uses a relation."""
    names, uses_rel = set(), False
    for ref in walk_refs(conj):
        if ref.relation is not None:
            uses_rel = True
            names.update(ref.args or ())
        else:
            names.add(ref.binding)
    return names, uses_rel


def effective_constraint(program: Program, query_name: str):
    """Conjunction of the query's frame constraint with all its ancestors'."""
    queries = program.queries
    chain = _chain(queries, query_name)
    if chain is None:
        raise KeyError(query_name)
    return conjoin([
        queries[name].frame_constraint
        for name in reversed(chain)
        if queries[name].frame_constraint is not None
    ])


def _flatten_query(
    program: Program, decl: QueryDecl, diags: list[Diagnostic], file: str
) -> Optional[FlatQuery]:
    queries = program.queries
    chain = _chain(queries, decl.name)
    if chain is None:
        diags.append(Diagnostic(
            f"query {decl.name!r}: undeclared parent or inheritance cycle",
            0, 0, file))
        return None
    bindings: dict[str, str] = {}
    frame_parts, video_parts = [], []
    frame_output: list[PropRef] = []
    video_output = None
    for qname in reversed(chain):
        q = queries[qname]
        for bname, btype in q.bindings:
            if bname in bindings and bindings[bname] != btype:
                diags.append(Diagnostic(
                    f"query {decl.name}: binding {bname!r} redeclared as "
                    f"{btype} (was {bindings[bname]})", 0, 0, file))
            bindings[bname] = btype
        if q.frame_constraint is not None:
            frame_parts.append(q.frame_constraint)
        if q.video_constraint is not None:
            video_parts.append(q.video_constraint)
        if q.frame_output:
            frame_output = q.frame_output
        if q.video_output is not None:
            video_output = q.video_output
    return FlatQuery(
        name=decl.name,
        kind="basic",
        bindings=sorted(bindings.items(), key=lambda kv: _binding_rank(decl, chain, queries, kv[0])),
        frame_pred=conjoin(frame_parts),
        video_pred=conjoin(video_parts),
        frame_output=frame_output,
        video_output=video_output,
    )


def _binding_rank(decl, chain, queries, bname) -> tuple:
    # preserve declaration order: ancestors first, then own additions
    for depth, qname in enumerate(reversed(chain)):
        for idx, (name, _t) in enumerate(queries[qname].bindings):
            if name == bname:
                return (depth, idx)
    return (len(chain), 0)


def validate(program: Program, file: str = "<source>") -> ValidatedProgram:
    """Check every declaration; raises ValidationError with all diagnostics."""
    diags: list[Diagnostic] = []
    types: dict[str, FlatVObjType] = {}
    for decl in program.decls:
        if isinstance(decl, VObjTypeDecl):
            if decl.name == SCENE_TYPE:
                diags.append(Diagnostic(
                    f"{SCENE_TYPE!r} is a reserved type and cannot be declared",
                    decl.loc.line if decl.loc else 0,
                    decl.loc.col if decl.loc else 0, file))
                continue
            flat = _flatten_vobj(program, decl, diags, file)
            if flat is not None:
                types[decl.name] = flat

    relations = program.relations
    for rel in relations.values():
        if len(rel.participants) < 2:
            diags.append(Diagnostic(
                f"relation {rel.name!r}: arity must be >= 2", 0, 0, file))
        for part in rel.participants:
            if part not in program.vobjs and part != SCENE_TYPE:
                diags.append(Diagnostic(
                    f"relation {rel.name!r}: undeclared participant {part!r}",
                    0, 0, file))

    queries: dict[str, FlatQuery] = {}
    query_order: list[str] = []

    basic_decls = [d for d in program.decls if isinstance(d, QueryDecl)]
    for decl in basic_decls:
        for bname, btype in decl.bindings:
            if btype not in program.vobjs and btype != SCENE_TYPE:
                diags.append(Diagnostic(
                    f"query {decl.name}: undeclared VObj type {btype!r} for "
                    f"binding {bname!r}", 0, 0, file))
        flat = _flatten_query(program, decl, diags, file)
        if flat is None:
            continue
        bmap = dict(flat.bindings)
        if flat.frame_pred is None and flat.video_pred is None:
            diags.append(Diagnostic(
                f"query {decl.name}: needs a frame_constraint or "
                f"video_constraint", 0, 0, file))
        _check_pred(flat.frame_pred, bmap, types, relations, decl.name, diags, file)
        _check_pred(flat.video_pred, bmap, types, relations, decl.name, diags, file)
        for conj in conjuncts(flat.frame_pred):
            names, uses_rel = _conjunct_bindings(conj, relations)
            vobj_names = {n for n in names if bmap.get(n) != SCENE_TYPE}
            if not uses_rel and len(vobj_names) > 1:
                diags.append(Diagnostic(
                    f"query {decl.name}: a non-relation conjunct may reference "
                    f"only one binding", 0, 0, file))
        for ref in flat.frame_output:
            if ref.binding not in bmap:
                diags.append(Diagnostic(
                    f"query {decl.name}: frame_output references unknown "
                    f"binding {ref.binding!r}", 0, 0, file))
            else:
                ftype = types.get(bmap[ref.binding])
                if (ftype is not None and ref.prop not in ftype.props
                        and ref.prop not in BUILTIN_PROPS):
                    diags.append(Diagnostic(
                        f"query {decl.name}: frame_output references unknown "
                        f"property {ref.prop!r}", 0, 0, file))
        if flat.video_output is not None:
            kind, binding = flat.video_output
            if kind != "count_distinct":
                diags.append(Diagnostic(
                    f"query {decl.name}: unsupported aggregation {kind!r}",
                    0, 0, file))
            if binding not in bmap:
                diags.append(Diagnostic(
                    f"query {decl.name}: video_output references unknown "
                    f"binding {binding!r}", 0, 0, file))
        queries[decl.name] = flat
        query_order.append(decl.name)

    def query_kind(name: str) -> Optional[str]:
        if name in queries:
            return queries[name].kind
        return None

    hoq_decls = [
        d for d in program.decls
        if isinstance(d, (DurationDecl, SpatialDecl, TemporalDecl))
    ]
    # multiple passes so higher-order queries can reference each other in
    # declaration order (temporal over temporal)
    for decl in hoq_decls:
        if isinstance(decl, SpatialDecl):
            ok = True
            for sub in (decl.first, decl.second):
                kind = query_kind(sub)
                if kind is None:
                    diags.append(Diagnostic(
                        f"spatial query {decl.name}: undeclared query {sub!r}",
                        0, 0, file))
                    ok = False
                elif kind != "basic":
                    diags.append(Diagnostic(
                        f"spatial query {decl.name}: violates Rule 1, "
                        f"{sub!r} is a {kind} query (only basic queries "
                        f"are allowed)", 0, 0, file))
                    ok = False
            if decl.relation not in relations:
                diags.append(Diagnostic(
                    f"spatial query {decl.name}: undeclared relation "
                    f"{decl.relation!r}", 0, 0, file))
                ok = False
            if not ok:
                continue
            q1, q2 = queries[decl.first], queries[decl.second]
            for sub in (q1, q2):
                if len(sub.bindings) != 1:
                    diags.append(Diagnostic(
                        f"spatial query {decl.name}: {sub.name!r} must bind "
                        f"exactly one VObj", 0, 0, file))
                    ok = False
            if not ok:
                continue
            bindings = q1.bindings + q2.bindings
            if q1.bindings[0][0] == q2.bindings[0][0]:
                diags.append(Diagnostic(
                    f"spatial query {decl.name}: sub-query bindings share the "
                    f"name {q1.bindings[0][0]!r}", 0, 0, file))
                continue
            rel_pred = decl.predicate
            _check_pred(rel_pred, dict(bindings), types, relations,
                        decl.name, diags, file)
            queries[decl.name] = FlatQuery(
                name=decl.name,
                kind="spatial",
                bindings=bindings,
                frame_pred=conjoin([q1.frame_pred, q2.frame_pred]),
                first=decl.first,
                second=decl.second,
                relation=decl.relation,
                relation_pred=rel_pred,
                frame_output=q1.frame_output + q2.frame_output,
            )
            query_order.append(decl.name)
        elif isinstance(decl, DurationDecl):
            kind = query_kind(decl.base)
            if kind is None:
                diags.append(Diagnostic(
                    f"duration query {decl.name}: undeclared query "
                    f"{decl.base!r}", 0, 0, file))
                continue
            if kind not in ("basic", "spatial"):
                diags.append(Diagnostic(
                    f"duration query {decl.name}: violates Rule 2, "
                    f"{decl.base!r} is a {kind} query (only basic or spatial "
                    f"queries are allowed)", 0, 0, file))
                continue
            if decl.min_frames is None and decl.min_seconds is None:
                diags.append(Diagnostic(
                    f"duration query {decl.name}: needs min_frames or "
                    f"min_seconds", 0, 0, file))
                continue
            if decl.gap_tolerance < 0:
                diags.append(Diagnostic(
                    f"duration query {decl.name}: gap_tolerance must be >= 0",
                    0, 0, file))
                continue
            base = queries[decl.base]
            queries[decl.name] = FlatQuery(
                name=decl.name,
                kind="duration",
                bindings=base.bindings,
                base=decl.base,
                min_frames=decl.min_frames,
                min_seconds=decl.min_seconds,
                gap_tolerance=decl.gap_tolerance,
            )
            query_order.append(decl.name)
        elif isinstance(decl, TemporalDecl):
            ok = True
            for sub in (decl.first, decl.then):
                if query_kind(sub) is None:
                    diags.append(Diagnostic(
                        f"temporal query {decl.name}: undeclared query "
                        f"{sub!r}", 0, 0, file))
                    ok = False
            if decl.max_interval_frames is None and decl.max_interval_seconds is None:
                diags.append(Diagnostic(
                    f"temporal query {decl.name}: needs max_interval_frames "
                    f"or max_interval_seconds", 0, 0, file))
                ok = False
            if not ok:
                continue
            queries[decl.name] = FlatQuery(
                name=decl.name,
                kind="temporal",
                first=decl.first,
                then=decl.then,
                max_interval_frames=decl.max_interval_frames,
                max_interval_seconds=decl.max_interval_seconds,
            )
            query_order.append(decl.name)

    if diags:
        raise ValidationError(diags)
    return ValidatedProgram(
        program=program,
        types=types,
        relations=relations,
        queries=queries,
        query_order=query_order,
    )
