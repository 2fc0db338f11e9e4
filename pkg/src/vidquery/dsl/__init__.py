"""Declarative query language: parsing, validation, constraint flattening."""

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
    conjuncts,
    dump_ast,
    serialize_program,
    walk_refs,
)
from .parser import DslSyntaxError, parse
from .validate import (
    Diagnostic,
    FlatQuery,
    FlatVObjType,
    ValidationError,
    ValidatedProgram,
    effective_constraint,
    validate,
)

__all__ = [
    "And",
    "Compare",
    "Diagnostic",
    "DslSyntaxError",
    "DurationDecl",
    "FlatQuery",
    "FlatVObjType",
    "Not",
    "Or",
    "Program",
    "PropertyDef",
    "PropRef",
    "QueryDecl",
    "RelationDecl",
    "SpatialDecl",
    "TemporalDecl",
    "VObjTypeDecl",
    "ValidatedProgram",
    "ValidationError",
    "conjuncts",
    "dump_ast",
    "effective_constraint",
    "parse",
    "serialize_program",
    "validate",
    "walk_refs",
]
