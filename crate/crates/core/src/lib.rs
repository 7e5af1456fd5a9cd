//! Typed model transformations over structured models.
//!
//! Models are ordered trees of objects with cross references, typed by a
//! metamodel with structural (duck-typed) subtyping. Programs are written in
//! a small language of focussed model actions; a static checker guarantees
//! that well-typed programs map conformant models to conformant models,
//! while run-time conditions such as dangling references are trapped by the
//! interpreter.

mod json;

pub mod check;
pub mod fixtures;
pub mod interp;
pub mod metamodel;
pub mod model;
pub mod syntax;
pub mod testkit;
pub mod typing;

pub use check::{typecheck_act, typecheck_expr, typecheck_program, Diagnostic, TypeVerdict};
pub use interp::{
    apply_deferred, eval_expr, run_act, run_first, run_program, ActConfig, Config, DeferredAction,
    Env, EvalError, Interpreter, RtValue, RunError, TraceEntry, TrappedError, TrappedKind,
};
pub use metamodel::{
    build_metamodel, class_type, default_props, meet, opposite, BaseType, ClassRef, EndKind,
    FieldType, MetamodelDoc, MetamodelError, ModelType, ObjectType, ReferenceEnd, ScalarType,
};
pub use model::{
    check_valid, extract, insert, insert_at, isolated, locations, walk_set, Extraction, Location,
    ModelError, ObjectNode, Oid, Payload, PropertyBinding, StructuredModel, ValidityReport, Value,
    Violation, ViolationKind,
};
pub use syntax::{format, parse, ActStmt, Expr, FreeVars, Measure, ParseError, Stmt};
pub use typing::{
    check_conformance, conforms, infer_type, model_subtype, refines, subtype_of, Term, Type,
    TypeEnvOids, TypeEnvVars, TypeError,
};
