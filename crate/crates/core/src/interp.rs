//! Big-step evaluation of programs. First-level statements work on the
//! whole model; a snapshot extracts one object and runs second-level actions
//! against its property set, queueing the opposite-end updates that are
//! applied once the object is put back.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::mem;

use serde::Serialize;
use thiserror::Error;

use crate::metamodel::{default_props, EndKind, ModelType, ReferenceEnd};
use crate::model::{
    self, check_valid, extract, insert_at, payload_of, payload_of_mut, referenced_from,
    resolve_mut, subtree_locations, Location, ObjectNode, Oid, Payload, PropertyBinding,
    StructuredModel, Value,
};
use crate::syntax::{ActStmt, Expr, FreeVars, Measure, Stmt};

/// Run-time value of a variable.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RtValue {
    Scalar(Value),
    Ref(Oid),
}

impl fmt::Display for RtValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RtValue::Scalar(v) => write!(f, "{v}"),
            RtValue::Ref(o) => write!(f, "oid({o})"),
        }
    }
}

/// η: variables, object locations, object classes and fresh-name counters.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Env {
    pub vars: BTreeMap<String, RtValue>,
    pub locs: BTreeMap<Oid, Location>,
    pub classes: BTreeMap<Oid, String>,
    pub fresh: BTreeMap<String, u64>,
}

impl Env {
    /// Initial environment for `model`, seeded with `vars`.
    pub fn for_model(
        model: &StructuredModel,
        vars: BTreeMap<String, RtValue>,
    ) -> Result<Env, model::ModelError> {
        let locs = model::locations(&model.roots)?;
        let mut classes = BTreeMap::new();
        for o in locs.keys() {
            let c = model
                .typing
                .get(o)
                .ok_or_else(|| model::ModelError::Untyped(o.clone()))?;
            classes.insert(o.clone(), c.clone());
        }
        Ok(Env {
            vars,
            locs,
            classes,
            fresh: BTreeMap::new(),
        })
    }

    /// Next unused identifier for an instance of `class`: `<class>$<n>`.
    pub fn fresh_oid(&mut self, class: &str) -> Oid {
        let n = self.fresh.entry(class.to_owned()).or_insert(0);
        loop {
            let cand = Oid::new(format!("{class}${n}"));
            *n += 1;
            if !self.locs.contains_key(&cand) && !self.classes.contains_key(&cand) {
                return cand;
            }
        }
    }

    fn place(&mut self, node: &ObjectNode, at: Location) {
        for (o, l) in subtree_locations(node, at) {
            self.locs.insert(o, l);
        }
    }

    fn forget(&mut self, node: &ObjectNode) {
        for o in node.subtree_oids() {
            self.locs.remove(&o);
            self.classes.remove(&o);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DeferredAction {
    Set {
        target: Oid,
        prop: String,
        value: Oid,
    },
    Unset {
        target: Oid,
        prop: String,
        value: Oid,
    },
}

/// First-level configuration `η | os | s`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Config {
    pub env: Env,
    pub model: Vec<ObjectNode>,
    pub stmt: Stmt,
}

/// Second-level configuration `η | os | l | ps | as | s2`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActConfig {
    pub env: Env,
    pub model: Vec<ObjectNode>,
    pub focus: Location,
    pub props: Vec<PropertyBinding>,
    pub deferred: Vec<DeferredAction>,
    pub stmt: ActStmt,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum TrappedKind {
    DanglingReference,
    OppositeToContainment,
    NotIsolated,
    ReferenceNotFound,
    HoistViolation,
    NotARoot,
}

/// Run-time error detected by the interpreter before it could corrupt the
/// model. `rule` is the stable error code.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{rule} ({kind:?}): {context}")]
pub struct TrappedError {
    pub kind: TrappedKind,
    pub rule: &'static str,
    pub context: String,
}

impl TrappedError {
    pub fn code(&self) -> &'static str {
        self.rule
    }
}

/// Every error rule the interpreter can raise.
pub const ERROR_RULES: &[&str] = &[
    "E-RefSetError",
    "E-RefSetErrorCmt",
    "E-RefUnsetError1",
    "E-RefUnsetError2",
    "E-RefUnsetErrorCmt",
    "E-CmtSetError",
    "E-CmtSetErrorHoist",
    "E-CmtUnsetErrorRef1",
    "E-CmtUnsetErrorRef2",
    "E-CmtUnsetErrorIso",
    "E-ActSnapshotErrorRef",
    "E-FmaDeleteRootErrorIso",
    "E-FmaDeleteRootErrorRef",
    "E-FmaSnapshotErrorRef",
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error(transparent)]
    Trapped(#[from] TrappedError),
    #[error("unbound variable {0:?}")]
    UnboundVariable(String),
    /// No rule applies: only reachable by ill-typed programs.
    #[error("evaluation stuck: {0}")]
    Stuck(String),
    #[error("interpreter invariant violated: {0}")]
    Internal(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RunError {
    #[error("input model rejected: {0}")]
    Precondition(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl RunError {
    pub fn trapped(&self) -> Option<&TrappedError> {
        match self {
            RunError::Eval(EvalError::Trapped(t)) => Some(t),
            _ => None,
        }
    }
}

/// One rule application: rule name, ξ of the statement it concludes, ξ of
/// the conclusion it is a premise of, and the focus in effect.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceEntry {
    pub depth: usize,
    pub rule: &'static str,
    pub xi: u64,
    pub parent_xi: Option<u64>,
    pub focus: Option<Location>,
    /// Expression evaluations are axioms and sit outside the measure order.
    pub expr: bool,
}

impl fmt::Display for TraceEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for _ in 0..self.depth {
            f.write_str("  ")?;
        }
        write!(f, "{} xi={}", self.rule, self.xi)?;
        match self.parent_xi {
            Some(p) => write!(f, " parent={p}")?,
            None => f.write_str(" parent=-")?,
        }
        match &self.focus {
            Some(l) => write!(f, " focus={l}"),
            None => f.write_str(" focus=-"),
        }
    }
}

fn trap(kind: TrappedKind, rule: &'static str, context: String) -> EvalError {
    EvalError::Trapped(TrappedError {
        kind,
        rule,
        context,
    })
}

fn internal(msg: impl fmt::Display) -> EvalError {
    EvalError::Internal(msg.to_string())
}

fn props_reference(targets: &BTreeSet<Oid>, props: &[PropertyBinding]) -> bool {
    props.iter().any(|b| match &b.payload {
        Payload::Refs(is) => is.iter().any(|o| targets.contains(o)),
        Payload::Cmts(os) => referenced_from(targets, os),
        Payload::Attr(_) => false,
    })
}

pub fn eval_expr(env: &Env, e: &Expr) -> Result<RtValue, EvalError> {
    match e {
        Expr::Lit(v) => Ok(RtValue::Scalar(v.clone())),
        Expr::Var(x) => env
            .vars
            .get(x)
            .cloned()
            .ok_or_else(|| EvalError::UnboundVariable(x.clone())),
        Expr::Oid(o) => Ok(RtValue::Ref(o.clone())),
    }
}

/// Apply deferred opposite-end updates in queue order. Actions mentioning an
/// object deleted since they were queued are dropped.
pub fn apply_deferred(
    actions: &[DeferredAction],
    env: &Env,
    mut model: Vec<ObjectNode>,
) -> Result<Vec<ObjectNode>, EvalError> {
    for a in actions {
        let (DeferredAction::Set {
            target,
            prop,
            value,
        }
        | DeferredAction::Unset {
            target,
            prop,
            value,
        }) = a;
        let (Some(loc), true) = (env.locs.get(target), env.locs.contains_key(value)) else {
            continue;
        };
        let node = resolve_mut(&mut model, loc)
            .ok_or_else(|| internal(format!("deferred target {loc} unresolved")))?;
        let Some(Payload::Refs(is)) = node.payload_mut(prop) else {
            return Err(internal(format!(
                "deferred target {target} has no reference {prop}"
            )));
        };
        match a {
            DeferredAction::Set { .. } => {
                if !is.contains(value) {
                    is.push(value.clone());
                }
            }
            DeferredAction::Unset { .. } => is.retain(|o| o != value),
        }
    }
    Ok(model)
}

/// Evaluator holding the model type, an optional trace, and the stack of
/// enclosing foci of nested snapshots.
pub struct Interpreter<'a> {
    mm: &'a ModelType,
    trace: Option<Vec<TraceEntry>>,
    depth: usize,
    frames: Vec<ObjectNode>,
    raised: bool,
}

impl<'a> Interpreter<'a> {
    pub fn new(mm: &'a ModelType) -> Self {
        Interpreter {
            mm,
            trace: None,
            depth: 0,
            frames: Vec::new(),
            raised: false,
        }
    }

    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    pub fn trace(&self) -> &[TraceEntry] {
        self.trace.as_deref().unwrap_or(&[])
    }

    pub fn take_trace(&mut self) -> Vec<TraceEntry> {
        self.trace.as_mut().map(mem::take).unwrap_or_default()
    }

    /// Run `program` on a valid `model`.
    pub fn run(
        &mut self,
        model: &StructuredModel,
        program: &Stmt,
        vars: BTreeMap<String, RtValue>,
    ) -> Result<StructuredModel, RunError> {
        let report =
            check_valid(model, self.mm).map_err(|e| RunError::Precondition(e.to_string()))?;
        if let Some(v) = report.violations.first() {
            return Err(RunError::Precondition(format!(
                "{:?} at {}.{} -> {}",
                v.kind, v.owner, v.property, v.target
            )));
        }
        let unbound: Vec<String> = program
            .free_vars()
            .into_iter()
            .filter(|x| !vars.contains_key(x))
            .collect();
        if !unbound.is_empty() {
            return Err(RunError::Precondition(format!(
                "program is not closed: {}",
                unbound.join(", ")
            )));
        }
        let env = Env::for_model(model, vars).map_err(|e| RunError::Precondition(e.to_string()))?;
        let out = self.run_first(Config {
            env,
            model: model.roots.clone(),
            stmt: program.clone(),
        })?;
        Ok(StructuredModel {
            roots: out.model,
            typing: out.env.classes,
        })
    }

    pub fn run_first(&mut self, k: Config) -> Result<Config, EvalError> {
        let Config {
            mut env,
            mut model,
            stmt,
        } = k;
        self.frames.clear();
        self.first(&mut env, &mut model, &stmt, None)?;
        Ok(Config {
            env,
            model,
            stmt: Stmt::Unit,
        })
    }

    pub fn run_act(&mut self, mut q: ActConfig) -> Result<ActConfig, EvalError> {
        let stmt = mem::replace(&mut q.stmt, ActStmt::Unit);
        self.frames.clear();
        self.act(&mut q, &stmt, None)?;
        Ok(q)
    }

    fn open(
        &mut self,
        xi: u64,
        parent: Option<u64>,
        focus: Option<&Location>,
        expr: bool,
    ) -> Option<usize> {
        let depth = self.depth;
        let t = self.trace.as_mut()?;
        t.push(TraceEntry {
            depth,
            rule: "",
            xi,
            parent_xi: parent,
            focus: focus.cloned(),
            expr,
        });
        Some(t.len() - 1)
    }

    fn close<T>(
        &mut self,
        slot: Option<usize>,
        r: Result<(T, &'static str), EvalError>,
    ) -> Result<T, EvalError> {
        let (out, rule) = match r {
            Ok((v, rule)) => (Ok(v), rule),
            Err(e) => {
                let rule = match &e {
                    EvalError::Trapped(t) if self.raised => t.rule,
                    EvalError::Trapped(_) => "E-Propagate",
                    _ => "E-Stuck",
                };
                self.raised = false;
                (Err(e), rule)
            }
        };
        if let (Some(i), Some(t)) = (slot, self.trace.as_mut()) {
            t[i].rule = rule;
        }
        out
    }

    fn raise(&mut self, kind: TrappedKind, rule: &'static str, context: String) -> EvalError {
        self.raised = true;
        trap(kind, rule, context)
    }

    fn expr(
        &mut self,
        env: &Env,
        e: &Expr,
        parent: u64,
        focus: Option<&Location>,
    ) -> Result<RtValue, EvalError> {
        let slot = self.open(e.measure(), Some(parent), focus, true);
        let rule = match e {
            Expr::Lit(_) => "E-Value",
            Expr::Var(_) => "E-Var",
            Expr::Oid(_) => "E-Ref",
        };
        let r = eval_expr(env, e).map(|v| (v, rule));
        self.close(slot, r)
    }

    fn oid_of(
        &mut self,
        env: &Env,
        x: &str,
        parent: u64,
        focus: Option<&Location>,
    ) -> Result<Oid, EvalError> {
        match self.expr(env, &Expr::Var(x.to_owned()), parent, focus)? {
            RtValue::Ref(o) => Ok(o),
            RtValue::Scalar(v) => Err(EvalError::Stuck(format!(
                "variable {x:?} holds {v}, not an object"
            ))),
        }
    }

    // -----------------------------------------------------------------
    // First level

    fn first(
        &mut self,
        env: &mut Env,
        os: &mut Vec<ObjectNode>,
        s: &Stmt,
        parent: Option<u64>,
    ) -> Result<(), EvalError> {
        if *s == Stmt::Unit {
            return Ok(());
        }
        let xi = s.measure();
        let slot = self.open(xi, parent, None, false);
        self.depth += 1;
        let r = self.first_rule(env, os, s, xi).map(|rule| ((), rule));
        self.depth -= 1;
        self.close(slot, r)
    }

    fn first_rule(
        &mut self,
        env: &mut Env,
        os: &mut Vec<ObjectNode>,
        s: &Stmt,
        xi: u64,
    ) -> Result<&'static str, EvalError> {
        match s {
            Stmt::Unit => Ok("E-FmaUnit"),
            Stmt::Seq(a, b) => {
                if **a == Stmt::Unit {
                    self.first(env, os, b, Some(xi))?;
                    return Ok("E-FmaNext");
                }
                self.first(env, os, a, Some(xi))?;
                self.first(env, os, b, Some(xi))?;
                Ok("E-FmaSeq")
            }
            Stmt::Let(x, e, body) => {
                let v = self.expr(env, e, xi, None)?;
                let saved = env.vars.clone();
                env.vars.insert(x.clone(), v);
                self.first(env, os, body, Some(xi))?;
                env.vars = saved;
                Ok("E-FmaLet")
            }
            Stmt::LetCreate(x, c, body) => {
                let o = self.create_root(env, os, c, Some(xi))?;
                let saved = env.vars.clone();
                env.vars.insert(x.clone(), RtValue::Ref(o));
                self.first(env, os, body, Some(xi))?;
                env.vars = saved;
                Ok("E-FmaLetCreate")
            }
            Stmt::CreateRoot(c) => {
                self.create_root_here(env, os, c)?;
                Ok("E-FmaCreateRoot")
            }
            Stmt::DeleteRoot(x) => {
                let o = self.oid_of(env, x, xi, None)?;
                let idx = match env.locs.get(&o) {
                    Some(l) if l.is_root() => os.iter().position(|n| n.oid == o),
                    _ => None,
                };
                let Some(idx) = idx else {
                    return Err(self.raise(
                        TrappedKind::NotARoot,
                        "E-FmaDeleteRootErrorRef",
                        format!("{o} is not mapped to a root location"),
                    ));
                };
                let targets: BTreeSet<Oid> = os[idx].subtree_oids().into_iter().collect();
                if referenced_from(&targets, os.iter()) {
                    return Err(self.raise(
                        TrappedKind::NotIsolated,
                        "E-FmaDeleteRootErrorIso",
                        format!("root {o} is referenced"),
                    ));
                }
                let node = os.remove(idx);
                env.forget(&node);
                Ok("E-FmaDeleteRoot")
            }
            Stmt::Snapshot(x, body) => {
                let o = self.oid_of(env, x, xi, None)?;
                let Some(l) = env.locs.get(&o).cloned() else {
                    return Err(self.raise(
                        TrappedKind::DanglingReference,
                        "E-FmaSnapshotErrorRef",
                        format!("{o} is not mapped to a location"),
                    ));
                };
                let ex = extract(os, &l).map_err(internal)?;
                let mut q = ActConfig {
                    env: mem::take(env),
                    model: ex.remainder,
                    focus: l,
                    props: ex.object.props,
                    deferred: Vec::new(),
                    stmt: ActStmt::Unit,
                };
                self.act(&mut q, body, Some(xi))?;
                let rebuilt = ObjectNode {
                    oid: o,
                    props: q.props,
                };
                let restored = insert_at(&q.model, rebuilt, &q.focus, ex.slot).map_err(internal)?;
                *env = q.env;
                *os = apply_deferred(&q.deferred, env, restored)?;
                Ok("E-FmaSnapshot")
            }
        }
    }

    fn create_root(
        &mut self,
        env: &mut Env,
        os: &mut Vec<ObjectNode>,
        c: &str,
        parent: Option<u64>,
    ) -> Result<Oid, EvalError> {
        let slot = self.open(1, parent, None, false);
        let r = self
            .create_root_here(env, os, c)
            .map(|o| (o, "E-FmaCreateRoot"));
        self.close(slot, r)
    }

    fn create_root_here(
        &mut self,
        env: &mut Env,
        os: &mut Vec<ObjectNode>,
        c: &str,
    ) -> Result<Oid, EvalError> {
        let props = default_props(self.mm, c, None).map_err(|e| EvalError::Stuck(e.to_string()))?;
        let o = env.fresh_oid(c);
        env.locs.insert(o.clone(), Location::root(o.clone()));
        env.classes.insert(o.clone(), c.to_owned());
        os.push(ObjectNode {
            oid: o.clone(),
            props,
        });
        Ok(o)
    }

    // -----------------------------------------------------------------
    // Second level

    fn act(
        &mut self,
        q: &mut ActConfig,
        s: &ActStmt,
        parent: Option<u64>,
    ) -> Result<(), EvalError> {
        if *s == ActStmt::Unit {
            return Ok(());
        }
        let xi = s.measure();
        let slot = self.open(xi, parent, Some(&q.focus), false);
        self.depth += 1;
        let r = self.act_rule(q, s, xi).map(|rule| ((), rule));
        self.depth -= 1;
        self.close(slot, r)
    }

    fn focus_class(&self, q: &ActConfig) -> Result<String, EvalError> {
        q.env
            .classes
            .get(&q.focus.target)
            .cloned()
            .ok_or_else(|| internal(format!("focus {} has no class", q.focus)))
    }

    fn opposite_of(
        &self,
        q: &ActConfig,
        kind: EndKind,
        p: &str,
    ) -> Result<Option<ReferenceEnd>, EvalError> {
        let c = self.focus_class(q)?;
        Ok(self.mm.opposite(&ReferenceEnd::new(kind, c, p)))
    }

    fn act_rule(
        &mut self,
        q: &mut ActConfig,
        s: &ActStmt,
        xi: u64,
    ) -> Result<&'static str, EvalError> {
        match s {
            ActStmt::Unit => Ok("E-ActUnit"),
            ActStmt::Seq(a, b) => {
                if **a == ActStmt::Unit {
                    self.act(q, b, Some(xi))?;
                    return Ok("E-ActNext");
                }
                self.act(q, a, Some(xi))?;
                self.act(q, b, Some(xi))?;
                Ok("E-ActSeq")
            }
            ActStmt::Let(x, e, body) => {
                let v = self.expr(&q.env, e, xi, Some(&q.focus.clone()))?;
                let saved = q.env.vars.clone();
                q.env.vars.insert(x.clone(), v);
                self.act(q, body, Some(xi))?;
                q.env.vars = saved;
                Ok("E-ActLet")
            }
            ActStmt::LetCreate(x, p, c, body) => {
                let slot = self.open(1, Some(xi), Some(&q.focus), false);
                let r = self.create(q, p, c);
                let o = self.close(slot, r)?;
                let saved = q.env.vars.clone();
                q.env.vars.insert(x.clone(), RtValue::Ref(o));
                self.act(q, body, Some(xi))?;
                q.env.vars = saved;
                Ok("E-ActLetCreate")
            }
            ActStmt::Create(p, c) => self.create(q, p, c).map(|(_, rule)| rule),
            ActStmt::Set(p, e) => {
                let focus = q.focus.clone();
                let v = self.expr(&q.env, e, xi, Some(&focus))?;
                match (payload_of(&q.props, p), v) {
                    (Some(Payload::Attr(_)), RtValue::Scalar(v)) => {
                        *payload_of_mut(&mut q.props, p).expect("present") = Payload::Attr(v);
                        Ok("E-AttSet")
                    }
                    (Some(Payload::Refs(_)), RtValue::Ref(o)) => self.ref_set(q, p, o),
                    (Some(Payload::Cmts(_)), RtValue::Ref(o)) => self.cmt_set(q, p, o),
                    (None, _) => Err(EvalError::Stuck(format!(
                        "focus {focus} has no property {p:?}"
                    ))),
                    (Some(_), v) => Err(EvalError::Stuck(format!(
                        "cannot set {p:?} of {focus} to {v}"
                    ))),
                }
            }
            ActStmt::SetCmt(p, x) => {
                let focus = q.focus.clone();
                let o = self.oid_of(&q.env, x, xi, Some(&focus))?;
                match payload_of(&q.props, p) {
                    Some(Payload::Cmts(_)) => self.cmt_set(q, p, o),
                    _ => Err(EvalError::Stuck(format!(
                        "focus {focus} has no containment {p:?}"
                    ))),
                }
            }
            ActStmt::UnsetAttr(p) => match payload_of_mut(&mut q.props, p) {
                Some(Payload::Attr(v)) => {
                    *v = v.base_type().default_value();
                    Ok("E-AttUnset")
                }
                _ => Err(EvalError::Stuck(format!(
                    "focus {} has no attribute {p:?}",
                    q.focus
                ))),
            },
            ActStmt::Unset(p, x) => {
                let focus = q.focus.clone();
                let o = self.oid_of(&q.env, x, xi, Some(&focus))?;
                match payload_of(&q.props, p) {
                    Some(Payload::Refs(_)) => self.ref_unset(q, p, o),
                    Some(Payload::Cmts(_)) => self.cmt_unset(q, p, o),
                    _ => Err(EvalError::Stuck(format!(
                        "focus {focus} has no reference or containment {p:?}"
                    ))),
                }
            }
            ActStmt::Snapshot(x, body) => {
                let focus = q.focus.clone();
                let o = self.oid_of(&q.env, x, xi, Some(&focus))?;
                let Some(inner) = q.env.locs.get(&o).cloned() else {
                    return Err(self.raise(
                        TrappedKind::DanglingReference,
                        "E-ActSnapshotErrorRef",
                        format!("{o} is not mapped to a location"),
                    ));
                };
                let Some(rel) = inner.relative_to(&focus) else {
                    return Err(self.raise(
                        TrappedKind::DanglingReference,
                        "E-ActSnapshotErrorRef",
                        format!("{inner} is not inside the focus {focus}"),
                    ));
                };
                let host = [ObjectNode {
                    oid: focus.target.clone(),
                    props: mem::take(&mut q.props),
                }];
                let ex = extract(&host, &rel).map_err(internal)?;
                let frame = ex
                    .remainder
                    .into_iter()
                    .next()
                    .ok_or_else(|| internal("focus vanished"))?;
                self.frames.push(frame);
                q.focus = inner;
                q.props = ex.object.props;
                let r = self.act(q, body, Some(xi));
                let frame = self.frames.pop().expect("pushed above");
                r?;
                let rebuilt = ObjectNode {
                    oid: o,
                    props: mem::take(&mut q.props),
                };
                let mut host = insert_at(&[frame], rebuilt, &rel, ex.slot).map_err(internal)?;
                q.props = host.pop().ok_or_else(|| internal("focus vanished"))?.props;
                q.focus = focus;
                Ok("E-ActSnapshot")
            }
        }
    }

    fn create(
        &mut self,
        q: &mut ActConfig,
        p: &str,
        c: &str,
    ) -> Result<(Oid, &'static str), EvalError> {
        if !matches!(payload_of(&q.props, p), Some(Payload::Cmts(_))) {
            return Err(EvalError::Stuck(format!(
                "focus {} has no containment {p:?}",
                q.focus
            )));
        }
        let opp = self.opposite_of(q, EndKind::Cmt, p)?;
        let container = q.focus.target.clone();
        let props = default_props(
            self.mm,
            c,
            opp.as_ref().map(|e| (&container, e.prop.as_str())),
        )
        .map_err(|e| EvalError::Stuck(e.to_string()))?;
        let o = q.env.fresh_oid(c);
        let Some(Payload::Cmts(children)) = payload_of_mut(&mut q.props, p) else {
            unreachable!()
        };
        children.push(ObjectNode {
            oid: o.clone(),
            props,
        });
        q.env.locs.insert(o.clone(), q.focus.child(p, o.clone()));
        q.env.classes.insert(o.clone(), c.to_owned());
        match opp {
            Some(e) => {
                q.deferred.push(DeferredAction::Set {
                    target: o.clone(),
                    prop: e.prop,
                    value: container,
                });
                Ok((o, "E-CreateBi"))
            }
            None => Ok((o, "E-Create")),
        }
    }

    fn ref_set(&mut self, q: &mut ActConfig, p: &str, o: Oid) -> Result<&'static str, EvalError> {
        if !q.env.locs.contains_key(&o) {
            return Err(self.raise(
                TrappedKind::DanglingReference,
                "E-RefSetError",
                format!("{o} is not mapped to a location"),
            ));
        }
        let opp = self.opposite_of(q, EndKind::Ref, p)?;
        if let Some(e) = &opp {
            if e.kind == EndKind::Cmt {
                return Err(self.raise(
                    TrappedKind::OppositeToContainment,
                    "E-RefSetErrorCmt",
                    format!("{p:?} is the opposite of containment {e}"),
                ));
            }
        }
        let Some(Payload::Refs(is)) = payload_of_mut(&mut q.props, p) else {
            unreachable!()
        };
        let fresh = !is.contains(&o);
        if fresh {
            is.push(o.clone());
        }
        match opp {
            Some(e) => {
                if fresh {
                    q.deferred.push(DeferredAction::Set {
                        target: o,
                        prop: e.prop,
                        value: q.focus.target.clone(),
                    });
                }
                Ok("E-RefBiSet")
            }
            None => Ok("E-RefUniSet"),
        }
    }

    fn ref_unset(&mut self, q: &mut ActConfig, p: &str, o: Oid) -> Result<&'static str, EvalError> {
        if !q.env.locs.contains_key(&o) {
            return Err(self.raise(
                TrappedKind::DanglingReference,
                "E-RefUnsetError1",
                format!("{o} is not mapped to a location"),
            ));
        }
        let opp = self.opposite_of(q, EndKind::Ref, p)?;
        if let Some(e) = &opp {
            if e.kind == EndKind::Cmt {
                return Err(self.raise(
                    TrappedKind::OppositeToContainment,
                    "E-RefUnsetErrorCmt",
                    format!("{p:?} is the opposite of containment {e}"),
                ));
            }
        }
        let Some(Payload::Refs(is)) = payload_of_mut(&mut q.props, p) else {
            unreachable!()
        };
        let Some(i) = is.iter().position(|x| *x == o) else {
            return Err(self.raise(
                TrappedKind::ReferenceNotFound,
                "E-RefUnsetError2",
                format!("{p:?} does not hold {o}"),
            ));
        };
        is.remove(i);
        match opp {
            Some(e) => {
                q.deferred.push(DeferredAction::Unset {
                    target: o,
                    prop: e.prop,
                    value: q.focus.target.clone(),
                });
                Ok("E-RefBiUnset")
            }
            None => Ok("E-RefUniUnset"),
        }
    }

    fn cmt_set(&mut self, q: &mut ActConfig, p: &str, o: Oid) -> Result<&'static str, EvalError> {
        let Some(from) = q.env.locs.get(&o).cloned() else {
            return Err(self.raise(
                TrappedKind::DanglingReference,
                "E-CmtSetError",
                format!("{o} is not mapped to a location"),
            ));
        };
        let opp = self.opposite_of(q, EndKind::Cmt, p)?;
        let rule = if opp.is_some() {
            "E-CmtBiSet"
        } else {
            "E-CmtUniSet"
        };
        let Some(Payload::Cmts(children)) = payload_of(&q.props, p) else {
            unreachable!()
        };
        if children.iter().any(|c| c.oid == o) {
            return Ok(rule);
        }
        let outer = self.frames.first().map_or(&q.focus.target, |f| &f.oid);
        if from.passes_through(outer) || q.focus.passes_through(&o) {
            return Err(self.raise(
                TrappedKind::HoistViolation,
                "E-CmtSetErrorHoist",
                format!("{from} cannot be moved into {}", q.focus),
            ));
        }
        let old_opp = match (from.container(), from.container_prop()) {
            (Some(c), Some(cp)) => {
                let class = q
                    .env
                    .classes
                    .get(c)
                    .ok_or_else(|| internal(format!("container {c} has no class")))?;
                self.mm
                    .opposite(&ReferenceEnd::containment(class.clone(), cp))
                    .map(|e| (c.clone(), e))
            }
            _ => None,
        };
        let ex = extract(&q.model, &from).map_err(internal)?;
        q.model = ex.remainder;
        q.env.place(&ex.object, q.focus.child(p, o.clone()));
        let Some(Payload::Cmts(children)) = payload_of_mut(&mut q.props, p) else {
            unreachable!()
        };
        children.push(ex.object);
        if let Some(e) = opp {
            q.deferred.push(DeferredAction::Set {
                target: o.clone(),
                prop: e.prop,
                value: q.focus.target.clone(),
            });
        }
        if let Some((c, e)) = old_opp {
            q.deferred.push(DeferredAction::Unset {
                target: o,
                prop: e.prop,
                value: c,
            });
        }
        Ok(rule)
    }

    fn cmt_unset(&mut self, q: &mut ActConfig, p: &str, o: Oid) -> Result<&'static str, EvalError> {
        if !q.env.locs.contains_key(&o) {
            return Err(self.raise(
                TrappedKind::DanglingReference,
                "E-CmtUnsetErrorRef1",
                format!("{o} is not mapped to a location"),
            ));
        }
        let Some(Payload::Cmts(children)) = payload_of(&q.props, p) else {
            unreachable!()
        };
        let Some(i) = children.iter().position(|c| c.oid == o) else {
            return Err(self.raise(
                TrappedKind::ReferenceNotFound,
                "E-CmtUnsetErrorRef2",
                format!("{p:?} does not contain {o}"),
            ));
        };
        let targets: BTreeSet<Oid> = children[i].subtree_oids().into_iter().collect();
        if referenced_from(&targets, q.model.iter().chain(self.frames.iter()))
            || props_reference(&targets, &q.props)
        {
            return Err(self.raise(
                TrappedKind::NotIsolated,
                "E-CmtUnsetErrorIso",
                format!("{o} or its content is referenced"),
            ));
        }
        let Some(Payload::Cmts(children)) = payload_of_mut(&mut q.props, p) else {
            unreachable!()
        };
        let node = children.remove(i);
        q.env.forget(&node);
        Ok("E-CmtUnset")
    }
}

/// Evaluate a first-level configuration.
pub fn run_first(k: Config, mm: &ModelType) -> Result<Config, EvalError> {
    Interpreter::new(mm).run_first(k)
}

/// Evaluate a second-level configuration.
pub fn run_act(q: ActConfig, mm: &ModelType) -> Result<ActConfig, EvalError> {
    Interpreter::new(mm).run_act(q)
}

/// Run `program` against `model` with `initial_vars` bound.
pub fn run_program(
    model: &StructuredModel,
    mm: &ModelType,
    program: &Stmt,
    initial_vars: BTreeMap<String, RtValue>,
) -> Result<StructuredModel, RunError> {
    Interpreter::new(mm).run(model, program, initial_vars)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::resolve;
    use crate::syntax::parse;
    use crate::typing::conforms;

    fn run(
        model: &StructuredModel,
        mm: &ModelType,
        src: &str,
    ) -> Result<StructuredModel, RunError> {
        run_program(model, mm, &parse(src).unwrap(), BTreeMap::new())
    }

    fn code(r: Result<StructuredModel, RunError>) -> &'static str {
        r.unwrap_err().trapped().expect("trapped error").code()
    }

    #[test]
    fn expressions() {
        let mut env = Env::default();
        assert_eq!(
            eval_expr(&env, &Expr::Lit(Value::Int(5))),
            Ok(RtValue::Scalar(Value::Int(5)))
        );
        env.vars.insert("x".into(), RtValue::Ref("a".into()));
        assert_eq!(
            eval_expr(&env, &Expr::Var("x".into())),
            Ok(RtValue::Ref("a".into()))
        );
        assert_eq!(
            eval_expr(&env, &Expr::Oid("3".into())),
            Ok(RtValue::Ref("3".into()))
        );
        assert_eq!(
            eval_expr(&env, &Expr::Var("y".into())),
            Err(EvalError::UnboundVariable("y".into()))
        );
    }

    #[test]
    fn pull_up_field() {
        let cd = fixtures::class_diagram_mm();
        let out = run(&fixtures::pull_up_model(), &cd, fixtures::PULL_UP_PROGRAM).unwrap();
        assert_eq!(out, fixtures::pull_up_expected());
        assert!(conforms(&cd, &out));
        assert!(check_valid(&out, &cd).unwrap().ok());
    }

    #[test]
    fn unit_program_is_identity() {
        let cd = fixtures::class_diagram_mm();
        let m = fixtures::pull_up_model();
        assert_eq!(run(&m, &cd, "()").unwrap(), m);
    }

    #[test]
    fn create_root_uses_class_counter() {
        let cd = fixtures::class_diagram_mm();
        let out = run(&fixtures::pull_up_model(), &cd, "create(Package)").unwrap();
        let last = out.roots.last().unwrap();
        assert_eq!(last.oid, Oid::from("Package$0"));
        assert_eq!(
            last.props,
            vec![
                PropertyBinding::new("classes", Payload::Cmts(vec![])),
                PropertyBinding::new("name", Payload::Attr(Value::Str(String::new()))),
            ]
        );
        assert_eq!(out.class_of(&"Package$0".into()), Some("Package"));
    }

    #[test]
    fn attribute_set_leaves_deferred_alone() {
        let cd = fixtures::class_diagram_mm();
        let m = fixtures::pull_up_model();
        let env = Env::for_model(&m, BTreeMap::new()).unwrap();
        let focus = Location::root("0").child("classes", "1");
        let ex = extract(&m.roots, &focus).unwrap();
        let q = ActConfig {
            env,
            model: ex.remainder,
            focus,
            props: ex.object.props,
            deferred: vec![],
            stmt: ActStmt::Set("name".into(), Expr::Lit(Value::Str("Vehicle".into()))),
        };
        let out = run_act(q, &cd).unwrap();
        assert_eq!(
            payload_of(&out.props, "name"),
            Some(&Payload::Attr(Value::Str("Vehicle".into())))
        );
        assert!(out.deferred.is_empty());
        assert_eq!(out.stmt, ActStmt::Unit);
    }

    #[test]
    fn bidirectional_reference_set_defers_opposite() {
        let g = fixtures::graph_mm();
        let m = fixtures::graph_model();
        let env = Env::for_model(
            &m,
            BTreeMap::from([("x".into(), RtValue::Ref("n2".into()))]),
        )
        .unwrap();
        let focus = env.locs[&Oid::from("e1")].clone();
        let ex = extract(&m.roots, &focus).unwrap();
        let q = ActConfig {
            env,
            model: ex.remainder,
            focus,
            props: ex.object.props,
            deferred: vec![],
            stmt: ActStmt::Set("src".into(), Expr::Var("x".into())),
        };
        let out = run_act(q, &g).unwrap();
        assert_eq!(
            out.deferred,
            vec![DeferredAction::Set {
                target: "n2".into(),
                prop: "outgoing".into(),
                value: "e1".into()
            }]
        );
    }

    #[test]
    fn deferred_application() {
        let g = fixtures::graph_model();
        let env = Env::for_model(&g, BTreeMap::new()).unwrap();
        assert_eq!(apply_deferred(&[], &env, g.roots.clone()).unwrap(), g.roots);
        let set = DeferredAction::Set {
            target: "n2".into(),
            prop: "outgoing".into(),
            value: "e1".into(),
        };
        let unset = DeferredAction::Unset {
            target: "n2".into(),
            prop: "outgoing".into(),
            value: "e1".into(),
        };
        let after = apply_deferred(std::slice::from_ref(&set), &env, g.roots.clone()).unwrap();
        let n2 = resolve(&after, &env.locs[&Oid::from("n2")]).unwrap();
        assert!(
            matches!(n2.payload("outgoing"), Some(Payload::Refs(is)) if is.contains(&"e1".into()))
        );
        assert_eq!(
            apply_deferred(&[set, unset], &env, g.roots.clone()).unwrap(),
            g.roots
        );
    }

    #[test]
    fn bidirectional_edits_keep_the_graph_valid() {
        let g = fixtures::graph_mm();
        let m = fixtures::graph_model();
        let src = r#"
            let var("g") = oid("g1") in
            let var("n") = oid("n2") in
            snapshot var("g") {
              let var("e") = create("edges", Edge) in
              snapshot2 var("e") { set("src", var("n")); set("tgt", var("n")) };
              let var("k") = create("nodes", Node) in
              snapshot2 var("k") { set("name", "k") }
            }"#;
        let out = run(&m, &g, src).unwrap();
        assert!(
            check_valid(&out, &g).unwrap().ok(),
            "{:?}",
            check_valid(&out, &g)
        );
        assert!(conforms(&g, &out));
        assert_eq!(out.class_of(&"Node$0".into()), Some("Node"));
    }

    #[test]
    fn trapped_errors_carry_their_rule() {
        let cd = fixtures::class_diagram_mm();
        let m = fixtures::annotated_model();
        assert_eq!(
            code(run(
                &m,
                &cd,
                r#"let var("c") = oid("2") in let var("p") = oid("3") in snapshot var("c") { unset("properties", var("p")) }"#
            )),
            "E-CmtUnsetErrorIso"
        );
        assert_eq!(
            code(run(
                &m,
                &cd,
                r#"let var("c") = oid("1") in let var("z") = oid("zz") in snapshot var("c") { set("annotations", var("z")) }"#
            )),
            "E-RefSetError"
        );
        assert_eq!(
            code(run(
                &m,
                &cd,
                r#"let var("z") = oid("3") in delete(var("z"))"#
            )),
            "E-FmaDeleteRootErrorRef"
        );
    }

    #[test]
    fn runs_are_deterministic() {
        let g = fixtures::graph_mm();
        let m = fixtures::graph_model();
        let src = r#"let var("g") = oid("g1") in snapshot var("g") { create("nodes", Node); create("nodes", Node) }"#;
        let a = run(&m, &g, src).unwrap();
        let b = run(&m, &g, src).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }

    #[test]
    fn trace_measure_decreases() {
        let cd = fixtures::class_diagram_mm();
        let mut it = Interpreter::new(&cd).with_trace();
        it.run(
            &fixtures::pull_up_model(),
            &parse(fixtures::PULL_UP_PROGRAM).unwrap(),
            BTreeMap::new(),
        )
        .unwrap();
        let t = it.trace();
        assert_eq!(t[0].rule, "E-FmaLet");
        assert_eq!(t[0].xi, 14);
        for e in t.iter().filter(|e| !e.expr) {
            if let Some(p) = e.parent_xi {
                assert!(e.xi < p, "{e}");
            }
        }
        assert!(t.iter().any(|e| e.rule == "E-CmtUniSet"));
        assert!(t.iter().any(|e| e.rule == "E-CmtUnset"));
    }
}
