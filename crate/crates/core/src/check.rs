//! Static checking of programs against a metamodel: expressions, actions on
//! a focused class, and first-level statements, plus closedness.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::metamodel::{ClassRef, FieldType, ModelType, ScalarType};
use crate::syntax::{ActStmt, Expr, FreeVars, Stmt};
use crate::typing::{class_subtype, TypeEnvOids, TypeEnvVars};

/// One failed typing rule.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub rule: &'static str,
    pub path: String,
    pub expected: String,
    pub found: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} at {}: expected {}, found {}",
            self.rule, self.path, self.expected, self.found
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize)]
#[serde(transparent)]
pub struct TypeVerdict {
    pub errors: Vec<Diagnostic>,
}

impl TypeVerdict {
    pub fn ok(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn rules(&self) -> Vec<&'static str> {
        self.errors.iter().map(|d| d.rule).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("diagnostics serialize")
    }
}

/// Variable bindings; `None` marks a variable whose binding failed to
/// check, so later uses stay quiet.
type Gamma = BTreeMap<String, Option<ScalarType>>;

struct Checker<'a> {
    mm: &'a ModelType,
    pi: &'a TypeEnvOids,
    errors: Vec<Diagnostic>,
    path: Vec<String>,
}

enum ExprFailure {
    Reported(Diagnostic),
    Poisoned,
}

impl<'a> Checker<'a> {
    fn new(mm: &'a ModelType, pi: &'a TypeEnvOids) -> Self {
        Checker {
            mm,
            pi,
            errors: Vec::new(),
            path: Vec::new(),
        }
    }

    fn path(&self) -> String {
        if self.path.is_empty() {
            "program".into()
        } else {
            self.path.join(" > ")
        }
    }

    fn fail(&mut self, rule: &'static str, expected: impl fmt::Display, found: impl fmt::Display) {
        let path = self.path();
        self.errors.push(Diagnostic {
            rule,
            path,
            expected: expected.to_string(),
            found: found.to_string(),
        });
    }

    fn scoped<T>(&mut self, seg: String, f: impl FnOnce(&mut Self) -> T) -> T {
        self.path.push(seg);
        let r = f(self);
        self.path.pop();
        r
    }

    fn expr(&self, gamma: &Gamma, e: &Expr) -> Result<ScalarType, ExprFailure> {
        let path = self.path();
        match e {
            Expr::Lit(v) => Ok(ScalarType::Base(v.base_type())),
            Expr::Var(x) => match gamma.get(x) {
                Some(Some(t)) => Ok(t.clone()),
                Some(None) => Err(ExprFailure::Poisoned),
                None => Err(ExprFailure::Reported(Diagnostic {
                    rule: "T-Var",
                    path,
                    expected: format!("a binding for var({x:?})"),
                    found: "unbound variable".into(),
                })),
            },
            Expr::Oid(o) => match self.pi.get(o) {
                Some(c) if self.mm.has_class(c) => Ok(ScalarType::Ref(ClassRef::named(c.clone()))),
                Some(c) => Err(ExprFailure::Reported(Diagnostic {
                    rule: "T-Ref",
                    path,
                    expected: "an object of a declared class".into(),
                    found: format!("oid({o}) of class {c}"),
                })),
                None => Err(ExprFailure::Reported(Diagnostic {
                    rule: "T-Ref",
                    path,
                    expected: "a typed object identifier".into(),
                    found: format!("unknown oid({o})"),
                })),
            },
        }
    }

    /// Type of `e`, reporting failures. `None` when the expression is ill-typed.
    fn expr_reported(&mut self, gamma: &Gamma, e: &Expr) -> Option<ScalarType> {
        match self.expr(gamma, e) {
            Ok(t) => Some(t),
            Err(ExprFailure::Reported(d)) => {
                self.errors.push(d);
                None
            }
            Err(ExprFailure::Poisoned) => None,
        }
    }

    /// Class named by a reference-typed variable.
    fn object_var(&mut self, gamma: &Gamma, x: &str, rule: &'static str) -> Option<String> {
        match self.expr_reported(gamma, &Expr::Var(x.to_owned()))? {
            ScalarType::Ref(ClassRef::Named(c)) if self.mm.has_class(&c) => Some(c),
            other => {
                self.fail(rule, "ref <class>", format!("var({x:?}): {other}"));
                None
            }
        }
    }

    fn instantiable(&mut self, c: &str, within: Option<&str>, rule: &'static str) -> bool {
        if !self.mm.has_class(c) {
            self.fail(rule, "a declared class", format!("unknown class {c}"));
            return false;
        }
        if self.mm.is_abstract(c) {
            self.fail(rule, "a concrete class", format!("abstract class {c}"));
            return false;
        }
        if let Some(d) = within {
            if !class_subtype(self.mm, &ClassRef::named(c), &ClassRef::named(d)) {
                self.fail(rule, format!("a subtype of {d}"), c);
                return false;
            }
        }
        true
    }

    fn stmt(&mut self, gamma: &Gamma, s: &Stmt) {
        match s {
            Stmt::Unit => {}
            Stmt::Seq(a, b) => {
                self.scoped("seq.0".into(), |c| c.stmt(gamma, a));
                self.scoped("seq.1".into(), |c| c.stmt(gamma, b));
            }
            Stmt::Let(x, e, body) => self.scoped(format!("let var({x:?})"), |c| {
                let t = c.expr_reported(gamma, e);
                let mut g = gamma.clone();
                g.insert(x.clone(), t);
                c.stmt(&g, body);
            }),
            Stmt::LetCreate(x, class, body) => {
                self.scoped(format!("let var({x:?}) = create({class})"), |c| {
                    let root = c.mm.root.clone();
                    let ok = c.instantiable(class, Some(&root), "T-FmaLetCreate");
                    let mut g = gamma.clone();
                    g.insert(
                        x.clone(),
                        ok.then(|| ScalarType::Ref(ClassRef::named(class.clone()))),
                    );
                    c.stmt(&g, body);
                })
            }
            Stmt::CreateRoot(class) => self.scoped(format!("create({class})"), |c| {
                let root = c.mm.root.clone();
                c.instantiable(class, Some(&root), "T-CreateRoot");
            }),
            Stmt::DeleteRoot(x) => self.scoped(format!("delete(var({x:?}))"), |c| {
                c.object_var(gamma, x, "T-DeleteRoot");
            }),
            Stmt::Snapshot(x, body) => self.scoped(format!("snapshot var({x:?})"), |c| {
                if let Some(class) = c.object_var(gamma, x, "T-FmaSnapshot") {
                    c.act(&class, gamma, body);
                }
            }),
        }
    }

    fn field(&mut self, focus: &str, p: &str, rule: &'static str) -> Option<FieldType> {
        match self.mm.field(focus, p) {
            Some(f) => Some(f.clone()),
            None => {
                self.fail(
                    rule,
                    format!("a property {p:?} of {focus}"),
                    "no such property",
                );
                None
            }
        }
    }

    fn compatible(&self, field: &FieldType, t: &ScalarType) -> bool {
        match (field, t) {
            (FieldType::Attr(b), ScalarType::Base(b2)) => b == b2,
            (FieldType::Ref(d) | FieldType::Cmt(d), ScalarType::Ref(c @ ClassRef::Named(_))) => {
                class_subtype(self.mm, c, d)
            }
            _ => false,
        }
    }

    fn act(&mut self, focus: &str, gamma: &Gamma, s: &ActStmt) {
        match s {
            ActStmt::Unit => {}
            ActStmt::Seq(a, b) => {
                self.scoped("seq.0".into(), |c| c.act(focus, gamma, a));
                self.scoped("seq.1".into(), |c| c.act(focus, gamma, b));
            }
            ActStmt::Let(x, e, body) => self.scoped(format!("let var({x:?})"), |c| {
                let t = c.expr_reported(gamma, e);
                let mut g = gamma.clone();
                g.insert(x.clone(), t);
                c.act(focus, &g, body);
            }),
            ActStmt::LetCreate(x, p, class, body) => {
                self.scoped(format!("let var({x:?}) = create({p:?}, {class})"), |c| {
                    let ok = c.create(focus, p, class);
                    let mut g = gamma.clone();
                    g.insert(
                        x.clone(),
                        ok.then(|| ScalarType::Ref(ClassRef::named(class.clone()))),
                    );
                    c.act(focus, &g, body);
                })
            }
            ActStmt::Create(p, class) => self.scoped(format!("create({p:?}, {class})"), |c| {
                c.create(focus, p, class);
            }),
            ActStmt::Set(p, e) => self.scoped(format!("set({p:?})"), |c| {
                let t = c.expr_reported(gamma, e);
                let Some(field) = c.field(focus, p, "T-Set") else {
                    return;
                };
                if let Some(t) = t {
                    if !c.compatible(&field, &t) {
                        c.fail("T-Set", &field, t);
                    }
                }
            }),
            ActStmt::SetCmt(p, x) => self.scoped(format!("setCmt({p:?})"), |c| {
                let t = c.expr_reported(gamma, &Expr::Var(x.clone()));
                let Some(field) = c.field(focus, p, "T-Set") else {
                    return;
                };
                if !matches!(field, FieldType::Cmt(_)) {
                    c.fail("T-Set", "a containment", &field);
                    return;
                }
                if let Some(t) = t {
                    if !c.compatible(&field, &t) {
                        c.fail("T-Set", &field, t);
                    }
                }
            }),
            ActStmt::UnsetAttr(p) => self.scoped(format!("unset({p:?})"), |c| {
                let Some(field) = c.field(focus, p, "T-AttUnset") else {
                    return;
                };
                if !matches!(field, FieldType::Attr(_)) {
                    c.fail("T-AttUnset", "an attribute", field);
                }
            }),
            ActStmt::Unset(p, x) => self.scoped(format!("unset({p:?}, var({x:?}))"), |c| {
                let t = c.expr_reported(gamma, &Expr::Var(x.clone()));
                let rule = match c.mm.field(focus, p) {
                    Some(FieldType::Cmt(_)) => "T-CmtUnset",
                    _ => "T-RefUnset",
                };
                let Some(field) = c.field(focus, p, rule) else {
                    return;
                };
                if matches!(field, FieldType::Attr(_)) {
                    c.fail(rule, "a reference or containment", field);
                    return;
                }
                if let Some(t) = t {
                    if !c.compatible(&field, &t) {
                        c.fail(rule, &field, t);
                    }
                }
            }),
            ActStmt::Snapshot(x, body) => self.scoped(format!("snapshot2 var({x:?})"), |c| {
                if let Some(class) = c.object_var(gamma, x, "T-ActSnapshot") {
                    c.act(&class, gamma, body);
                }
            }),
        }
    }

    fn create(&mut self, focus: &str, p: &str, class: &str) -> bool {
        let Some(field) = self.field(focus, p, "T-Create") else {
            return false;
        };
        let FieldType::Cmt(ClassRef::Named(d)) = &field else {
            self.fail("T-Create", "a containment", field);
            return false;
        };
        let d = d.clone();
        self.instantiable(class, Some(&d), "T-Create")
    }
}

fn seed(gamma: &TypeEnvVars) -> Gamma {
    gamma
        .iter()
        .map(|(k, v)| (k.clone(), Some(v.clone())))
        .collect()
}

pub fn typecheck_expr(
    mm: &ModelType,
    gamma: &TypeEnvVars,
    pi: &TypeEnvOids,
    e: &Expr,
) -> Result<ScalarType, Diagnostic> {
    match Checker::new(mm, pi).expr(&seed(gamma), e) {
        Ok(t) => Ok(t),
        Err(ExprFailure::Reported(d)) => Err(d),
        Err(ExprFailure::Poisoned) => unreachable!("seeded bindings are never poisoned"),
    }
}

/// Check second-level actions against the object type of `focus_class`.
pub fn typecheck_act(
    mm: &ModelType,
    focus_class: &str,
    gamma: &TypeEnvVars,
    pi: &TypeEnvOids,
    s2: &ActStmt,
) -> TypeVerdict {
    let mut c = Checker::new(mm, pi);
    if !mm.has_class(focus_class) {
        c.fail("T-FmaSnapshot", "a declared class", focus_class);
    } else {
        c.act(focus_class, &seed(gamma), s2);
    }
    TypeVerdict { errors: c.errors }
}

/// Check a first-level program; variables free in `s` must be bound by
/// `initial_gamma`.
pub fn typecheck_program(
    mm: &ModelType,
    pi: &TypeEnvOids,
    s: &Stmt,
    initial_gamma: &TypeEnvVars,
) -> TypeVerdict {
    let mut c = Checker::new(mm, pi);
    for x in s.free_vars() {
        if !initial_gamma.contains_key(&x) {
            c.fail(
                "NotClosed",
                "a closed program",
                format!("free variable var({x:?})"),
            );
        }
    }
    if c.errors.is_empty() {
        c.stmt(&seed(initial_gamma), s);
    }
    TypeVerdict { errors: c.errors }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::metamodel::BaseType;
    use crate::model::{Oid, Value};
    use crate::syntax::parse;

    fn check_src(mm: &ModelType, pi: &TypeEnvOids, src: &str) -> TypeVerdict {
        typecheck_program(mm, pi, &parse(src).unwrap(), &TypeEnvVars::new())
    }

    #[test]
    fn expressions() {
        let cd = fixtures::class_diagram_mm();
        let none = TypeEnvOids::new();
        assert_eq!(
            typecheck_expr(&cd, &TypeEnvVars::new(), &none, &Expr::Lit(Value::Int(5))),
            Ok(ScalarType::Base(BaseType::Integer))
        );
        let g = TypeEnvVars::from([("x".into(), ScalarType::Ref(ClassRef::named("Class")))]);
        assert_eq!(
            typecheck_expr(&cd, &g, &none, &Expr::Var("x".into())),
            Ok(ScalarType::Ref(ClassRef::named("Class")))
        );
        let pi = TypeEnvOids::from([(Oid::from("3"), "Property".to_owned())]);
        assert_eq!(
            typecheck_expr(&cd, &TypeEnvVars::new(), &pi, &Expr::Oid("3".into())),
            Ok(ScalarType::Ref(ClassRef::named("Property")))
        );
        assert_eq!(
            typecheck_expr(&cd, &TypeEnvVars::new(), &none, &Expr::Var("q".into()))
                .unwrap_err()
                .rule,
            "T-Var"
        );
        assert_eq!(
            typecheck_expr(&cd, &TypeEnvVars::new(), &none, &Expr::Oid("q".into()))
                .unwrap_err()
                .rule,
            "T-Ref"
        );
    }

    #[test]
    fn actions() {
        let cd = fixtures::class_diagram_mm();
        let pi = fixtures::pull_up_model().typing;
        let g = TypeEnvVars::from([("x".into(), ScalarType::Ref(ClassRef::named("Property")))]);
        assert!(typecheck_act(
            &cd,
            "Class",
            &g,
            &pi,
            &ActStmt::SetCmt("properties".into(), "x".into())
        )
        .ok());
        let v = typecheck_act(
            &cd,
            "Class",
            &g,
            &pi,
            &ActStmt::Set("name".into(), Expr::Lit(Value::Int(7))),
        );
        assert_eq!(v.rules(), vec!["T-Set"]);
        assert!(typecheck_act(&cd, "Property", &g, &pi, &ActStmt::Unit).ok());
    }

    #[test]
    fn programs() {
        let cd = fixtures::class_diagram_mm();
        let pi = fixtures::pull_up_model().typing;
        assert!(check_src(&cd, &pi, fixtures::PULL_UP_PROGRAM).ok());
        assert!(check_src(&cd, &TypeEnvOids::new(), "()").ok());
        assert_eq!(
            check_src(&cd, &pi, r#"snapshot var("x") { . }"#).rules(),
            vec!["NotClosed"]
        );
    }

    #[test]
    fn rejection_witnesses() {
        let cd = fixtures::class_diagram_mm();
        let pi = fixtures::pull_up_model().typing;
        let cases = [
            ("create(Property)", "T-CreateRoot"),
            (r#"let var("x") = 3 in delete(var("x"))"#, "T-DeleteRoot"),
            (
                r#"let var("x") = "s" in snapshot var("x") { . }"#,
                "T-FmaSnapshot",
            ),
            (r#"let var("x") = create(Class) in ()"#, "T-FmaLetCreate"),
            (r#"let var("x") = oid("nope") in ()"#, "T-Ref"),
            (
                r#"let var("c") = oid("1") in snapshot var("c") { set("name", true) }"#,
                "T-Set",
            ),
            (
                r#"let var("c") = oid("1") in snapshot var("c") { unset("properties") }"#,
                "T-AttUnset",
            ),
            (
                r#"let var("c") = oid("1") in snapshot var("c") { unset("annotations", var("c")) }"#,
                "T-RefUnset",
            ),
            (
                r#"let var("c") = oid("1") in snapshot var("c") { unset("properties", var("c")) }"#,
                "T-CmtUnset",
            ),
            (
                r#"let var("c") = oid("1") in snapshot var("c") { create("properties", Class) }"#,
                "T-Create",
            ),
            (
                r#"let var("c") = oid("1") in snapshot var("c") { snapshot2 var("d") { . } }"#,
                "NotClosed",
            ),
            (
                r#"let var("c") = oid("1") in snapshot var("c") { let var("d") = 1 in snapshot2 var("d") { . } }"#,
                "T-ActSnapshot",
            ),
        ];
        for (src, rule) in cases {
            assert_eq!(check_src(&cd, &pi, src).rules(), vec![rule], "{src}");
        }
    }

    #[test]
    fn poisoned_bindings_do_not_cascade() {
        let cd = fixtures::class_diagram_mm();
        let pi = fixtures::pull_up_model().typing;
        let v = check_src(
            &cd,
            &pi,
            r#"let var("x") = oid("nope") in snapshot var("x") { set("name", 1) }"#,
        );
        assert_eq!(v.rules(), vec!["T-Ref"]);
    }

    #[test]
    fn abstract_classes_cannot_be_created() {
        let v = fixtures::vehicles_mm();
        let pi = fixtures::garage_model().typing;
        let r = check_src(
            &v,
            &pi,
            r#"let var("g") = oid("g") in snapshot var("g") { create("vehicles", Vehicle) }"#,
        );
        assert_eq!(r.rules(), vec!["T-Create"]);
        let ok = check_src(
            &v,
            &pi,
            r#"let var("g") = oid("g") in snapshot var("g") { create("vehicles", Car) }"#,
        );
        assert!(ok.ok(), "{:?}", ok);
    }

    #[test]
    fn verdict_json() {
        let cd = fixtures::class_diagram_mm();
        let pi = fixtures::pull_up_model().typing;
        let v = check_src(
            &cd,
            &pi,
            r#"let var("c") = oid("1") in snapshot var("c") { set("name", 7) }"#,
        );
        let json: serde_json::Value = serde_json::from_str(&v.to_json()).unwrap();
        assert_eq!(json[0]["rule"], "T-Set");
        assert_eq!(json[0]["expected"], "String");
        assert_eq!(json[0]["found"], "Integer");
    }
}
