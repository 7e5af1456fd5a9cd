//! Abstract syntax of focussed model actions, with free variables and the
//! termination measure.

use std::collections::BTreeSet;

use crate::model::{Oid, Value};

mod format;
mod parse;

pub use format::format;
pub use parse::{parse, ParseError};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Expr {
    Lit(Value),
    Var(String),
    Oid(Oid),
}

/// First-level statements.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Stmt {
    Snapshot(String, Box<ActStmt>),
    Let(String, Expr, Box<Stmt>),
    LetCreate(String, String, Box<Stmt>),
    CreateRoot(String),
    DeleteRoot(String),
    Seq(Box<Stmt>, Box<Stmt>),
    Unit,
}

/// Second-level statements, run against the property set of the focused
/// object.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ActStmt {
    Let(String, Expr, Box<ActStmt>),
    LetCreate(String, String, String, Box<ActStmt>),
    Create(String, String),
    /// `set(p, e)`: attribute, reference or containment, by property kind.
    Set(String, Expr),
    SetCmt(String, String),
    UnsetAttr(String),
    /// `unset(p, x)` on a reference or containment.
    Unset(String, String),
    Snapshot(String, Box<ActStmt>),
    Seq(Box<ActStmt>, Box<ActStmt>),
    Unit,
}

impl Stmt {
    pub fn seq(a: Stmt, b: Stmt) -> Stmt {
        Stmt::Seq(Box::new(a), Box::new(b))
    }

    pub fn snapshot(x: impl Into<String>, body: ActStmt) -> Stmt {
        Stmt::Snapshot(x.into(), Box::new(body))
    }

    pub fn let_(x: impl Into<String>, e: Expr, body: Stmt) -> Stmt {
        Stmt::Let(x.into(), e, Box::new(body))
    }

    pub fn let_create(x: impl Into<String>, c: impl Into<String>, body: Stmt) -> Stmt {
        Stmt::LetCreate(x.into(), c.into(), Box::new(body))
    }
}

impl ActStmt {
    pub fn seq(a: ActStmt, b: ActStmt) -> ActStmt {
        ActStmt::Seq(Box::new(a), Box::new(b))
    }

    pub fn snapshot(x: impl Into<String>, body: ActStmt) -> ActStmt {
        ActStmt::Snapshot(x.into(), Box::new(body))
    }

    pub fn let_(x: impl Into<String>, e: Expr, body: ActStmt) -> ActStmt {
        ActStmt::Let(x.into(), e, Box::new(body))
    }

    pub fn let_create(
        x: impl Into<String>,
        p: impl Into<String>,
        c: impl Into<String>,
        body: ActStmt,
    ) -> ActStmt {
        ActStmt::LetCreate(x.into(), p.into(), c.into(), Box::new(body))
    }
}

pub trait FreeVars {
    fn free_vars(&self) -> BTreeSet<String>;

    fn is_closed(&self) -> bool {
        self.free_vars().is_empty()
    }
}

impl FreeVars for Expr {
    fn free_vars(&self) -> BTreeSet<String> {
        match self {
            Expr::Var(x) => BTreeSet::from([x.clone()]),
            Expr::Lit(_) | Expr::Oid(_) => BTreeSet::new(),
        }
    }
}

fn bind(mut outer: BTreeSet<String>, x: &str, mut body: BTreeSet<String>) -> BTreeSet<String> {
    body.remove(x);
    outer.extend(body);
    outer
}

impl FreeVars for Stmt {
    fn free_vars(&self) -> BTreeSet<String> {
        match self {
            Stmt::Snapshot(x, s) => {
                let mut fv = s.free_vars();
                fv.insert(x.clone());
                fv
            }
            Stmt::Let(x, e, s) => bind(e.free_vars(), x, s.free_vars()),
            Stmt::LetCreate(x, _, s) => bind(BTreeSet::new(), x, s.free_vars()),
            Stmt::CreateRoot(_) | Stmt::Unit => BTreeSet::new(),
            Stmt::DeleteRoot(x) => BTreeSet::from([x.clone()]),
            Stmt::Seq(a, b) => {
                let mut fv = a.free_vars();
                fv.extend(b.free_vars());
                fv
            }
        }
    }
}

impl FreeVars for ActStmt {
    fn free_vars(&self) -> BTreeSet<String> {
        match self {
            ActStmt::Let(x, e, s) => bind(e.free_vars(), x, s.free_vars()),
            ActStmt::LetCreate(x, _, _, s) => bind(BTreeSet::new(), x, s.free_vars()),
            ActStmt::Create(..) | ActStmt::UnsetAttr(_) | ActStmt::Unit => BTreeSet::new(),
            ActStmt::Set(_, e) => e.free_vars(),
            ActStmt::SetCmt(_, x) | ActStmt::Unset(_, x) => BTreeSet::from([x.clone()]),
            ActStmt::Snapshot(x, s) => {
                let mut fv = s.free_vars();
                fv.insert(x.clone());
                fv
            }
            ActStmt::Seq(a, b) => {
                let mut fv = a.free_vars();
                fv.extend(b.free_vars());
                fv
            }
        }
    }
}

/// The termination measure ξ.
pub trait Measure {
    fn measure(&self) -> u64;
}

impl Measure for Expr {
    fn measure(&self) -> u64 {
        1
    }
}

impl Measure for Stmt {
    fn measure(&self) -> u64 {
        match self {
            Stmt::Snapshot(_, s) => 1 + s.measure(),
            Stmt::Let(_, e, s) => 1 + e.measure() + s.measure(),
            Stmt::LetCreate(_, _, s) => 2 + s.measure(),
            Stmt::CreateRoot(_) | Stmt::DeleteRoot(_) | Stmt::Unit => 1,
            Stmt::Seq(a, b) => 1 + a.measure() + b.measure(),
        }
    }
}

impl Measure for ActStmt {
    fn measure(&self) -> u64 {
        match self {
            ActStmt::Let(_, e, s) => 1 + e.measure() + s.measure(),
            ActStmt::LetCreate(_, _, _, s) => 2 + s.measure(),
            ActStmt::Create(..) | ActStmt::UnsetAttr(_) | ActStmt::Unset(..) | ActStmt::Unit => 1,
            ActStmt::Set(_, e) => 1 + e.measure(),
            ActStmt::SetCmt(..) => 2,
            ActStmt::Snapshot(_, s) => 1 + s.measure(),
            ActStmt::Seq(a, b) => 1 + a.measure() + b.measure(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn free_variable_equations() {
        assert!(Stmt::CreateRoot("Package".into()).free_vars().is_empty());
        let s = Stmt::let_(
            "x",
            Expr::Lit(Value::Int(1)),
            Stmt::snapshot("x", ActStmt::Set("p".into(), Expr::Var("y".into()))),
        );
        assert_eq!(s.free_vars(), BTreeSet::from(["y".to_owned()]));
        assert!(parse(fixtures::PULL_UP_PROGRAM).unwrap().is_closed());
        assert_eq!(
            Stmt::snapshot("x", ActStmt::Unit).free_vars(),
            BTreeSet::from(["x".to_owned()])
        );
    }

    #[test]
    fn measure_equations() {
        assert_eq!(Stmt::Unit.measure(), 1);
        assert_eq!(Stmt::seq(Stmt::Unit, Stmt::Unit).measure(), 3);
        assert_eq!(Stmt::let_create("x", "C", Stmt::Unit).measure(), 3);
        assert_eq!(ActStmt::SetCmt("p".into(), "x".into()).measure(), 2);
        assert_eq!(ActStmt::Set("p".into(), Expr::Var("x".into())).measure(), 2);
        assert_eq!(ActStmt::Unset("p".into(), "x".into()).measure(), 1);
        assert_eq!(parse(fixtures::PULL_UP_PROGRAM).unwrap().measure(), 14);
    }
}
