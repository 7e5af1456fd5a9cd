use std::fmt::Write;

use super::{ActStmt, Expr, Stmt};
use crate::model::Value;

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn var(x: &str) -> String {
    format!("var({})", quote(x))
}

fn expr(e: &Expr) -> String {
    match e {
        Expr::Lit(Value::Str(s)) => quote(s),
        Expr::Lit(v) => v.to_string(),
        Expr::Var(x) => var(x),
        Expr::Oid(o) => format!("oid({})", quote(o.as_str())),
    }
}

struct Printer {
    out: String,
}

impl Printer {
    fn indent(&mut self, depth: usize) {
        for _ in 0..depth {
            self.out.push_str("  ");
        }
    }

    fn stmt(&mut self, s: &Stmt, depth: usize) {
        match s {
            Stmt::Let(x, e, body) => {
                let _ = writeln!(self.out, "let {} = {} in", var(x), expr(e));
                self.indent(depth);
                self.stmt(body, depth);
            }
            Stmt::LetCreate(x, c, body) => {
                let _ = writeln!(self.out, "let {} = create({c}) in", var(x));
                self.indent(depth);
                self.stmt(body, depth);
            }
            Stmt::Seq(a, b) => {
                if matches!(**a, Stmt::Let(..) | Stmt::LetCreate(..) | Stmt::Seq(..)) {
                    self.out.push('(');
                    self.stmt(a, depth);
                    self.out.push(')');
                } else {
                    self.stmt(a, depth);
                }
                self.out.push_str(";\n");
                self.indent(depth);
                self.stmt(b, depth);
            }
            Stmt::Snapshot(x, body) => {
                let _ = write!(self.out, "snapshot {} ", var(x));
                self.block(body, depth);
            }
            Stmt::CreateRoot(c) => {
                let _ = write!(self.out, "create({c})");
            }
            Stmt::DeleteRoot(x) => {
                let _ = write!(self.out, "delete({})", var(x));
            }
            Stmt::Unit => self.out.push_str("()"),
        }
    }

    fn block(&mut self, body: &ActStmt, depth: usize) {
        if *body == ActStmt::Unit {
            self.out.push_str("{ . }");
            return;
        }
        self.out.push_str("{\n");
        self.indent(depth + 1);
        self.act(body, depth + 1);
        self.out.push('\n');
        self.indent(depth);
        self.out.push('}');
    }

    fn act(&mut self, s: &ActStmt, depth: usize) {
        match s {
            ActStmt::Let(x, e, body) => {
                let _ = writeln!(self.out, "let {} = {} in", var(x), expr(e));
                self.indent(depth);
                self.act(body, depth);
            }
            ActStmt::LetCreate(x, p, c, body) => {
                let _ = writeln!(self.out, "let {} = create({}, {c}) in", var(x), quote(p));
                self.indent(depth);
                self.act(body, depth);
            }
            ActStmt::Seq(a, b) => {
                if matches!(
                    **a,
                    ActStmt::Let(..) | ActStmt::LetCreate(..) | ActStmt::Seq(..)
                ) {
                    self.out.push('(');
                    self.act(a, depth);
                    self.out.push(')');
                } else {
                    self.act(a, depth);
                }
                self.out.push_str(";\n");
                self.indent(depth);
                self.act(b, depth);
            }
            ActStmt::Snapshot(x, body) => {
                let _ = write!(self.out, "snapshot2 {} ", var(x));
                self.block(body, depth);
            }
            ActStmt::Create(p, c) => {
                let _ = write!(self.out, "create({}, {c})", quote(p));
            }
            ActStmt::Set(p, e) => {
                let _ = write!(self.out, "set({}, {})", quote(p), expr(e));
            }
            ActStmt::SetCmt(p, x) => {
                let _ = write!(self.out, "setCmt({}, {})", quote(p), var(x));
            }
            ActStmt::UnsetAttr(p) => {
                let _ = write!(self.out, "unset({})", quote(p));
            }
            ActStmt::Unset(p, x) => {
                let _ = write!(self.out, "unset({}, {})", quote(p), var(x));
            }
            ActStmt::Unit => self.out.push('.'),
        }
    }
}

/// Canonical program text; parses back to the same tree.
pub fn format(s: &Stmt) -> String {
    let mut p = Printer { out: String::new() };
    p.stmt(s, 0);
    p.out
}

#[cfg(test)]
mod tests {
    use super::super::parse;
    use super::*;
    use crate::fixtures;

    #[test]
    fn unit_forms() {
        assert_eq!(format(&Stmt::Unit), "()");
        assert_eq!(
            format(&Stmt::snapshot("x", ActStmt::Unit)),
            "snapshot var(\"x\") { . }"
        );
    }

    #[test]
    fn canonical_pull_up() {
        let s = parse(fixtures::PULL_UP_PROGRAM).unwrap();
        let text = format(&s);
        assert_eq!(
            text,
            "let var(\"0\") = oid(\"1\") in\nlet var(\"1\") = oid(\"3\") in\nlet var(\"2\") = oid(\"4\") in\n\
             let var(\"3\") = oid(\"5\") in\nsnapshot var(\"0\") {\n  setCmt(\"properties\", var(\"1\"))\n};\n\
             snapshot var(\"2\") {\n  unset(\"properties\", var(\"3\"))\n}"
        );
        assert_eq!(parse(&text).unwrap(), s);
        assert_eq!(format(&parse(&text).unwrap()), text);
    }

    #[test]
    fn escapes_and_grouping_round_trip() {
        let s = Stmt::seq(
            Stmt::seq(Stmt::Unit, Stmt::Unit),
            Stmt::snapshot(
                "q\"x",
                ActStmt::seq(
                    ActStmt::let_("y", Expr::Lit(Value::Str("a\\b\nc".into())), ActStmt::Unit),
                    ActStmt::Set("n".into(), Expr::Lit(Value::Bool(true))),
                ),
            ),
        );
        assert_eq!(parse(&format(&s)).unwrap(), s);
    }
}
