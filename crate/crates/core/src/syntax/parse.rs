use thiserror::Error;

use super::{ActStmt, Expr, Stmt};
use crate::model::{Oid, Value};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Str(String),
    Int(i64),
    Punct(char),
    Eof,
}

impl std::fmt::Display for Tok {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Str(s) => write!(f, "string {s:?}"),
            Tok::Int(i) => write!(f, "integer {i}"),
            Tok::Punct(c) => write!(f, "`{c}`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(src: &str) -> Result<Vec<Spanned>, ParseError> {
    let mut out = Vec::new();
    let mut chars = src.chars().peekable();
    let (mut line, mut column) = (1, 1);
    let err = |line, column, message: String| ParseError {
        line,
        column,
        message,
    };
    while let Some(&c) = chars.peek() {
        let (l0, c0) = (line, column);
        let mut bump = |chars: &mut std::iter::Peekable<std::str::Chars>| {
            let c = chars.next();
            if c == Some('\n') {
                line += 1;
                column = 1;
            } else {
                column += 1;
            }
            c
        };
        if c.is_whitespace() {
            bump(&mut chars);
            continue;
        }
        let tok = if c == '"' {
            bump(&mut chars);
            let mut s = String::new();
            loop {
                match bump(&mut chars) {
                    None => return Err(err(l0, c0, "unterminated string".into())),
                    Some('"') => break,
                    Some('\\') => match bump(&mut chars) {
                        Some('n') => s.push('\n'),
                        Some('t') => s.push('\t'),
                        Some('r') => s.push('\r'),
                        Some('\\') => s.push('\\'),
                        Some('"') => s.push('"'),
                        other => {
                            return Err(err(
                                l0,
                                c0,
                                format!("bad escape {:?}", other.unwrap_or(' ')),
                            ));
                        }
                    },
                    Some(ch) => s.push(ch),
                }
            }
            Tok::Str(s)
        } else if c.is_ascii_digit() || c == '-' {
            let mut s = String::new();
            s.extend(bump(&mut chars));
            while chars.peek().is_some_and(|d| d.is_ascii_digit()) {
                s.extend(bump(&mut chars));
            }
            Tok::Int(
                s.parse()
                    .map_err(|_| err(l0, c0, format!("bad integer {s}")))?,
            )
        } else if c.is_alphabetic() || c == '_' {
            let mut s = String::new();
            while chars
                .peek()
                .is_some_and(|d| d.is_alphanumeric() || *d == '_')
            {
                s.extend(bump(&mut chars));
            }
            Tok::Ident(s)
        } else if "(){},;=.".contains(c) {
            bump(&mut chars);
            Tok::Punct(c)
        } else {
            return Err(err(l0, c0, format!("unexpected character {c:?}")));
        };
        out.push(Spanned {
            tok,
            line: l0,
            column: c0,
        });
    }
    out.push(Spanned {
        tok: Tok::Eof,
        line,
        column,
    });
    Ok(out)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

const KEYWORDS: &[&str] = &[
    "let",
    "in",
    "snapshot",
    "snapshot2",
    "create",
    "delete",
    "set",
    "setCmt",
    "unset",
    "var",
    "oid",
    "true",
    "false",
];

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek2(&self) -> &Tok {
        &self.toks[(self.pos + 1).min(self.toks.len() - 1)].tok
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        let t = &self.toks[self.pos];
        Err(ParseError {
            line: t.line,
            column: t.column,
            message: message.into(),
        })
    }

    fn unexpected<T>(&self, wanted: &str) -> Result<T, ParseError> {
        self.error(format!("expected {wanted}, found {}", self.peek()))
    }

    fn next(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn is_punct(&self, c: char) -> bool {
        *self.peek() == Tok::Punct(c)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn punct(&mut self, c: char) -> Result<(), ParseError> {
        if self.is_punct(c) {
            self.next();
            Ok(())
        } else {
            self.unexpected(&format!("`{c}`"))
        }
    }

    fn kw(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.is_kw(kw) {
            self.next();
            Ok(())
        } else {
            self.unexpected(&format!("`{kw}`"))
        }
    }

    fn string(&mut self) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Str(s) => {
                self.next();
                Ok(s)
            }
            _ => self.unexpected("a string"),
        }
    }

    fn class(&mut self) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.next();
                Ok(s)
            }
            _ => self.unexpected("a class name"),
        }
    }

    fn var(&mut self) -> Result<String, ParseError> {
        self.kw("var")?;
        self.punct('(')?;
        let s = self.string()?;
        self.punct(')')?;
        Ok(s)
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        match self.peek().clone() {
            Tok::Str(s) => {
                self.next();
                Ok(Expr::Lit(Value::Str(s)))
            }
            Tok::Int(i) => {
                self.next();
                Ok(Expr::Lit(Value::Int(i)))
            }
            Tok::Ident(k) if k == "true" || k == "false" => {
                self.next();
                Ok(Expr::Lit(Value::Bool(k == "true")))
            }
            Tok::Ident(k) if k == "var" => Ok(Expr::Var(self.var()?)),
            Tok::Ident(k) if k == "oid" => {
                self.next();
                self.punct('(')?;
                let s = self.string()?;
                self.punct(')')?;
                Ok(Expr::Oid(Oid::new(s)))
            }
            _ => self.unexpected("an expression"),
        }
    }

    fn stmt(&mut self) -> Result<Stmt, ParseError> {
        if self.is_kw("let") {
            self.next();
            let x = self.var()?;
            self.punct('=')?;
            if self.is_kw("create") {
                self.next();
                self.punct('(')?;
                let c = self.class()?;
                self.punct(')')?;
                self.kw("in")?;
                return Ok(Stmt::let_create(x, c, self.stmt()?));
            }
            let e = self.expr()?;
            self.kw("in")?;
            return Ok(Stmt::let_(x, e, self.stmt()?));
        }
        let head = self.stmt_atom()?;
        if self.is_punct(';') {
            self.next();
            return Ok(Stmt::seq(head, self.stmt()?));
        }
        Ok(head)
    }

    fn stmt_atom(&mut self) -> Result<Stmt, ParseError> {
        match self.peek().clone() {
            Tok::Ident(k) if k == "snapshot" => {
                self.next();
                let x = self.var()?;
                self.punct('{')?;
                let body = self.act()?;
                self.punct('}')?;
                Ok(Stmt::snapshot(x, body))
            }
            Tok::Ident(k) if k == "create" => {
                self.next();
                self.punct('(')?;
                let c = self.class()?;
                self.punct(')')?;
                Ok(Stmt::CreateRoot(c))
            }
            Tok::Ident(k) if k == "delete" => {
                self.next();
                self.punct('(')?;
                let x = self.var()?;
                self.punct(')')?;
                Ok(Stmt::DeleteRoot(x))
            }
            Tok::Punct('(') => {
                self.next();
                if self.is_punct(')') {
                    self.next();
                    return Ok(Stmt::Unit);
                }
                let s = self.stmt()?;
                self.punct(')')?;
                Ok(s)
            }
            _ => self.unexpected("a statement"),
        }
    }

    fn act(&mut self) -> Result<ActStmt, ParseError> {
        if self.is_kw("let") {
            self.next();
            let x = self.var()?;
            self.punct('=')?;
            if self.is_kw("create") {
                self.next();
                self.punct('(')?;
                let p = self.string()?;
                self.punct(',')?;
                let c = self.class()?;
                self.punct(')')?;
                self.kw("in")?;
                return Ok(ActStmt::let_create(x, p, c, self.act()?));
            }
            let e = self.expr()?;
            self.kw("in")?;
            return Ok(ActStmt::let_(x, e, self.act()?));
        }
        let head = self.act_atom()?;
        if self.is_punct(';') {
            self.next();
            return Ok(ActStmt::seq(head, self.act()?));
        }
        Ok(head)
    }

    fn act_atom(&mut self) -> Result<ActStmt, ParseError> {
        let kw = match self.peek().clone() {
            Tok::Punct('.') => {
                self.next();
                return Ok(ActStmt::Unit);
            }
            Tok::Punct('(') => {
                self.next();
                let s = self.act()?;
                self.punct(')')?;
                return Ok(s);
            }
            Tok::Ident(k) => k,
            _ => return self.unexpected("an action"),
        };
        if kw == "snapshot2" {
            self.next();
            let x = self.var()?;
            self.punct('{')?;
            let body = self.act()?;
            self.punct('}')?;
            return Ok(ActStmt::snapshot(x, body));
        }
        if !["create", "set", "setCmt", "unset"].contains(&kw.as_str())
            || *self.peek2() != Tok::Punct('(')
        {
            return self.unexpected("an action");
        }
        self.next();
        self.punct('(')?;
        let p = self.string()?;
        let s = match kw.as_str() {
            "create" => {
                self.punct(',')?;
                ActStmt::Create(p, self.class()?)
            }
            "set" => {
                self.punct(',')?;
                ActStmt::Set(p, self.expr()?)
            }
            "setCmt" => {
                self.punct(',')?;
                ActStmt::SetCmt(p, self.var()?)
            }
            _ if self.is_punct(',') => {
                self.next();
                ActStmt::Unset(p, self.var()?)
            }
            _ => ActStmt::UnsetAttr(p),
        };
        self.punct(')')?;
        Ok(s)
    }
}

/// Parse a first-level program.
pub fn parse(src: &str) -> Result<Stmt, ParseError> {
    let mut p = Parser {
        toks: lex(src)?,
        pos: 0,
    };
    let s = p.stmt()?;
    if *p.peek() != Tok::Eof {
        return p.unexpected("end of input");
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn pull_up_listing_shape() {
        let s = parse(fixtures::PULL_UP_PROGRAM).unwrap();
        let mut lets = 0;
        let mut cur = &s;
        while let Stmt::Let(_, Expr::Oid(_), body) = cur {
            lets += 1;
            cur = body;
        }
        assert_eq!(lets, 4);
        let Stmt::Seq(a, b) = cur else {
            panic!("expected a sequence, got {cur:?}")
        };
        assert!(matches!(**a, Stmt::Snapshot(ref x, _) if x == "0"));
        assert!(matches!(**b, Stmt::Snapshot(ref x, _) if x == "2"));
    }

    #[test]
    fn small_programs() {
        assert_eq!(parse("()").unwrap(), Stmt::Unit);
        assert_eq!(
            parse(r#"snapshot var("x") { set("name", "N") }"#).unwrap(),
            Stmt::snapshot(
                "x",
                ActStmt::Set("name".into(), Expr::Lit(Value::Str("N".into())))
            )
        );
        assert_eq!(
            parse(r#"snapshot var("x") { . }"#).unwrap(),
            Stmt::snapshot("x", ActStmt::Unit)
        );
        assert_eq!(
            parse(r#"snapshot var("x") { unset("name"); unset("p", var("y")) }"#).unwrap(),
            Stmt::snapshot(
                "x",
                ActStmt::seq(
                    ActStmt::UnsetAttr("name".into()),
                    ActStmt::Unset("p".into(), "y".into())
                )
            )
        );
        assert_eq!(
            parse("let var(\"n\") = -3 in create(Package)").unwrap(),
            Stmt::let_(
                "n",
                Expr::Lit(Value::Int(-3)),
                Stmt::CreateRoot("Package".into())
            )
        );
    }

    #[test]
    fn sequence_is_right_nested_and_let_extends() {
        let s = parse("(); (); ()").unwrap();
        assert_eq!(s, Stmt::seq(Stmt::Unit, Stmt::seq(Stmt::Unit, Stmt::Unit)));
        let s = parse(r#"(let var("x") = 1 in ()); ()"#).unwrap();
        assert_eq!(
            s,
            Stmt::seq(
                Stmt::let_("x", Expr::Lit(Value::Int(1)), Stmt::Unit),
                Stmt::Unit
            )
        );
    }

    #[test]
    fn errors_carry_positions() {
        let e = parse("snapshot var(\"x\") {\n  set(\"a\" 1) }").unwrap_err();
        assert_eq!((e.line, e.column), (2, 11));
        assert!(parse("").is_err());
        assert!(parse("() ()").is_err());
        assert!(parse("create(let)").is_err());
        assert!(parse("\"open").is_err());
    }
}
