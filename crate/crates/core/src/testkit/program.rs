//! Type-directed program generation and arbitrary syntax trees.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{
    children_of, concrete_subclasses, is_isolated_in, random_value, rng_for, GenError, GenSpec,
};
use crate::interp::run_program;
use crate::metamodel::{BaseType, ClassRef, EndKind, FieldType, ModelType, ReferenceEnd};
use crate::model::{locations, Location, Oid, Payload, StructuredModel, Value};
use crate::syntax::{ActStmt, Expr, Stmt};
use crate::typing::TypeEnvOids;

/// Number of statement nodes other than sequencing.
pub fn stmt_size(s: &Stmt) -> usize {
    match s {
        Stmt::Seq(a, b) => stmt_size(a) + stmt_size(b),
        Stmt::Snapshot(_, body) => 1 + act_size(body),
        Stmt::Let(_, _, body) | Stmt::LetCreate(_, _, body) => 1 + stmt_size(body),
        Stmt::CreateRoot(_) | Stmt::DeleteRoot(_) | Stmt::Unit => 1,
    }
}

fn act_size(s: &ActStmt) -> usize {
    match s {
        ActStmt::Seq(a, b) => act_size(a) + act_size(b),
        ActStmt::Let(_, _, body)
        | ActStmt::LetCreate(_, _, _, body)
        | ActStmt::Snapshot(_, body) => 1 + act_size(body),
        _ => 1,
    }
}

/// A closed, well-typed program over the objects of `model`. Each top-level
/// step is rehearsed against the model as left by the previous steps and
/// dropped if it traps, so the program usually runs to completion.
pub fn gen_program(
    mm: &ModelType,
    model: &StructuredModel,
    spec: &GenSpec,
) -> Result<Stmt, GenError> {
    ProgramGen::new(mm, model, spec, false)?.program()
}

/// A closed, well-typed program whose operands are picked without regard to
/// the state of the model: deleted objects, non-members, ancestors of the
/// focus and so on. Most such programs trap.
pub fn gen_adversarial_program(
    mm: &ModelType,
    model: &StructuredModel,
    spec: &GenSpec,
) -> Result<Stmt, GenError> {
    ProgramGen::new(mm, model, spec, true)?.program()
}

struct ProgramGen<'a> {
    mm: &'a ModelType,
    pi: &'a TypeEnvOids,
    state: StructuredModel,
    locs: BTreeMap<Oid, Location>,
    rng: ChaCha8Rng,
    budget: usize,
    vars: usize,
    adversarial: bool,
}

/// Where the action being generated runs.
#[derive(Clone)]
struct Focus {
    class: String,
    /// Location in the current model, unless the object is being created.
    at: Option<Location>,
    outer: Option<Oid>,
    depth: usize,
}

impl<'a> ProgramGen<'a> {
    fn new(
        mm: &'a ModelType,
        model: &'a StructuredModel,
        spec: &GenSpec,
        adversarial: bool,
    ) -> Result<Self, GenError> {
        spec.check()?;
        let locs =
            locations(&model.roots).map_err(|e| GenError::GenerationFailed(e.to_string()))?;
        Ok(ProgramGen {
            mm,
            pi: &model.typing,
            state: model.clone(),
            locs,
            rng: rng_for(spec.seed, if adversarial { 5 } else { 4 }),
            budget: spec.max_stmts,
            vars: 0,
            adversarial,
        })
    }

    fn program(mut self) -> Result<Stmt, GenError> {
        let mut units = Vec::new();
        for _ in 0..4 * self.budget.max(1) {
            if self.budget == 0 {
                break;
            }
            let Some(unit) = self.unit() else { continue };
            let n = stmt_size(&unit);
            if n > self.budget {
                continue;
            }
            if !self.adversarial {
                let Ok(next) = run_program(&self.state, self.mm, &unit, BTreeMap::new()) else {
                    continue;
                };
                self.state = next;
                self.locs = locations(&self.state.roots)
                    .map_err(|e| GenError::GenerationFailed(e.to_string()))?;
            }
            self.budget -= n;
            units.push(unit);
        }
        Ok(units
            .into_iter()
            .rev()
            .reduce(|tail, head| Stmt::seq(head, tail))
            .unwrap_or(Stmt::Unit))
    }

    fn var(&mut self) -> String {
        self.vars += 1;
        format!("v{}", self.vars)
    }

    /// Objects that may be named by an oid literal and whose class is below
    /// `d`. Only objects of the input model are typed statically; in normal
    /// mode they must also still exist.
    fn pool(&self, d: &str) -> Vec<Oid> {
        self.pi
            .iter()
            .filter(|(o, c)| {
                self.mm.is_subclass(c, d) && (self.adversarial || self.locs.contains_key(*o))
            })
            .map(|(o, _)| o.clone())
            .collect()
    }

    fn pick<T: Clone>(&mut self, xs: &[T]) -> Option<T> {
        xs.choose(&mut self.rng).cloned()
    }

    fn unit(&mut self) -> Option<Stmt> {
        let roots = concrete_subclasses(self.mm, &self.mm.root);
        match self.rng.gen_range(0..10) {
            0..=5 => {
                let candidates: Vec<Oid> = self
                    .pi
                    .keys()
                    .filter(|o| self.adversarial || self.locs.contains_key(*o))
                    .cloned()
                    .collect();
                let o = self.pick(&candidates)?;
                let x = self.var();
                let focus = Focus {
                    class: self.pi[&o].clone(),
                    at: self.locs.get(&o).cloned(),
                    outer: Some(o.clone()),
                    depth: 0,
                };
                let body = self.block(&focus);
                Some(Stmt::let_(x.clone(), Expr::Oid(o), Stmt::snapshot(x, body)))
            }
            6 | 7 => {
                let c = self.pick(&roots)?;
                let x = self.var();
                let body = self.block(&Focus {
                    class: c.clone(),
                    at: None,
                    outer: None,
                    depth: 0,
                });
                Some(Stmt::let_create(x.clone(), c, Stmt::snapshot(x, body)))
            }
            8 => Some(Stmt::CreateRoot(self.pick(&roots)?)),
            _ => {
                let candidates: Vec<Oid> = if self.adversarial {
                    self.pi
                        .iter()
                        .filter(|(_, c)| self.mm.is_subclass(c, &self.mm.root))
                        .map(|(o, _)| o.clone())
                        .collect()
                } else {
                    self.state
                        .roots
                        .iter()
                        .map(|r| r.oid.clone())
                        .filter(|o| self.pi.contains_key(o))
                        .collect()
                };
                let r = self.pick(&candidates)?;
                let x = self.var();
                Some(Stmt::let_(x.clone(), Expr::Oid(r), Stmt::DeleteRoot(x)))
            }
        }
    }

    fn block(&mut self, focus: &Focus) -> ActStmt {
        let n = self.rng.gen_range(1..=3);
        let actions: Vec<ActStmt> = (0..n).filter_map(|_| self.action(focus)).collect();
        actions
            .into_iter()
            .rev()
            .reduce(|tail, head| ActStmt::seq(head, tail))
            .unwrap_or(ActStmt::Unit)
    }

    fn action(&mut self, focus: &Focus) -> Option<ActStmt> {
        let fields: Vec<(String, FieldType)> = self
            .mm
            .cl(&focus.class)?
            .fields()?
            .iter()
            .map(|(p, t)| (p.clone(), t.clone()))
            .collect();
        let (p, ft) = self.pick(&fields)?;
        match ft {
            FieldType::Attr(b) => Some(self.attr_action(p, b)),
            FieldType::Ref(ClassRef::Named(d)) => self.ref_action(focus, p, &d),
            FieldType::Cmt(ClassRef::Named(d)) => self.cmt_action(focus, p, &d),
            _ => None,
        }
    }

    fn attr_action(&mut self, p: String, b: BaseType) -> ActStmt {
        let v = random_value(&mut self.rng, b);
        match self.rng.gen_range(0..6) {
            0..=2 => ActStmt::Set(p, Expr::Lit(v)),
            3 => {
                let y = self.var();
                ActStmt::let_(y.clone(), Expr::Lit(v), ActStmt::Set(p, Expr::Var(y)))
            }
            _ => ActStmt::UnsetAttr(p),
        }
    }

    fn members(&self, focus: &Focus, p: &str) -> Vec<Oid> {
        let Some(at) = &focus.at else {
            return Vec::new();
        };
        match crate::model::resolve(&self.state.roots, at).and_then(|n| n.payload(p)) {
            Some(Payload::Refs(is)) => is
                .iter()
                .filter(|o| self.pi.contains_key(*o))
                .cloned()
                .collect(),
            Some(Payload::Cmts(os)) => os
                .iter()
                .map(|o| o.oid.clone())
                .filter(|o| self.pi.contains_key(o))
                .collect(),
            _ => Vec::new(),
        }
    }

    fn bind(&mut self, o: Oid, body: impl FnOnce(String) -> ActStmt) -> ActStmt {
        let y = self.var();
        ActStmt::let_(y.clone(), Expr::Oid(o), body(y))
    }

    fn ref_action(&mut self, focus: &Focus, p: String, d: &str) -> Option<ActStmt> {
        let opp = self.mm.opposite(&ReferenceEnd::reference(&focus.class, &p));
        if !self.adversarial && opp.is_some_and(|e| e.kind == EndKind::Cmt) {
            return None;
        }
        if self.rng.gen_bool(0.3) {
            let members = if self.adversarial {
                self.pool(d)
            } else {
                self.members(focus, &p)
            };
            if let Some(t) = self.pick(&members) {
                return Some(self.bind(t, |y| ActStmt::Unset(p, y)));
            }
        }
        let t = self.pick(&self.pool(d))?;
        Some(if self.rng.gen_bool(0.5) {
            ActStmt::Set(p, Expr::Oid(t))
        } else {
            self.bind(t, |y| ActStmt::Set(p, Expr::Var(y)))
        })
    }

    fn cmt_action(&mut self, focus: &Focus, p: String, d: &str) -> Option<ActStmt> {
        let concrete = concrete_subclasses(self.mm, d);
        match self.rng.gen_range(0..10) {
            0..=2 => Some(ActStmt::Create(p, self.pick(&concrete)?)),
            3 | 4 if focus.depth < 2 => {
                let c = self.pick(&concrete)?;
                let y = self.var();
                let inner = Focus {
                    class: c.clone(),
                    at: None,
                    outer: focus.outer.clone(),
                    depth: focus.depth + 1,
                };
                let body = self.block(&inner);
                Some(ActStmt::let_create(
                    y.clone(),
                    p,
                    c,
                    ActStmt::snapshot(y, body),
                ))
            }
            5 | 6 => {
                let pool = self.pool(d);
                let movable: Vec<Oid> = if self.adversarial {
                    pool
                } else {
                    pool.into_iter()
                        .filter(|t| self.movable(focus, t))
                        .collect()
                };
                let t = self.pick(&movable)?;
                Some(self.bind(t, |y| ActStmt::SetCmt(p, y)))
            }
            7 => {
                let candidates = if self.adversarial {
                    self.pool(d)
                } else {
                    let at = focus.at.clone()?;
                    children_of(&self.state, &at, &p)
                        .iter()
                        .filter(|c| self.pi.contains_key(&c.oid) && is_isolated_in(&self.state, c))
                        .map(|c| c.oid.clone())
                        .collect()
                };
                let t = self.pick(&candidates)?;
                Some(self.bind(t, |y| ActStmt::Unset(p, y)))
            }
            _ if focus.depth < 2 => {
                let candidates = if self.adversarial {
                    self.pool(d)
                } else {
                    self.members(focus, &p)
                };
                let t = self.pick(&candidates)?;
                let inner = Focus {
                    class: self.pi[&t].clone(),
                    at: self.locs.get(&t).cloned(),
                    outer: focus.outer.clone(),
                    depth: focus.depth + 1,
                };
                let body = self.block(&inner);
                Some(self.bind(t, |y| ActStmt::snapshot(y, body)))
            }
            _ => None,
        }
    }

    /// `t` can be moved under the focus without hoisting: it lies outside
    /// the first-level focus and is not an ancestor of the focus.
    fn movable(&self, focus: &Focus, t: &Oid) -> bool {
        let Some(from) = self.locs.get(t) else {
            return false;
        };
        let inside_outer = focus.outer.as_ref().is_some_and(|o| from.passes_through(o));
        let above_focus = focus.at.as_ref().is_some_and(|at| at.passes_through(t));
        !inside_outer && !above_focus
    }
}

const NAMES: [&str; 5] = ["x", "y", "c", "v1", "tmp"];
const PROPS: [&str; 5] = ["name", "classes", "properties", "annotations", "nodes"];
const CLASSES: [&str; 4] = ["Package", "Class", "Property", "Node"];

fn random_expr(rng: &mut impl Rng) -> Expr {
    match rng.gen_range(0..5) {
        0 => Expr::Lit(Value::Int(rng.gen_range(-50..50))),
        1 => Expr::Lit(Value::Bool(rng.gen())),
        2 => Expr::Lit(Value::Str(
            ["", "a b", "q\"uote", "back\\slash", "line\nbreak"]
                .choose(rng)
                .unwrap()
                .to_string(),
        )),
        3 => Expr::Var(NAMES.choose(rng).unwrap().to_string()),
        _ => Expr::Oid(Oid::new(
            ["0", "1", "Package$0", "o 7"]
                .choose(rng)
                .unwrap()
                .to_string(),
        )),
    }
}

fn name(rng: &mut impl Rng, pool: &[&str]) -> String {
    pool.choose(rng).unwrap().to_string()
}

fn random_act(rng: &mut impl Rng, depth: usize) -> ActStmt {
    let leaf = depth == 0;
    match rng.gen_range(0..if leaf { 6 } else { 10 }) {
        0 => ActStmt::Create(name(rng, &PROPS), name(rng, &CLASSES)),
        1 => ActStmt::Set(name(rng, &PROPS), random_expr(rng)),
        2 => ActStmt::SetCmt(name(rng, &PROPS), name(rng, &NAMES)),
        3 => ActStmt::UnsetAttr(name(rng, &PROPS)),
        4 => ActStmt::Unset(name(rng, &PROPS), name(rng, &NAMES)),
        5 => ActStmt::Unit,
        6 => ActStmt::let_(
            name(rng, &NAMES),
            random_expr(rng),
            random_act(rng, depth - 1),
        ),
        7 => ActStmt::let_create(
            name(rng, &NAMES),
            name(rng, &PROPS),
            name(rng, &CLASSES),
            random_act(rng, depth - 1),
        ),
        8 => ActStmt::snapshot(name(rng, &NAMES), random_act(rng, depth - 1)),
        _ => ActStmt::seq(random_act(rng, depth - 1), random_act(rng, depth - 1)),
    }
}

fn random_first(rng: &mut impl Rng, depth: usize) -> Stmt {
    let leaf = depth == 0;
    match rng.gen_range(0..if leaf { 3 } else { 7 }) {
        0 => Stmt::CreateRoot(name(rng, &CLASSES)),
        1 => Stmt::DeleteRoot(name(rng, &NAMES)),
        2 => Stmt::Unit,
        3 => Stmt::snapshot(name(rng, &NAMES), random_act(rng, depth - 1)),
        4 => Stmt::let_(
            name(rng, &NAMES),
            random_expr(rng),
            random_first(rng, depth - 1),
        ),
        5 => Stmt::let_create(
            name(rng, &NAMES),
            name(rng, &CLASSES),
            random_first(rng, depth - 1),
        ),
        _ => Stmt::seq(random_first(rng, depth - 1), random_first(rng, depth - 1)),
    }
}

/// An arbitrary, possibly open and ill-typed, syntax tree of bounded depth.
pub fn random_stmt(seed: u64, max_depth: usize) -> Stmt {
    random_first(&mut rng_for(seed, 6), max_depth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::check::typecheck_program;
    use crate::fixtures;
    use crate::syntax::FreeVars;
    use crate::testkit::gen_model;

    #[test]
    fn budget_of_one_gives_unit_or_create_root() {
        let cd = fixtures::class_diagram_mm();
        let m = fixtures::pull_up_model();
        for seed in 0..20 {
            let s = gen_program(
                &cd,
                &m,
                &GenSpec {
                    seed,
                    max_stmts: 1,
                    ..GenSpec::default()
                },
            )
            .unwrap();
            assert!(matches!(s, Stmt::Unit | Stmt::CreateRoot(_)), "{s:?}");
        }
    }

    #[test]
    fn programs_are_closed_and_well_typed() {
        let g = fixtures::graph_mm();
        for seed in 0..30 {
            let spec = GenSpec::with_seed(seed);
            let m = gen_model(&g, &spec).unwrap();
            for s in [
                gen_program(&g, &m, &spec).unwrap(),
                gen_adversarial_program(&g, &m, &spec).unwrap(),
            ] {
                assert!(s.is_closed());
                assert!(stmt_size(&s) <= spec.max_stmts);
                let v = typecheck_program(&g, &m.typing, &s, &BTreeMap::new());
                assert!(v.ok(), "{}\n{}", crate::syntax::format(&s), v.to_json());
            }
        }
    }

    #[test]
    fn random_trees_are_deterministic() {
        assert_eq!(random_stmt(9, 4), random_stmt(9, 4));
        assert_eq!(stmt_size(&Stmt::Unit), 1);
    }
}
