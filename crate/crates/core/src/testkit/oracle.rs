//! Reference implementations by exhaustive search, kept apart from the
//! production algorithms so that the two can be compared.

use std::collections::{BTreeMap, BTreeSet};

use crate::metamodel::{ClassRef, FieldType, ModelType, ObjectType, ScalarType};
use crate::model::{
    walk_set, ObjectNode, Oid, Payload, PropertyBinding, StructuredModel, ValidityReport,
    Violation, ViolationKind,
};
use crate::typing::{Term, Type, TypeEnvOids};

/// Validity by brute force: every pointed object is looked up by a linear
/// scan, and the opposite of each end by scanning the opposite table for a
/// key declared by a superclass of the owner.
pub fn oracle_validate(model: &StructuredModel, mm: &ModelType) -> ValidityReport {
    let mut all: Vec<&ObjectNode> = Vec::new();
    walk_set(&model.roots, &mut |n| all.push(n));
    let mut violations = Vec::new();
    for owner in &all {
        let class = model
            .typing
            .get(&owner.oid)
            .map(String::as_str)
            .unwrap_or("");
        for b in &owner.props {
            let targets: Vec<&Oid> = match &b.payload {
                Payload::Attr(_) => continue,
                Payload::Refs(is) => is.iter().collect(),
                Payload::Cmts(os) => os.iter().map(|o| &o.oid).collect(),
            };
            let is_cmt = matches!(b.payload, Payload::Cmts(_));
            let back = mm.oe.iter().find_map(|(k, v)| {
                let kind_matches = matches!(k.kind, crate::metamodel::EndKind::Cmt) == is_cmt;
                (kind_matches
                    && k.prop == b.name
                    && mm.sr.contains(&(class.to_owned(), k.owner.clone())))
                .then_some(v)
            });
            for t in targets {
                let violation = |kind| Violation {
                    kind,
                    owner: owner.oid.clone(),
                    property: b.name.clone(),
                    target: t.clone(),
                };
                let Some(other) = all.iter().find(|n| &n.oid == t) else {
                    violations.push(violation(ViolationKind::DanglingReference));
                    continue;
                };
                let Some(back) = back else { continue };
                let mentions_owner = other.props.iter().any(|ob| {
                    ob.name == back.prop
                        && match &ob.payload {
                            Payload::Refs(is) => is.iter().any(|o| o == &owner.oid),
                            Payload::Cmts(os) => os.iter().any(|o| o.oid == owner.oid),
                            Payload::Attr(_) => false,
                        }
                });
                if !mentions_owner {
                    violations.push(violation(ViolationKind::InconsistentOpposite));
                }
            }
        }
    }
    violations.sort();
    ValidityReport { violations }
}

/// Subtyping as the greatest fixed point of the one-step field comparison
/// over all pairs of classes, computed by iterated refinement.
pub struct OracleSubtyping<'a> {
    left: &'a ModelType,
    right: &'a ModelType,
    rel: BTreeSet<(ClassRef, ClassRef)>,
}

fn class_refs(mm: &ModelType) -> Vec<ClassRef> {
    mm.classes
        .keys()
        .map(|c| ClassRef::named(c.clone()))
        .chain([ClassRef::Any, ClassRef::Bottom])
        .collect()
}

fn cl_of(mm: &ModelType, c: &ClassRef) -> ObjectType {
    match c {
        ClassRef::Named(n) => mm.cl(n).cloned().unwrap_or(ObjectType::Bottom),
        ClassRef::Any => ObjectType::empty(),
        ClassRef::Bottom => ObjectType::Bottom,
    }
}

fn one_step(s1: &ObjectType, s2: &ObjectType, rel: &BTreeSet<(ClassRef, ClassRef)>) -> bool {
    if s2.is_empty() {
        return true;
    }
    if s1.is_empty() {
        return false;
    }
    let (f1, f2) = match (s1, s2) {
        (ObjectType::Bottom, _) => return true,
        (_, ObjectType::Bottom) => return false,
        (ObjectType::Fields(a), ObjectType::Fields(b)) => (a, b),
    };
    f2.iter().all(|(p, t2)| match (f1.get(p), t2) {
        (Some(FieldType::Attr(b1)), FieldType::Attr(b2)) => b1 == b2,
        (Some(FieldType::Ref(c1)), FieldType::Ref(c2))
        | (Some(FieldType::Cmt(c1)), FieldType::Cmt(c2)) => {
            *c1 == ClassRef::Bottom || rel.contains(&(c1.clone(), c2.clone()))
        }
        _ => false,
    })
}

impl<'a> OracleSubtyping<'a> {
    pub fn new(left: &'a ModelType, right: &'a ModelType) -> Self {
        let mut rel: BTreeSet<(ClassRef, ClassRef)> = class_refs(left)
            .into_iter()
            .flat_map(|a| class_refs(right).into_iter().map(move |b| (a.clone(), b)))
            .collect();
        loop {
            let next: BTreeSet<_> = rel
                .iter()
                .filter(|(a, b)| one_step(&cl_of(left, a), &cl_of(right, b), &rel))
                .cloned()
                .collect();
            if next == rel {
                break;
            }
            rel = next;
        }
        OracleSubtyping { left, right, rel }
    }

    pub fn object(&self, s1: &ObjectType, s2: &ObjectType) -> bool {
        one_step(s1, s2, &self.rel)
    }

    pub fn classes(&self, c1: &ClassRef, c2: &ClassRef) -> bool {
        self.object(&cl_of(self.left, c1), &cl_of(self.right, c2))
    }

    pub fn models(&self) -> bool {
        self.classes(
            &ClassRef::named(self.left.root.clone()),
            &ClassRef::named(self.right.root.clone()),
        )
    }
}

/// Every type derivable for `term` by any rule whose premises hold. Typing
/// is unique exactly when the result has at most one element.
pub fn oracle_types(mm: &ModelType, pi: &TypeEnvOids, term: Term<'_>) -> Vec<Type> {
    let o = Derivations {
        mm,
        pi,
        sub: OracleSubtyping::new(mm, mm),
    };
    let out: Vec<Type> = match term {
        Term::Value(v) => vec![Type::Scalar(ScalarType::Base(v.base_type()))],
        Term::Oid(x) => o
            .oid(x)
            .into_iter()
            .map(|c| Type::Scalar(ScalarType::Ref(c)))
            .collect(),
        Term::Refs(is) => o
            .refs(is)
            .into_iter()
            .map(|c| Type::Scalar(ScalarType::Ref(c)))
            .collect(),
        Term::Object(n) => o.object(n).into_iter().map(Type::Class).collect(),
        Term::Objects(os) => o.objects(os).into_iter().map(Type::Class).collect(),
        Term::Props(ps) => o.props(ps).into_iter().map(Type::Object).collect(),
    };
    dedup(out)
}

/// Conformance through [`oracle_types`]: the roots have a unique type that
/// subsumes under the root class.
pub fn oracle_conforms(mm: &ModelType, model: &StructuredModel) -> bool {
    let o = Derivations {
        mm,
        pi: &model.typing,
        sub: OracleSubtyping::new(mm, mm),
    };
    let ts = dedup(o.objects(&model.roots));
    ts.len() == 1 && o.sub.classes(&ts[0], &ClassRef::named(mm.root.clone()))
}

fn dedup<T: PartialEq>(mut v: Vec<T>) -> Vec<T> {
    let mut out = Vec::with_capacity(v.len());
    for x in v.drain(..) {
        if !out.contains(&x) {
            out.push(x);
        }
    }
    out
}

struct Derivations<'a> {
    mm: &'a ModelType,
    pi: &'a TypeEnvOids,
    sub: OracleSubtyping<'a>,
}

impl Derivations<'_> {
    fn oid(&self, o: &Oid) -> Vec<ClassRef> {
        self.pi
            .get(o)
            .filter(|c| self.mm.has_class(c))
            .map(|c| ClassRef::named(c.clone()))
            .into_iter()
            .collect()
    }

    fn meet(&self, a: &ClassRef, b: &ClassRef) -> ClassRef {
        let (ClassRef::Named(x), ClassRef::Named(y)) = (a, b) else {
            return match (a, b) {
                (ClassRef::Bottom, c) | (c, ClassRef::Bottom) => c.clone(),
                _ => ClassRef::Any,
            };
        };
        let sups = |c: &str| -> BTreeSet<String> {
            self.mm
                .sr
                .iter()
                .filter(|(s, _)| s == c)
                .map(|(_, t)| t.clone())
                .collect()
        };
        let common: Vec<String> = sups(x).intersection(&sups(y)).cloned().collect();
        let mut best: Option<(usize, &String)> = None;
        for s in &common {
            let has_lower = common
                .iter()
                .any(|t| t != s && self.mm.sr.contains(&(t.clone(), s.clone())));
            if has_lower {
                continue;
            }
            let width = self
                .mm
                .cl(s)
                .and_then(ObjectType::fields)
                .map_or(0, BTreeMap::len);
            if best.is_none_or(|(w, n)| width > w || (width == w && s < n)) {
                best = Some((width, s));
            }
        }
        best.map_or(ClassRef::Any, |(_, s)| ClassRef::named(s.clone()))
    }

    fn collect(&self, heads: Vec<ClassRef>, tails: Vec<ClassRef>) -> Vec<ClassRef> {
        let mut out = Vec::new();
        for h in &heads {
            for t in &tails {
                let down = self.sub.classes(h, t);
                let up = self.sub.classes(t, h);
                if down {
                    out.push(t.clone());
                }
                if up {
                    out.push(h.clone());
                }
                if !down && !up {
                    out.push(self.meet(h, t));
                }
            }
        }
        dedup(out)
    }

    fn refs(&self, is: &[Oid]) -> Vec<ClassRef> {
        match is.split_first() {
            None => vec![ClassRef::Bottom],
            Some((h, rest)) => self.collect(self.oid(h), self.refs(rest)),
        }
    }

    fn objects(&self, os: &[ObjectNode]) -> Vec<ClassRef> {
        match os.split_first() {
            None => vec![ClassRef::Bottom],
            Some((h, rest)) => self.collect(self.object(h), self.objects(rest)),
        }
    }

    fn object(&self, n: &ObjectNode) -> Vec<ClassRef> {
        let mut out = Vec::new();
        for c in self.oid(&n.oid) {
            let declared = cl_of(self.mm, &c);
            for inferred in self.props(&n.props) {
                let names_declared = match (&inferred, &declared) {
                    (ObjectType::Fields(fi), ObjectType::Fields(fd)) => {
                        fi.keys().all(|k| fd.contains_key(k))
                    }
                    (ObjectType::Bottom, _) => true,
                    _ => false,
                };
                if names_declared && self.sub.object(&inferred, &declared) {
                    out.push(c.clone());
                }
            }
        }
        dedup(out)
    }

    fn props(&self, ps: &[PropertyBinding]) -> Vec<ObjectType> {
        let mut acc: Vec<BTreeMap<String, FieldType>> = vec![BTreeMap::new()];
        for b in ps {
            let options: Vec<FieldType> = match &b.payload {
                Payload::Attr(v) => vec![FieldType::Attr(v.base_type())],
                Payload::Refs(is) => self.refs(is).into_iter().map(FieldType::Ref).collect(),
                Payload::Cmts(os) => self.objects(os).into_iter().map(FieldType::Cmt).collect(),
            };
            acc = acc
                .iter()
                .flat_map(|m| {
                    options.iter().map(move |t| {
                        let mut m = m.clone();
                        m.insert(b.name.clone(), t.clone());
                        m
                    })
                })
                .collect();
        }
        dedup(acc.into_iter().map(ObjectType::Fields).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn fixture_models_have_unique_types() {
        let cd = fixtures::class_diagram_mm();
        let m = fixtures::pull_up_model();
        let ts = oracle_types(&cd, &m.typing, Term::Objects(&m.roots));
        assert_eq!(ts, vec![Type::Class(ClassRef::named("Package"))]);
        assert!(oracle_conforms(&cd, &m));
    }

    #[test]
    fn garage_meets_at_vehicle() {
        let v = fixtures::vehicles_mm();
        let m = fixtures::garage_model();
        let g = &m.roots[0];
        let Some(Payload::Cmts(vs)) = g.payload("vehicles") else {
            panic!()
        };
        assert_eq!(
            oracle_types(&v, &m.typing, Term::Objects(vs)),
            vec![Type::Class(ClassRef::named("Vehicle"))]
        );
    }

    #[test]
    fn duck_typing_of_state_machines() {
        let sm = fixtures::state_machine_mm();
        let g = fixtures::graph_mm();
        let renamed = fixtures::state_machine_renamed_mm();
        assert!(OracleSubtyping::new(&sm, &g).models());
        assert!(!OracleSubtyping::new(&g, &sm).models());
        assert!(!OracleSubtyping::new(&renamed, &g).models());
    }
}
