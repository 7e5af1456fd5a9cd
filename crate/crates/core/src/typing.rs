//! Structural typing of models: the memoized object-subtyping procedure,
//! model-type subtyping, type inference for model terms and conformance.

use std::borrow::Cow;
use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::metamodel::{meet, ClassRef, FieldType, ModelType, ObjectType, ScalarType};
use crate::model::{ObjectNode, Oid, Payload, PropertyBinding, StructuredModel, Value};

/// Γ: variable typing.
pub type TypeEnvVars = BTreeMap<String, ScalarType>;
/// Π: object typing.
pub type TypeEnvOids = BTreeMap<Oid, String>;

type ClassPair = (ClassRef, ClassRef);

/// Subtyping between the class tables of two model types. Class names on
/// the left resolve in `left`, those on the right in `right`. Pairs refuted,
/// and pairs proven without assumptions, are remembered across checks.
pub struct Subtyping<'a> {
    left: &'a ModelType,
    right: &'a ModelType,
    memo: Vec<ClassPair>,
    peak: usize,
    proven: BTreeSet<ClassPair>,
    refuted: BTreeSet<ClassPair>,
}

impl<'a> Subtyping<'a> {
    pub fn new(left: &'a ModelType, right: &'a ModelType) -> Self {
        Subtyping {
            left,
            right,
            memo: Vec::new(),
            peak: 0,
            proven: BTreeSet::new(),
            refuted: BTreeSet::new(),
        }
    }

    pub fn check(&mut self, s1: &ObjectType, s2: &ObjectType) -> bool {
        self.memo.clear();
        self.peak = 0;
        self.object(s1, s2)
    }

    /// `cl(c1) <: cl(c2)`.
    pub fn check_classes(&mut self, c1: &ClassRef, c2: &ClassRef) -> bool {
        self.memo.clear();
        self.peak = 0;
        self.classes(c1, c2)
    }

    /// Largest number of class pairs assumed at once during the last check.
    pub fn memo_peak(&self) -> usize {
        self.peak
    }

    fn cl<'m>(mm: &'m ModelType, c: &ClassRef) -> Option<Cow<'m, ObjectType>> {
        match c {
            ClassRef::Named(n) => mm.cl(n).map(Cow::Borrowed),
            ClassRef::Any => Some(Cow::Owned(ObjectType::empty())),
            ClassRef::Bottom => Some(Cow::Owned(ObjectType::Bottom)),
        }
    }

    fn object(&mut self, s1: &ObjectType, s2: &ObjectType) -> bool {
        if s2.is_empty() {
            return true;
        }
        if s1.is_empty() {
            return false;
        }
        let (f1, f2) = match (s1, s2) {
            (ObjectType::Bottom, _) => return true,
            (_, ObjectType::Bottom) => return false,
            (ObjectType::Fields(f1), ObjectType::Fields(f2)) => (f1, f2),
        };
        let mut left = f1.iter().peekable();
        let mut right = f2.iter().peekable();
        loop {
            let Some(&(p2, t2)) = right.peek() else {
                return true;
            };
            let Some(&(p1, t1)) = left.peek() else {
                return false;
            };
            if p1 == p2 {
                let same_head = match (t1, t2) {
                    (FieldType::Attr(b1), FieldType::Attr(b2)) => Some(b1 == b2),
                    (FieldType::Ref(c1), FieldType::Ref(c2))
                    | (FieldType::Cmt(c1), FieldType::Cmt(c2)) => Some(self.classes(c1, c2)),
                    _ => None,
                };
                match same_head {
                    Some(true) => {
                        left.next();
                        right.next();
                        continue;
                    }
                    Some(false) => return false,
                    None => {}
                }
            }
            left.next();
        }
    }

    fn classes(&mut self, c1: &ClassRef, c2: &ClassRef) -> bool {
        if *c1 == ClassRef::Bottom {
            return true;
        }
        let pair = (c1.clone(), c2.clone());
        if self.memo.contains(&pair) || self.proven.contains(&pair) {
            return true;
        }
        if self.refuted.contains(&pair) {
            return false;
        }
        let (left, right) = (self.left, self.right);
        let (Some(t1), Some(t2)) = (Self::cl(left, c1), Self::cl(right, c2)) else {
            return false;
        };
        self.memo.push(pair);
        self.peak = self.peak.max(self.memo.len());
        let ok = self.object(&t1, &t2);
        let pair = self.memo.pop().expect("pushed above");
        if !ok {
            self.refuted.insert(pair);
        } else if self.memo.is_empty() {
            self.proven.insert(pair);
        }
        ok
    }
}

/// `s1 <: s2` within one model type.
pub fn subtype_of(mm: &ModelType, s1: &ObjectType, s2: &ObjectType) -> bool {
    Subtyping::new(mm, mm).check(s1, s2)
}

/// Whether `cl(c1) <: cl(c2)` for two classes of `mm`.
pub fn class_subtype(mm: &ModelType, c1: &ClassRef, c2: &ClassRef) -> bool {
    Subtyping::new(mm, mm).check_classes(c1, c2)
}

/// `mm1 <: mm2`: compare the root class types, each side resolving class
/// names in its own table.
pub fn model_subtype(mm1: &ModelType, mm2: &ModelType) -> bool {
    let (Some(r1), Some(r2)) = (mm1.cl(&mm1.root), mm2.cl(&mm2.root)) else {
        return false;
    };
    Subtyping::new(mm1, mm2).check(r1, r2)
}

/// `ς =: ς′`: the inferred type uses only declared names and is a subtype.
pub fn refines(mm: &ModelType, inferred: &ObjectType, declared: &ObjectType) -> bool {
    refines_with(&mut Subtyping::new(mm, mm), inferred, declared)
}

fn refines_with(sub: &mut Subtyping<'_>, inferred: &ObjectType, declared: &ObjectType) -> bool {
    let (ObjectType::Fields(fi), ObjectType::Fields(fd)) = (inferred, declared) else {
        return matches!(inferred, ObjectType::Bottom);
    };
    fi.keys().all(|k| fd.contains_key(k)) && sub.check(inferred, declared)
}

/// A model term.
#[derive(Clone, Copy, Debug)]
pub enum Term<'a> {
    Value(&'a Value),
    Oid(&'a Oid),
    Refs(&'a [Oid]),
    Object(&'a ObjectNode),
    Objects(&'a [ObjectNode]),
    Props(&'a [PropertyBinding]),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Type {
    Scalar(ScalarType),
    Object(ObjectType),
    /// Type of an object or collection of objects, given by its class.
    Class(ClassRef),
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Scalar(s) => write!(f, "{s}"),
            Type::Object(o) => write!(f, "{o}"),
            Type::Class(c) => write!(f, "{c}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{rule} at {path}: {message}")]
pub struct TypeError {
    pub rule: &'static str,
    pub path: String,
    pub message: String,
}

struct Infer<'a> {
    mm: &'a ModelType,
    pi: &'a TypeEnvOids,
    sub: RefCell<Subtyping<'a>>,
}

impl<'a> Infer<'a> {
    fn new(mm: &'a ModelType, pi: &'a TypeEnvOids) -> Self {
        Infer {
            mm,
            pi,
            sub: RefCell::new(Subtyping::new(mm, mm)),
        }
    }
}

impl Infer<'_> {
    fn class_of(&self, o: &Oid, path: &str, rule: &'static str) -> Result<ClassRef, TypeError> {
        match self.pi.get(o) {
            Some(c) if self.mm.has_class(c) => Ok(ClassRef::named(c.clone())),
            Some(c) => Err(TypeError {
                rule,
                path: path.into(),
                message: format!("object {o} has unknown class {c}"),
            }),
            None => Err(TypeError {
                rule,
                path: path.into(),
                message: format!("object {o} is untyped"),
            }),
        }
    }

    /// Collection rules 1, 2, 3 folding right over the elements.
    fn join(&self, head: ClassRef, tail: ClassRef) -> ClassRef {
        if tail == ClassRef::Bottom {
            return head;
        }
        if self.sub.borrow_mut().check_classes(&head, &tail) {
            tail
        } else if self.sub.borrow_mut().check_classes(&tail, &head) {
            head
        } else {
            meet(self.mm, &head, &tail)
        }
    }

    fn refs(&self, is: &[Oid], path: &str) -> Result<ClassRef, TypeError> {
        let mut acc = ClassRef::Bottom;
        for o in is.iter().rev() {
            let c = self.class_of(o, path, "T-Ref")?;
            acc = self.join(c, acc);
        }
        Ok(acc)
    }

    fn objects(&self, os: &[ObjectNode], path: &str) -> Result<ClassRef, TypeError> {
        let mut acc = ClassRef::Bottom;
        for o in os.iter().rev() {
            let c = self.object(o, &child_path(path, &o.oid))?;
            acc = self.join(c, acc);
        }
        Ok(acc)
    }

    fn object(&self, o: &ObjectNode, path: &str) -> Result<ClassRef, TypeError> {
        let c = self.class_of(&o.oid, path, "T-Obj")?;
        let inferred = self.props(&o.props, path)?;
        let declared = self
            .mm
            .cl(c.name().expect("named class"))
            .expect("class checked");
        if !refines_with(&mut self.sub.borrow_mut(), &inferred, declared) {
            return Err(TypeError {
                rule: "T-Obj",
                path: path.into(),
                message: format!("inferred {inferred} does not refine {c} = {declared}"),
            });
        }
        Ok(c)
    }

    fn props(&self, ps: &[PropertyBinding], path: &str) -> Result<ObjectType, TypeError> {
        let mut fields = BTreeMap::new();
        for b in ps {
            let here = format!("{path}.{}", b.name);
            let ty = match &b.payload {
                Payload::Attr(v) => FieldType::Attr(v.base_type()),
                Payload::Refs(is) => FieldType::Ref(self.refs(is, &here)?),
                Payload::Cmts(os) => FieldType::Cmt(self.objects(os, &here)?),
            };
            fields.insert(b.name.clone(), ty);
        }
        Ok(ObjectType::Fields(fields))
    }
}

fn child_path(path: &str, o: &Oid) -> String {
    if path.is_empty() {
        o.to_string()
    } else {
        format!("{path}.{o}")
    }
}

/// Infer the type of a model term.
pub fn infer_type(
    mm: &ModelType,
    _gamma: &TypeEnvVars,
    pi: &TypeEnvOids,
    term: Term<'_>,
) -> Result<Type, TypeError> {
    let inf = Infer::new(mm, pi);
    Ok(match term {
        Term::Value(v) => Type::Scalar(ScalarType::Base(v.base_type())),
        Term::Oid(o) => Type::Scalar(ScalarType::Ref(inf.class_of(o, &o.to_string(), "T-Ref")?)),
        Term::Refs(is) => Type::Scalar(ScalarType::Ref(inf.refs(is, "")?)),
        Term::Object(o) => Type::Class(inf.object(o, &o.oid.to_string())?),
        Term::Objects(os) => Type::Class(inf.objects(os, "")?),
        Term::Props(ps) => Type::Object(inf.props(ps, "")?),
    })
}

/// Root class inferred for `model`, checked to subsume under the root class
/// of `mm`. The empty model infers `⊥`.
pub fn check_conformance(mm: &ModelType, model: &StructuredModel) -> Result<ClassRef, TypeError> {
    let inf = Infer::new(mm, &model.typing);
    let c = inf.objects(&model.roots, "")?;
    let root = ClassRef::named(mm.root.clone());
    if inf.sub.borrow_mut().check_classes(&c, &root) {
        Ok(c)
    } else {
        Err(TypeError {
            rule: "conformance",
            path: "roots".into(),
            message: format!("inferred root type {c} does not subsume under {root}"),
        })
    }
}

pub fn conforms(mm: &ModelType, model: &StructuredModel) -> bool {
    check_conformance(mm, model).is_ok()
}
