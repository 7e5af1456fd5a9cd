//! Model types: flattened class tables, default property sets, opposite
//! reference ends, the subclass relation and the meet of two classes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Oid, Payload, PropertyBinding, Value};
use crate::typing;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BaseType {
    String,
    Integer,
    Boolean,
}

impl BaseType {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "String" => Some(BaseType::String),
            "Integer" => Some(BaseType::Integer),
            "Boolean" => Some(BaseType::Boolean),
            _ => None,
        }
    }

    pub fn default_value(self) -> Value {
        match self {
            BaseType::String => Value::Str(String::new()),
            BaseType::Integer => Value::Int(0),
            BaseType::Boolean => Value::Bool(false),
        }
    }
}

impl fmt::Display for BaseType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BaseType::String => "String",
            BaseType::Integer => "Integer",
            BaseType::Boolean => "Boolean",
        })
    }
}

/// Class position in a reference or containment type.
///
/// `Any` is the top class (its object type is the empty type). `Bottom` is
/// the class of an empty collection: it is only produced by inference and
/// is subsumed by every class.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ClassRef {
    Named(String),
    Any,
    Bottom,
}

impl ClassRef {
    pub fn named(c: impl Into<String>) -> Self {
        ClassRef::Named(c.into())
    }

    pub fn name(&self) -> Option<&str> {
        match self {
            ClassRef::Named(c) => Some(c),
            _ => None,
        }
    }
}

impl fmt::Display for ClassRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClassRef::Named(c) => f.write_str(c),
            ClassRef::Any => f.write_str("Any"),
            ClassRef::Bottom => f.write_str("⊥"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FieldType {
    Attr(BaseType),
    Ref(ClassRef),
    Cmt(ClassRef),
}

impl fmt::Display for FieldType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldType::Attr(b) => write!(f, "{b}"),
            FieldType::Ref(c) => write!(f, "ref {c}"),
            FieldType::Cmt(c) => write!(f, "cmt {c}"),
        }
    }
}

/// Object type: a record of fields, the empty record `∅`, or `⊥`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ObjectType {
    Fields(BTreeMap<String, FieldType>),
    Bottom,
}

impl ObjectType {
    pub fn empty() -> Self {
        ObjectType::Fields(BTreeMap::new())
    }

    pub fn from_fields<I, S>(fields: I) -> Self
    where
        I: IntoIterator<Item = (S, FieldType)>,
        S: Into<String>,
    {
        ObjectType::Fields(fields.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, ObjectType::Fields(f) if f.is_empty())
    }

    pub fn field(&self, name: &str) -> Option<&FieldType> {
        match self {
            ObjectType::Fields(f) => f.get(name),
            ObjectType::Bottom => None,
        }
    }

    pub fn fields(&self) -> Option<&BTreeMap<String, FieldType>> {
        match self {
            ObjectType::Fields(f) => Some(f),
            ObjectType::Bottom => None,
        }
    }
}

impl fmt::Display for ObjectType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObjectType::Bottom => f.write_str("⊥"),
            ObjectType::Fields(fs) if fs.is_empty() => f.write_str("∅"),
            ObjectType::Fields(fs) => {
                f.write_str("{")?;
                for (i, (k, v)) in fs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{k}: {v}")?;
                }
                f.write_str("}")
            }
        }
    }
}

/// Types of expressions and statements.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ScalarType {
    Base(BaseType),
    Ref(ClassRef),
    Unit,
    ActUnit,
}

impl fmt::Display for ScalarType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarType::Base(b) => write!(f, "{b}"),
            ScalarType::Ref(c) => write!(f, "ref {c}"),
            ScalarType::Unit => f.write_str("()"),
            ScalarType::ActUnit => f.write_str("•"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EndKind {
    /// Plain reference end.
    Ref,
    /// Containment end.
    Cmt,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ReferenceEnd {
    pub kind: EndKind,
    pub owner: String,
    pub prop: String,
}

impl ReferenceEnd {
    pub fn new(kind: EndKind, owner: impl Into<String>, prop: impl Into<String>) -> Self {
        ReferenceEnd {
            kind,
            owner: owner.into(),
            prop: prop.into(),
        }
    }

    pub fn reference(owner: impl Into<String>, prop: impl Into<String>) -> Self {
        Self::new(EndKind::Ref, owner, prop)
    }

    pub fn containment(owner: impl Into<String>, prop: impl Into<String>) -> Self {
        Self::new(EndKind::Cmt, owner, prop)
    }
}

impl fmt::Display for ReferenceEnd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let k = match self.kind {
            EndKind::Ref => "bRE",
            EndKind::Cmt => "bCE",
        };
        write!(f, "{k}({}, {})", self.owner, self.prop)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassInfo {
    pub is_abstract: bool,
    pub supertypes: Vec<String>,
    /// Flattened fields, inherited ones included.
    pub cl: ObjectType,
    /// Class that declares each field of `cl`.
    pub declared_in: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelType {
    pub name: String,
    pub root: String,
    pub classes: BTreeMap<String, ClassInfo>,
    /// Opposite ends, keyed by the declaring class of each end.
    pub oe: BTreeMap<ReferenceEnd, ReferenceEnd>,
    /// Reflexive-transitive subclass relation as (sub, super) pairs.
    pub sr: BTreeSet<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetamodelError {
    #[error("containment {0} declared opposite of containment {1}")]
    CmtOppositeCmt(ReferenceEnd, ReferenceEnd),
    #[error("opposite of {end} is {opposite}, which does not point back")]
    NonInvolutiveOpposite { end: ReferenceEnd, opposite: String },
    #[error("class {0} declared more than once")]
    DuplicateClass(String),
    #[error("classes {0} and {1} have equivalent object types")]
    NonInjectiveCl(String, String),
    #[error("root class {0} is not declared")]
    UnknownRoot(String),
    #[error("inheritance cycle through class {0}")]
    CyclicInheritance(String),
    #[error("unknown class {0}")]
    UnknownClass(String),
    #[error("unknown base type {ty} for {class}.{prop}")]
    UnknownBaseType {
        class: String,
        prop: String,
        ty: String,
    },
    #[error("property {prop} declared more than once in {class}")]
    DuplicateProperty { class: String, prop: String },
    #[error("property {prop} of {class} is inherited with conflicting types")]
    ConflictingProperty { class: String, prop: String },
    #[error("opposite {opposite} of {class}.{prop} is not a reference or containment of {target}")]
    UnknownOpposite {
        class: String,
        prop: String,
        target: String,
        opposite: String,
    },
    #[error("malformed metamodel document: {0}")]
    Json(String),
}

// ---------------------------------------------------------------------------
// Document format

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetamodelDoc {
    #[serde(default)]
    pub name: String,
    pub root: String,
    #[serde(
        deserialize_with = "crate::json::ordered_entries",
        serialize_with = "crate::json::as_map"
    )]
    pub classes: Vec<(String, ClassDoc)>,
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassDoc {
    #[serde(default, rename = "abstract")]
    pub is_abstract: bool,
    #[serde(default)]
    pub supertypes: Vec<String>,
    #[serde(
        default,
        deserialize_with = "crate::json::ordered_entries",
        serialize_with = "crate::json::as_map"
    )]
    pub properties: Vec<(String, PropertyDoc)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PropertyDoc {
    Attr {
        #[serde(rename = "type")]
        ty: String,
    },
    Ref {
        class: String,
        #[serde(default)]
        opposite: Option<String>,
    },
    Cmt {
        class: String,
        #[serde(default)]
        opposite: Option<String>,
    },
}

impl MetamodelDoc {
    pub fn from_json(text: &str) -> Result<Self, MetamodelError> {
        serde_json::from_str(text).map_err(|e| MetamodelError::Json(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metamodel documents always serialize")
    }
}

impl ModelType {
    pub fn from_json(text: &str) -> Result<Self, MetamodelError> {
        build_metamodel(&MetamodelDoc::from_json(text)?)
    }

    pub fn has_class(&self, c: &str) -> bool {
        self.classes.contains_key(c)
    }

    pub fn class_names(&self) -> impl Iterator<Item = &str> {
        self.classes.keys().map(String::as_str)
    }

    pub fn is_abstract(&self, c: &str) -> bool {
        self.classes.get(c).is_some_and(|i| i.is_abstract)
    }

    /// `cl(c)` for a declared class.
    pub fn cl(&self, c: &str) -> Option<&ObjectType> {
        self.classes.get(c).map(|i| &i.cl)
    }

    pub fn is_subclass(&self, sub: &str, sup: &str) -> bool {
        self.sr.contains(&(sub.to_owned(), sup.to_owned()))
    }

    /// All declared subclasses of `c`, `c` included.
    pub fn subclasses<'a>(&'a self, c: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.sr
            .iter()
            .filter(move |(_, sup)| sup == c)
            .map(|(sub, _)| sub.as_str())
    }

    pub fn field(&self, c: &str, prop: &str) -> Option<&FieldType> {
        self.cl(c)?.field(prop)
    }

    pub fn opposite(&self, end: &ReferenceEnd) -> Option<ReferenceEnd> {
        opposite(self, end)
    }
}

/// Validate a metamodel document and build its model type.
pub fn build_metamodel(doc: &MetamodelDoc) -> Result<ModelType, MetamodelError> {
    let mut decls: BTreeMap<&str, &ClassDoc> = BTreeMap::new();
    for (name, c) in &doc.classes {
        if decls.insert(name, c).is_some() {
            return Err(MetamodelError::DuplicateClass(name.clone()));
        }
        let mut seen = BTreeSet::new();
        for (p, _) in &c.properties {
            if !seen.insert(p) {
                return Err(MetamodelError::DuplicateProperty {
                    class: name.clone(),
                    prop: p.clone(),
                });
            }
        }
    }
    if !decls.contains_key(doc.root.as_str()) {
        return Err(MetamodelError::UnknownRoot(doc.root.clone()));
    }
    for c in decls.values() {
        for s in &c.supertypes {
            if !decls.contains_key(s.as_str()) {
                return Err(MetamodelError::UnknownClass(s.clone()));
            }
        }
    }

    // Ancestors (reflexive) in a stable order: self first, then depth-first
    // through declared supertypes.
    let mut ancestors: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for &name in decls.keys() {
        let mut order = Vec::new();
        let mut path = Vec::new();
        collect_ancestors(name, &decls, &mut path, &mut order)?;
        ancestors.insert(name, order);
    }
    let sr: BTreeSet<(String, String)> = ancestors
        .iter()
        .flat_map(|(c, sups)| sups.iter().map(move |s| (c.to_string(), s.to_string())))
        .collect();

    let mut classes = BTreeMap::new();
    for (&name, sups) in &ancestors {
        let mut fields: BTreeMap<String, FieldType> = BTreeMap::new();
        let mut declared_in: BTreeMap<String, String> = BTreeMap::new();
        for &owner in sups {
            for (p, pd) in &decls[owner].properties {
                let ty = field_type(owner, p, pd, &decls)?;
                match declared_in.get(p) {
                    Some(prev) if prev == owner => {}
                    Some(_) => {
                        return Err(MetamodelError::ConflictingProperty {
                            class: name.into(),
                            prop: p.clone(),
                        })
                    }
                    None => {
                        declared_in.insert(p.clone(), owner.to_owned());
                        fields.insert(p.clone(), ty);
                    }
                }
            }
        }
        classes.insert(
            name.to_owned(),
            ClassInfo {
                is_abstract: decls[name].is_abstract,
                supertypes: decls[name].supertypes.clone(),
                cl: ObjectType::Fields(fields),
                declared_in,
            },
        );
    }

    let mut oe = BTreeMap::new();
    for (&owner, c) in &decls {
        for (p, pd) in &c.properties {
            let (kind, target, Some(q)) = (match pd {
                PropertyDoc::Attr { .. } => continue,
                PropertyDoc::Ref { class, opposite } => (EndKind::Ref, class, opposite.as_ref()),
                PropertyDoc::Cmt { class, opposite } => (EndKind::Cmt, class, opposite.as_ref()),
            }) else {
                continue;
            };
            let here = ReferenceEnd::new(kind, owner, p);
            let info: &ClassInfo = &classes[target.as_str()];
            let unknown = || MetamodelError::UnknownOpposite {
                class: owner.into(),
                prop: p.clone(),
                target: target.clone(),
                opposite: q.clone(),
            };
            let q_owner = info.declared_in.get(q).ok_or_else(unknown)?;
            let (q_kind, q_class, q_opp) = match &decls[q_owner.as_str()]
                .properties
                .iter()
                .find(|(n, _)| n == q)
                .unwrap()
                .1
            {
                PropertyDoc::Attr { .. } => return Err(unknown()),
                PropertyDoc::Ref { class, opposite } => (EndKind::Ref, class, opposite),
                PropertyDoc::Cmt { class, opposite } => (EndKind::Cmt, class, opposite),
            };
            let there = ReferenceEnd::new(q_kind, q_owner.clone(), q.clone());
            if kind == EndKind::Cmt && q_kind == EndKind::Cmt {
                return Err(MetamodelError::CmtOppositeCmt(here, there));
            }
            let points_back = q_opp.as_deref() == Some(p.as_str())
                && sr.contains(&(owner.to_owned(), q_class.clone()))
                && classes[q_class.as_str()]
                    .declared_in
                    .get(p)
                    .map(String::as_str)
                    == Some(owner);
            if !points_back {
                return Err(MetamodelError::NonInvolutiveOpposite {
                    end: here,
                    opposite: there.to_string(),
                });
            }
            oe.insert(here, there);
        }
    }

    let mm = ModelType {
        name: doc.name.clone(),
        root: doc.root.clone(),
        classes,
        oe,
        sr,
    };

    let names: Vec<&String> = mm.classes.keys().collect();
    for (i, a) in names.iter().enumerate() {
        for b in &names[i + 1..] {
            let (ta, tb) = (&mm.classes[*a].cl, &mm.classes[*b].cl);
            if ta == tb || (typing::subtype_of(&mm, ta, tb) && typing::subtype_of(&mm, tb, ta)) {
                return Err(MetamodelError::NonInjectiveCl((*a).clone(), (*b).clone()));
            }
        }
    }
    Ok(mm)
}

fn collect_ancestors<'a>(
    c: &'a str,
    decls: &BTreeMap<&'a str, &'a ClassDoc>,
    path: &mut Vec<&'a str>,
    order: &mut Vec<&'a str>,
) -> Result<(), MetamodelError> {
    if path.contains(&c) {
        return Err(MetamodelError::CyclicInheritance(c.to_owned()));
    }
    if order.contains(&c) {
        return Ok(());
    }
    order.push(c);
    path.push(c);
    let (&key, doc) = decls.get_key_value(c).expect("supertypes checked");
    debug_assert_eq!(key, c);
    for s in &doc.supertypes {
        let s: &'a str = decls
            .get_key_value(s.as_str())
            .map(|(k, _)| *k)
            .expect("supertypes checked");
        collect_ancestors(s, decls, path, order)?;
    }
    path.pop();
    Ok(())
}

fn field_type(
    owner: &str,
    prop: &str,
    pd: &PropertyDoc,
    decls: &BTreeMap<&str, &ClassDoc>,
) -> Result<FieldType, MetamodelError> {
    let class = |c: &String| {
        if decls.contains_key(c.as_str()) {
            Ok(ClassRef::Named(c.clone()))
        } else {
            Err(MetamodelError::UnknownClass(c.clone()))
        }
    };
    Ok(match pd {
        PropertyDoc::Attr { ty } => {
            FieldType::Attr(
                BaseType::parse(ty).ok_or_else(|| MetamodelError::UnknownBaseType {
                    class: owner.into(),
                    prop: prop.into(),
                    ty: ty.clone(),
                })?,
            )
        }
        PropertyDoc::Ref { class: c, .. } => FieldType::Ref(class(c)?),
        PropertyDoc::Cmt { class: c, .. } => FieldType::Cmt(class(c)?),
    })
}

/// `cl(c)`; `Any` maps to `∅` and `Bottom` to `⊥`.
pub fn class_type(mm: &ModelType, c: &ClassRef) -> Result<ObjectType, MetamodelError> {
    match c {
        ClassRef::Named(n) => mm
            .cl(n)
            .cloned()
            .ok_or_else(|| MetamodelError::UnknownClass(n.clone())),
        ClassRef::Any => Ok(ObjectType::empty()),
        ClassRef::Bottom => Ok(ObjectType::Bottom),
    }
}

/// Default property set of a fresh instance of `c`. When the object is
/// created inside a containment whose opposite is `container.1`, that
/// reference starts out pointing at the container.
pub fn default_props(
    mm: &ModelType,
    c: &str,
    container: Option<(&Oid, &str)>,
) -> Result<Vec<PropertyBinding>, MetamodelError> {
    let fields = mm
        .cl(c)
        .and_then(ObjectType::fields)
        .ok_or_else(|| MetamodelError::UnknownClass(c.to_owned()))?;
    Ok(fields
        .iter()
        .map(|(p, ty)| {
            let payload = match ty {
                FieldType::Attr(b) => Payload::Attr(b.default_value()),
                FieldType::Ref(_) => match container {
                    Some((o, q)) if q == p => Payload::Refs(vec![o.clone()]),
                    _ => Payload::Refs(Vec::new()),
                },
                FieldType::Cmt(_) => Payload::Cmts(Vec::new()),
            };
            PropertyBinding::new(p.clone(), payload)
        })
        .collect())
}

/// Opposite end of `end`, looked up through the class that declares the
/// property. The returned end names its declaring class as owner.
pub fn opposite(mm: &ModelType, end: &ReferenceEnd) -> Option<ReferenceEnd> {
    let info = mm.classes.get(&end.owner)?;
    let declaring = info.declared_in.get(&end.prop)?;
    let key = ReferenceEnd::new(end.kind, declaring.clone(), end.prop.clone());
    mm.oe.get(&key).cloned()
}

/// Least informative common supertype. `Bottom` is the unit, `Any` absorbs,
/// and unrelated classes meet at `Any`.
pub fn meet(mm: &ModelType, a: &ClassRef, b: &ClassRef) -> ClassRef {
    match (a, b) {
        (ClassRef::Bottom, x) | (x, ClassRef::Bottom) => x.clone(),
        (ClassRef::Any, _) | (_, ClassRef::Any) => ClassRef::Any,
        (ClassRef::Named(x), ClassRef::Named(y)) => {
            if x == y {
                return a.clone();
            }
            let common: Vec<&str> = mm
                .class_names()
                .filter(|s| mm.is_subclass(x, s) && mm.is_subclass(y, s))
                .collect();
            let minimal = common
                .iter()
                .filter(|s| !common.iter().any(|t| t != *s && mm.is_subclass(t, s)));
            let width = |c: &str| {
                mm.cl(c)
                    .and_then(ObjectType::fields)
                    .map_or(0, BTreeMap::len)
            };
            minimal
                .max_by(|s, t| width(s).cmp(&width(t)).then_with(|| t.cmp(s)))
                .map_or(ClassRef::Any, |s| ClassRef::named(*s))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn doc(json: &str) -> MetamodelDoc {
        MetamodelDoc::from_json(json).unwrap()
    }

    #[test]
    fn minimal_metamodel() {
        let mm = build_metamodel(&doc(
            r#"{"name":"m","root":"R","classes":{"R":{"properties":{"name":{"kind":"attr","type":"String"}}}}}"#,
        ))
        .unwrap();
        assert_eq!(
            mm.cl("R"),
            Some(&ObjectType::from_fields([(
                "name",
                FieldType::Attr(BaseType::String)
            )]))
        );
        assert_eq!(mm.sr, BTreeSet::from([("R".to_owned(), "R".to_owned())]));
    }

    #[test]
    fn class_diagram_fixture() {
        let cd = fixtures::class_diagram_mm();
        assert_eq!(cd.classes.len(), 3);
        assert_eq!(cd.root, "Package");
        assert_eq!(
            class_type(&cd, &ClassRef::named("Property")).unwrap(),
            ObjectType::from_fields([
                ("name", FieldType::Attr(BaseType::String)),
                ("type", FieldType::Attr(BaseType::String)),
            ])
        );
        assert_eq!(
            class_type(&cd, &ClassRef::Any).unwrap(),
            ObjectType::empty()
        );
        assert_eq!(
            class_type(&cd, &ClassRef::named("Banana")),
            Err(MetamodelError::UnknownClass("Banana".into()))
        );
    }

    #[test]
    fn containment_opposite_of_containment_is_rejected() {
        let err = ModelType::from_json(fixtures::BAD_OPPOSITE_MM).unwrap_err();
        assert!(matches!(err, MetamodelError::CmtOppositeCmt(..)), "{err}");
    }

    #[test]
    fn structural_errors() {
        let dup = r#"{"root":"R","classes":{"R":{},"R":{}}}"#;
        assert_eq!(
            ModelType::from_json(dup),
            Err(MetamodelError::DuplicateClass("R".into()))
        );
        let root = r#"{"root":"Q","classes":{"R":{}}}"#;
        assert_eq!(
            ModelType::from_json(root),
            Err(MetamodelError::UnknownRoot("Q".into()))
        );
        let cyc = r#"{"root":"A","classes":{"A":{"supertypes":["B"]},"B":{"supertypes":["A"]}}}"#;
        assert!(matches!(
            ModelType::from_json(cyc),
            Err(MetamodelError::CyclicInheritance(_))
        ));
        let same = r#"{"root":"A","classes":{
            "A":{"properties":{"x":{"kind":"attr","type":"String"}}},
            "B":{"properties":{"x":{"kind":"attr","type":"String"}}}}}"#;
        assert_eq!(
            ModelType::from_json(same),
            Err(MetamodelError::NonInjectiveCl("A".into(), "B".into()))
        );
        let one_sided = r#"{"root":"A","classes":{
            "A":{"properties":{"b":{"kind":"ref","class":"B","opposite":"a"}}},
            "B":{"properties":{"a":{"kind":"ref","class":"A","opposite":null}}}}}"#;
        assert!(matches!(
            ModelType::from_json(one_sided),
            Err(MetamodelError::NonInvolutiveOpposite { .. })
        ));
        let base =
            r#"{"root":"A","classes":{"A":{"properties":{"x":{"kind":"attr","type":"Real"}}}}}"#;
        assert!(matches!(
            ModelType::from_json(base),
            Err(MetamodelError::UnknownBaseType { .. })
        ));
    }

    #[test]
    fn defaults() {
        let cd = fixtures::class_diagram_mm();
        assert_eq!(
            default_props(&cd, "Property", None).unwrap(),
            vec![
                PropertyBinding::new("name", Payload::Attr(Value::Str(String::new()))),
                PropertyBinding::new("type", Payload::Attr(Value::Str(String::new()))),
            ]
        );
        assert_eq!(
            default_props(&cd, "UnknownC", None),
            Err(MetamodelError::UnknownClass("UnknownC".into()))
        );

        let g = fixtures::graph_mm();
        let g1 = Oid::from("g1");
        let props = default_props(&g, "Node", Some((&g1, "owner"))).unwrap();
        assert_eq!(
            props.iter().find(|b| b.name == "owner").unwrap().payload,
            Payload::Refs(vec![g1.clone()])
        );
        assert_eq!(
            props.iter().find(|b| b.name == "outgoing").unwrap().payload,
            Payload::Refs(vec![])
        );
    }

    #[test]
    fn opposites_resolve_through_declaring_class() {
        let cd = fixtures::class_diagram_mm();
        assert_eq!(
            cd.opposite(&ReferenceEnd::containment("Class", "properties")),
            None
        );
        let g = fixtures::graph_mm();
        assert_eq!(
            g.opposite(&ReferenceEnd::reference("Edge", "src")),
            Some(ReferenceEnd::reference("Node", "outgoing"))
        );
        assert_eq!(
            g.opposite(&ReferenceEnd::reference("SubEdge", "src")),
            Some(ReferenceEnd::reference("Node", "outgoing"))
        );
        assert_eq!(
            g.opposite(&ReferenceEnd::containment("Graph", "nodes")),
            Some(ReferenceEnd::reference("Node", "owner"))
        );
    }

    #[test]
    fn oe_is_an_involution_without_containment_pairs() {
        for mm in fixtures::all_metamodels() {
            for (e, f) in &mm.oe {
                assert_eq!(mm.oe.get(f), Some(e));
                assert!(!(e.kind == EndKind::Cmt && f.kind == EndKind::Cmt));
            }
        }
    }

    #[test]
    fn sr_is_reflexive_and_transitive() {
        for mm in fixtures::all_metamodels() {
            for c in mm.class_names() {
                assert!(mm.is_subclass(c, c));
            }
            for (a, b) in &mm.sr {
                for (b2, c) in &mm.sr {
                    if b == b2 {
                        assert!(mm.is_subclass(a, c));
                    }
                }
            }
        }
    }

    #[test]
    fn meet_cases() {
        let cd2 = fixtures::vehicles_mm();
        let car = ClassRef::named("Car");
        let truck = ClassRef::named("Truck");
        assert_eq!(meet(&cd2, &car, &truck), ClassRef::named("Vehicle"));
        assert_eq!(meet(&cd2, &car, &car), car);
        assert_eq!(meet(&cd2, &car, &ClassRef::Any), ClassRef::Any);
        assert_eq!(meet(&cd2, &ClassRef::Bottom, &car), car);
        assert_eq!(meet(&cd2, &car, &ClassRef::named("Garage")), ClassRef::Any);
    }

    #[test]
    fn meet_is_commutative_and_an_upper_bound() {
        for mm in fixtures::all_metamodels() {
            let mut all: Vec<ClassRef> = mm.class_names().map(ClassRef::named).collect();
            all.push(ClassRef::Any);
            for a in &all {
                for b in &all {
                    let m = meet(&mm, a, b);
                    assert_eq!(m, meet(&mm, b, a));
                    for x in [a, b] {
                        match (&m, x) {
                            (ClassRef::Any, _) => {}
                            (ClassRef::Named(m), ClassRef::Named(x)) => {
                                assert!(mm.is_subclass(x, m))
                            }
                            _ => panic!("meet({a}, {b}) = {m}"),
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn document_round_trip() {
        let d = doc(fixtures::GRAPH_MM);
        assert_eq!(MetamodelDoc::from_json(&d.to_json()).unwrap(), d);
    }
}
