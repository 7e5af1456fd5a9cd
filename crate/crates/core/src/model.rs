//! Structured models: trees of objects held in ordered sets, addressed by
//! containment paths, plus the referential-integrity and opposite-consistency
//! checks that define a valid model.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metamodel::{BaseType, EndKind, ModelType, ReferenceEnd};

/// Opaque object identifier.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Oid(String);

impl Oid {
    pub fn new(text: impl Into<String>) -> Self {
        Oid(text.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Oid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl From<&str> for Oid {
    fn from(s: &str) -> Self {
        Oid(s.to_owned())
    }
}

/// Scalar attribute value.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Str(String),
}

impl Value {
    pub fn base_type(&self) -> BaseType {
        match self {
            Value::Str(_) => BaseType::String,
            Value::Int(_) => BaseType::Integer,
            Value::Bool(_) => BaseType::Boolean,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Str(s) => write!(f, "{s:?}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Bool(b) => write!(f, "{b}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Payload {
    Attr(Value),
    /// Ordered set of referenced identifiers.
    Refs(Vec<Oid>),
    /// Ordered set of contained objects.
    Cmts(Vec<ObjectNode>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PropertyBinding {
    pub name: String,
    pub payload: Payload,
}

impl PropertyBinding {
    pub fn new(name: impl Into<String>, payload: Payload) -> Self {
        PropertyBinding {
            name: name.into(),
            payload,
        }
    }
}

/// An object `<o | ps>`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObjectNode {
    pub oid: Oid,
    pub props: Vec<PropertyBinding>,
}

impl ObjectNode {
    pub fn new(oid: impl Into<Oid>, props: Vec<PropertyBinding>) -> Self {
        ObjectNode {
            oid: oid.into(),
            props,
        }
    }

    pub fn payload(&self, name: &str) -> Option<&Payload> {
        payload_of(&self.props, name)
    }

    pub fn payload_mut(&mut self, name: &str) -> Option<&mut Payload> {
        payload_of_mut(&mut self.props, name)
    }

    /// Oids of this object and every object it transitively contains, in
    /// pre-order.
    pub fn subtree_oids(&self) -> Vec<Oid> {
        let mut out = Vec::new();
        self.walk(&mut |n| out.push(n.oid.clone()));
        out
    }

    /// Pre-order traversal over the containment tree rooted here.
    pub fn walk<'a>(&'a self, visit: &mut impl FnMut(&'a ObjectNode)) {
        visit(self);
        for b in &self.props {
            if let Payload::Cmts(children) = &b.payload {
                for c in children {
                    c.walk(visit);
                }
            }
        }
    }
}

pub fn payload_of<'a>(props: &'a [PropertyBinding], name: &str) -> Option<&'a Payload> {
    props.iter().find(|b| b.name == name).map(|b| &b.payload)
}

pub fn payload_of_mut<'a>(props: &'a mut [PropertyBinding], name: &str) -> Option<&'a mut Payload> {
    props
        .iter_mut()
        .find(|b| b.name == name)
        .map(|b| &mut b.payload)
}

/// Visit every object of an ordered set, descending through containments.
pub fn walk_set<'a>(set: &'a [ObjectNode], visit: &mut impl FnMut(&'a ObjectNode)) {
    for n in set {
        n.walk(visit);
    }
}

/// A model: ordered set of root objects plus the typing map from oids to
/// class names.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct StructuredModel {
    pub roots: Vec<ObjectNode>,
    pub typing: BTreeMap<Oid, String>,
}

impl StructuredModel {
    pub fn new(roots: Vec<ObjectNode>, typing: BTreeMap<Oid, String>) -> Self {
        StructuredModel { roots, typing }
    }

    pub fn object_count(&self) -> usize {
        let mut n = 0;
        walk_set(&self.roots, &mut |_| n += 1);
        n
    }

    pub fn class_of(&self, oid: &Oid) -> Option<&str> {
        self.typing.get(oid).map(String::as_str)
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let doc: ModelDoc =
            serde_json::from_str(text).map_err(|e| ModelError::Json(e.to_string()))?;
        doc.into_model()
    }

    pub fn to_json(&self) -> Result<String, ModelError> {
        let doc = ModelDoc::from_model(self)?;
        serde_json::to_string_pretty(&doc).map_err(|e| ModelError::Json(e.to_string()))
    }
}

/// Containment path from a root to an object: `o1.p1.o2.p2...target`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Location {
    pub steps: Vec<(Oid, String)>,
    pub target: Oid,
}

impl Location {
    pub fn root(target: impl Into<Oid>) -> Self {
        Location {
            steps: Vec::new(),
            target: target.into(),
        }
    }

    /// Location of `child` placed in containment `prop` of the object at `self`.
    pub fn child(&self, prop: impl Into<String>, child: impl Into<Oid>) -> Self {
        let mut steps = self.steps.clone();
        steps.push((self.target.clone(), prop.into()));
        Location {
            steps,
            target: child.into(),
        }
    }

    /// Parse the dotted rendering, e.g. `"0".classes."1"`.
    pub fn parse(text: &str) -> Option<Self> {
        let mut oids = Vec::new();
        let mut props = Vec::new();
        let mut rest = text.trim();
        loop {
            let s = rest.strip_prefix('"')?;
            let end = s.find('"')?;
            oids.push(Oid::new(&s[..end]));
            rest = &s[end + 1..];
            if rest.is_empty() {
                break;
            }
            let s = rest.strip_prefix('.')?;
            let dot = s.find('.')?;
            props.push(s[..dot].to_owned());
            rest = &s[dot + 1..];
        }
        let target = oids.pop()?;
        Some(Location {
            steps: oids.into_iter().zip(props).collect(),
            target,
        })
    }

    pub fn is_root(&self) -> bool {
        self.steps.is_empty()
    }

    /// Identifier of the object this location designates.
    pub fn last(&self) -> &Oid {
        &self.target
    }

    /// Identifier of the immediate container, `None` for root locations.
    pub fn container(&self) -> Option<&Oid> {
        self.steps.last().map(|(o, _)| o)
    }

    /// Containment property holding the target, `None` for root locations.
    pub fn container_prop(&self) -> Option<&str> {
        self.steps.last().map(|(_, p)| p.as_str())
    }

    /// Whether `oid` is the target or one of its ancestors.
    pub fn passes_through(&self, oid: &Oid) -> bool {
        &self.target == oid || self.steps.iter().any(|(o, _)| o == oid)
    }

    /// Whether `self` designates a strict descendant of `ancestor`.
    pub fn is_strictly_below(&self, ancestor: &Location) -> bool {
        self.steps.len() > ancestor.steps.len()
            && self.steps[..ancestor.steps.len()] == ancestor.steps[..]
            && self.steps[ancestor.steps.len()].0 == ancestor.target
    }

    /// Re-root `self` relative to `ancestor`, which must lie on the path.
    pub fn relative_to(&self, ancestor: &Location) -> Option<Location> {
        if !self.is_strictly_below(ancestor) {
            return None;
        }
        Some(Location {
            steps: self.steps[ancestor.steps.len()..].to_vec(),
            target: self.target.clone(),
        })
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (o, p) in &self.steps {
            write!(f, "{o}.{p}.")?;
        }
        write!(f, "{}", self.target)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("location {0} does not resolve")]
    LocationNotFound(Location),
    #[error("location {0} is not a new location in this object set")]
    LocationNotInsertable(Location),
    #[error("location targets {expected} but object is {found}")]
    OidMismatch { expected: Oid, found: Oid },
    #[error("object identifier {0} occurs more than once")]
    DuplicateOid(Oid),
    #[error("reference to {target} repeated in {owner}.{prop}")]
    DuplicateReference {
        owner: Oid,
        prop: String,
        target: Oid,
    },
    #[error("property {prop} repeated in object {owner}")]
    DuplicateProperty { owner: Oid, prop: String },
    #[error("object {oid} is typed by unknown class {class}")]
    UnknownClass { oid: Oid, class: String },
    #[error("object {0} has no class in the typing map")]
    Untyped(Oid),
    #[error("malformed model document: {0}")]
    Json(String),
}

/// Result of extracting the object at a location.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Extraction {
    pub remainder: Vec<ObjectNode>,
    pub object: ObjectNode,
    /// Index the object occupied in its ordered set.
    pub slot: usize,
}

impl Extraction {
    /// Put the object back where it was taken from.
    pub fn restore(self, loc: &Location) -> Result<Vec<ObjectNode>, ModelError> {
        insert_at(&self.remainder, self.object, loc, self.slot)
    }
}

fn slot_mut<'a>(
    set: &'a mut Vec<ObjectNode>,
    steps: &[(Oid, String)],
) -> Option<&'a mut Vec<ObjectNode>> {
    let Some(((owner, prop), rest)) = steps.split_first() else {
        return Some(set);
    };
    let node = set.iter_mut().find(|n| &n.oid == owner)?;
    match node.payload_mut(prop)? {
        Payload::Cmts(children) => slot_mut(children, rest),
        _ => None,
    }
}

fn slot_ref<'a>(set: &'a [ObjectNode], steps: &[(Oid, String)]) -> Option<&'a [ObjectNode]> {
    let Some(((owner, prop), rest)) = steps.split_first() else {
        return Some(set);
    };
    let node = set.iter().find(|n| &n.oid == owner)?;
    match node.payload(prop)? {
        Payload::Cmts(children) => slot_ref(children, rest),
        _ => None,
    }
}

/// Object at `loc`, if the path resolves.
pub fn resolve<'a>(set: &'a [ObjectNode], loc: &Location) -> Option<&'a ObjectNode> {
    slot_ref(set, &loc.steps)?
        .iter()
        .find(|n| n.oid == loc.target)
}

pub fn resolve_mut<'a>(set: &'a mut Vec<ObjectNode>, loc: &Location) -> Option<&'a mut ObjectNode> {
    slot_mut(set, &loc.steps)?
        .iter_mut()
        .find(|n| n.oid == loc.target)
}

/// Split `set` into the object at `loc` and everything else. Order of the
/// remaining content is untouched.
pub fn extract(set: &[ObjectNode], loc: &Location) -> Result<Extraction, ModelError> {
    let mut remainder = set.to_vec();
    let slot = slot_mut(&mut remainder, &loc.steps)
        .ok_or_else(|| ModelError::LocationNotFound(loc.clone()))?;
    let idx = slot
        .iter()
        .position(|n| n.oid == loc.target)
        .ok_or_else(|| ModelError::LocationNotFound(loc.clone()))?;
    let object = slot.remove(idx);
    Ok(Extraction {
        remainder,
        object,
        slot: idx,
    })
}

/// Append `object` at the end of the ordered set designated by `loc`. If the
/// slot already holds an object with that identifier nothing is inserted.
pub fn insert(
    set: &[ObjectNode],
    object: ObjectNode,
    loc: &Location,
) -> Result<Vec<ObjectNode>, ModelError> {
    insert_at(set, object, loc, usize::MAX)
}

/// Like [`insert`], but places the object at index `slot` (clamped to the
/// length of the ordered set).
pub fn insert_at(
    set: &[ObjectNode],
    object: ObjectNode,
    loc: &Location,
    slot: usize,
) -> Result<Vec<ObjectNode>, ModelError> {
    if loc.target != object.oid {
        return Err(ModelError::OidMismatch {
            expected: loc.target.clone(),
            found: object.oid,
        });
    }
    let mut out = set.to_vec();
    let host = slot_mut(&mut out, &loc.steps)
        .ok_or_else(|| ModelError::LocationNotInsertable(loc.clone()))?;
    if !host.iter().any(|n| n.oid == object.oid) {
        let at = slot.min(host.len());
        host.insert(at, object);
    }
    Ok(out)
}

/// Map every object in `set` to its location.
pub fn locations(set: &[ObjectNode]) -> Result<BTreeMap<Oid, Location>, ModelError> {
    fn go(
        node: &ObjectNode,
        here: Location,
        out: &mut BTreeMap<Oid, Location>,
    ) -> Result<(), ModelError> {
        for b in &node.props {
            if let Payload::Cmts(children) = &b.payload {
                for c in children {
                    go(c, here.child(&b.name, c.oid.clone()), out)?;
                }
            }
        }
        if out.insert(node.oid.clone(), here).is_some() {
            return Err(ModelError::DuplicateOid(node.oid.clone()));
        }
        Ok(())
    }
    let mut out = BTreeMap::new();
    for n in set {
        go(n, Location::root(n.oid.clone()), &mut out)?;
    }
    Ok(out)
}

/// Locations of `node` and its descendants when `node` sits at `at`.
pub fn subtree_locations(node: &ObjectNode, at: Location) -> Vec<(Oid, Location)> {
    let mut out = Vec::new();
    fn go(node: &ObjectNode, here: Location, out: &mut Vec<(Oid, Location)>) {
        for b in &node.props {
            if let Payload::Cmts(children) = &b.payload {
                for c in children {
                    go(c, here.child(&b.name, c.oid.clone()), out);
                }
            }
        }
        out.push((node.oid.clone(), here));
    }
    go(node, at, &mut out);
    out
}

/// Whether any reference held by an object in `scope` (other than the
/// objects in `targets` themselves) mentions an oid in `targets`.
pub(crate) fn referenced_from<'a>(
    targets: &BTreeSet<Oid>,
    scope: impl IntoIterator<Item = &'a ObjectNode>,
) -> bool {
    let mut hit = false;
    for root in scope {
        root.walk(&mut |n| {
            if hit || targets.contains(&n.oid) {
                return;
            }
            for b in &n.props {
                if let Payload::Refs(is) = &b.payload {
                    if is.iter().any(|o| targets.contains(o)) {
                        hit = true;
                    }
                }
            }
        });
        if hit {
            return true;
        }
    }
    false
}

/// True iff nothing outside `object`'s subtree references `object` or any
/// object it contains.
pub fn isolated(object: &ObjectNode, set: &[ObjectNode]) -> bool {
    let targets: BTreeSet<Oid> = object.subtree_oids().into_iter().collect();
    !referenced_from(&targets, set)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum ViolationKind {
    DanglingReference,
    InconsistentOpposite,
}

/// One breach of model validity: `owner.property` mentions `target`, and
/// either `target` does not exist or it does not point back.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub owner: Oid,
    pub property: String,
    pub target: Oid,
}

#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize)]
pub struct ValidityReport {
    pub violations: Vec<Violation>,
}

impl ValidityReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn violation_set(&self) -> BTreeSet<Violation> {
        self.violations.iter().cloned().collect()
    }
}

/// Referential integrity and opposite-reference consistency.
pub fn check_valid(model: &StructuredModel, mm: &ModelType) -> Result<ValidityReport, ModelError> {
    let mut index: BTreeMap<&Oid, &ObjectNode> = BTreeMap::new();
    walk_set(&model.roots, &mut |n| {
        index.insert(&n.oid, n);
    });
    let mut violations = Vec::new();
    for (&oid, &node) in &index {
        let class = model
            .typing
            .get(oid)
            .ok_or_else(|| ModelError::Untyped(oid.clone()))?;
        if !mm.has_class(class) {
            return Err(ModelError::UnknownClass {
                oid: oid.clone(),
                class: class.clone(),
            });
        }
        for b in &node.props {
            let (kind, pointed): (EndKind, Vec<&Oid>) = match &b.payload {
                Payload::Attr(_) => continue,
                Payload::Refs(is) => (EndKind::Ref, is.iter().collect()),
                Payload::Cmts(os) => (EndKind::Cmt, os.iter().map(|c| &c.oid).collect()),
            };
            let opposite = mm.opposite(&ReferenceEnd::new(kind, class, &b.name));
            for target in pointed {
                let Some(other) = index.get(target) else {
                    violations.push(Violation {
                        kind: ViolationKind::DanglingReference,
                        owner: oid.clone(),
                        property: b.name.clone(),
                        target: target.clone(),
                    });
                    continue;
                };
                let Some(back) = &opposite else { continue };
                let points_back = match other.payload(&back.prop) {
                    Some(Payload::Refs(is)) => is.contains(oid),
                    Some(Payload::Cmts(os)) => os.iter().any(|c| &c.oid == oid),
                    _ => false,
                };
                if !points_back {
                    violations.push(Violation {
                        kind: ViolationKind::InconsistentOpposite,
                        owner: oid.clone(),
                        property: b.name.clone(),
                        target: target.clone(),
                    });
                }
            }
        }
    }
    violations.sort();
    Ok(ValidityReport { violations })
}

// ---------------------------------------------------------------------------
// JSON document format

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    roots: Vec<ObjectDoc>,
}

#[derive(Serialize, Deserialize)]
struct ObjectDoc {
    oid: Oid,
    class: String,
    #[serde(
        default,
        deserialize_with = "crate::json::ordered_entries",
        serialize_with = "crate::json::as_map"
    )]
    props: Vec<(String, PropDoc)>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum PropDoc {
    Cmts(Vec<ObjectDoc>),
    Refs { refs: Vec<Oid> },
    Attr(Value),
}

impl ModelDoc {
    fn into_model(self) -> Result<StructuredModel, ModelError> {
        fn convert(
            doc: ObjectDoc,
            typing: &mut BTreeMap<Oid, String>,
        ) -> Result<ObjectNode, ModelError> {
            if typing.insert(doc.oid.clone(), doc.class).is_some() {
                return Err(ModelError::DuplicateOid(doc.oid));
            }
            let mut props: Vec<PropertyBinding> = Vec::with_capacity(doc.props.len());
            for (name, p) in doc.props {
                if props.iter().any(|b| b.name == name) {
                    return Err(ModelError::DuplicateProperty {
                        owner: doc.oid.clone(),
                        prop: name,
                    });
                }
                let payload = match p {
                    PropDoc::Attr(v) => Payload::Attr(v),
                    PropDoc::Refs { refs } => {
                        let mut seen = BTreeSet::new();
                        for r in &refs {
                            if !seen.insert(r) {
                                return Err(ModelError::DuplicateReference {
                                    owner: doc.oid.clone(),
                                    prop: name,
                                    target: r.clone(),
                                });
                            }
                        }
                        Payload::Refs(refs)
                    }
                    PropDoc::Cmts(children) => Payload::Cmts(
                        children
                            .into_iter()
                            .map(|c| convert(c, typing))
                            .collect::<Result<_, _>>()?,
                    ),
                };
                props.push(PropertyBinding { name, payload });
            }
            Ok(ObjectNode {
                oid: doc.oid,
                props,
            })
        }
        let mut typing = BTreeMap::new();
        let roots = self
            .roots
            .into_iter()
            .map(|r| convert(r, &mut typing))
            .collect::<Result<_, _>>()?;
        Ok(StructuredModel { roots, typing })
    }

    fn from_model(model: &StructuredModel) -> Result<ModelDoc, ModelError> {
        fn convert(
            node: &ObjectNode,
            typing: &BTreeMap<Oid, String>,
        ) -> Result<ObjectDoc, ModelError> {
            let class = typing
                .get(&node.oid)
                .ok_or_else(|| ModelError::Untyped(node.oid.clone()))?;
            let props = node
                .props
                .iter()
                .map(|b| {
                    let p = match &b.payload {
                        Payload::Attr(v) => PropDoc::Attr(v.clone()),
                        Payload::Refs(is) => PropDoc::Refs { refs: is.clone() },
                        Payload::Cmts(os) => PropDoc::Cmts(
                            os.iter()
                                .map(|c| convert(c, typing))
                                .collect::<Result<_, _>>()?,
                        ),
                    };
                    Ok((b.name.clone(), p))
                })
                .collect::<Result<_, ModelError>>()?;
            Ok(ObjectDoc {
                oid: node.oid.clone(),
                class: class.clone(),
                props,
            })
        }
        Ok(ModelDoc {
            roots: model
                .roots
                .iter()
                .map(|r| convert(r, &model.typing))
                .collect::<Result<_, _>>()?,
        })
    }
}
