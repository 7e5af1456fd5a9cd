//! Deterministic generators of models and programs, model mutations, and
//! oracles written independently of the production algorithms.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::metamodel::{BaseType, ClassRef, EndKind, FieldType, ModelType, ReferenceEnd};
use crate::model::{
    isolated, locations, resolve, resolve_mut, walk_set, Location, ObjectNode, Oid, Payload,
    PropertyBinding, StructuredModel, Value,
};

mod oracle;
mod program;

pub use oracle::{oracle_conforms, oracle_types, oracle_validate, OracleSubtyping};
pub use program::{gen_adversarial_program, gen_program, random_stmt, stmt_size};

/// Bounds for generation. All bounds must be at least 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GenSpec {
    pub seed: u64,
    pub max_objects: usize,
    pub max_depth: usize,
    /// Budget of statement nodes (sequencing excluded) in a program.
    pub max_stmts: usize,
}

impl Default for GenSpec {
    fn default() -> Self {
        GenSpec {
            seed: 0,
            max_objects: 12,
            max_depth: 3,
            max_stmts: 24,
        }
    }
}

impl GenSpec {
    pub fn with_seed(seed: u64) -> Self {
        GenSpec {
            seed,
            ..Self::default()
        }
    }

    fn check(&self) -> Result<(), GenError> {
        if self.max_objects == 0 || self.max_depth == 0 || self.max_stmts == 0 {
            return Err(GenError::GenerationFailed(format!(
                "bounds must be at least 1: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GenError {
    #[error("generation failed: {0}")]
    GenerationFailed(String),
}

pub(crate) fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Non-abstract declared subclasses of `c`, `c` included, in name order.
pub(crate) fn concrete_subclasses(mm: &ModelType, c: &str) -> Vec<String> {
    mm.subclasses(c)
        .filter(|s| !mm.is_abstract(s))
        .map(str::to_owned)
        .collect()
}

pub(crate) fn random_value(rng: &mut impl Rng, b: BaseType) -> Value {
    match b {
        BaseType::String => Value::Str(
            ["", "a", "b", "name", "x y", "Vehicle"]
                .choose(rng)
                .unwrap()
                .to_string(),
        ),
        BaseType::Integer => Value::Int(rng.gen_range(-3..20)),
        BaseType::Boolean => Value::Bool(rng.gen()),
    }
}

struct ModelGen<'a, R> {
    mm: &'a ModelType,
    rng: R,
    next: usize,
    budget: usize,
    max_depth: usize,
    typing: BTreeMap<Oid, String>,
}

impl<R: Rng> ModelGen<'_, R> {
    fn object(&mut self, class: &str, depth: usize, container: Option<(&Oid, &str)>) -> ObjectNode {
        self.budget -= 1;
        let oid = Oid::new(format!("o{}", self.next));
        self.next += 1;
        self.typing.insert(oid.clone(), class.to_owned());
        let fields = self
            .mm
            .cl(class)
            .and_then(|t| t.fields())
            .cloned()
            .unwrap_or_default();
        let mut props = Vec::with_capacity(fields.len());
        for (p, ft) in fields {
            let payload = match ft {
                FieldType::Attr(b) => Payload::Attr(random_value(&mut self.rng, b)),
                FieldType::Ref(_) => match container {
                    Some((o, q)) if q == p => Payload::Refs(vec![o.clone()]),
                    _ => Payload::Refs(Vec::new()),
                },
                FieldType::Cmt(d) => {
                    let mut children = Vec::new();
                    let candidates = d
                        .name()
                        .map(|d| concrete_subclasses(self.mm, d))
                        .unwrap_or_default();
                    if depth < self.max_depth && !candidates.is_empty() {
                        let opp = self
                            .mm
                            .opposite(&ReferenceEnd::containment(class, &p))
                            .map(|e| e.prop);
                        let k = self.rng.gen_range(0..=(self.budget / 4).max(3));
                        for _ in 0..k {
                            if self.budget == 0 {
                                break;
                            }
                            let c = candidates.choose(&mut self.rng).unwrap().clone();
                            children.push(self.object(
                                &c,
                                depth + 1,
                                opp.as_deref().map(|q| (&oid, q)),
                            ));
                        }
                    }
                    Payload::Cmts(children)
                }
            };
            props.push(PropertyBinding::new(p, payload));
        }
        ObjectNode { oid, props }
    }

    fn add_refs(&mut self, roots: &mut Vec<ObjectNode>) {
        let locs = locations(roots).expect("generated oids are unique");
        let objects: Vec<(Oid, String)> = locs
            .keys()
            .map(|o| (o.clone(), self.typing[o].clone()))
            .collect();
        for (oid, class) in &objects {
            let fields = self
                .mm
                .cl(class)
                .and_then(|t| t.fields())
                .cloned()
                .unwrap_or_default();
            for (p, ft) in fields {
                let FieldType::Ref(ClassRef::Named(d)) = ft else {
                    continue;
                };
                let opp = self.mm.opposite(&ReferenceEnd::reference(class, &p));
                if opp.as_ref().is_some_and(|e| e.kind == EndKind::Cmt) {
                    continue;
                }
                let pool: Vec<&Oid> = objects
                    .iter()
                    .filter(|(_, c)| self.mm.is_subclass(c, &d))
                    .map(|(o, _)| o)
                    .collect();
                if pool.is_empty() {
                    continue;
                }
                let k = self.rng.gen_range(0..=2);
                for _ in 0..k {
                    let t = (*pool.choose(&mut self.rng).unwrap()).clone();
                    add_ref(roots, &locs[oid], &p, &t);
                    if let Some(e) = &opp {
                        add_ref(roots, &locs[&t], &e.prop, oid);
                    }
                }
            }
        }
    }
}

fn add_ref(roots: &mut Vec<ObjectNode>, at: &Location, prop: &str, target: &Oid) {
    let node = resolve_mut(roots, at).expect("location of generated object");
    if let Some(Payload::Refs(is)) = node.payload_mut(prop) {
        if !is.contains(target) {
            is.push(target.clone());
        }
    }
}

/// A valid model conforming to `mm`, determined by `spec.seed`.
pub fn gen_model(mm: &ModelType, spec: &GenSpec) -> Result<StructuredModel, GenError> {
    spec.check()?;
    let root_classes = concrete_subclasses(mm, &mm.root);
    if root_classes.is_empty() {
        return Err(GenError::GenerationFailed(format!(
            "no concrete subclass of root {}",
            mm.root
        )));
    }
    let mut g = ModelGen {
        mm,
        rng: rng_for(spec.seed, 1),
        next: 0,
        budget: spec.max_objects,
        max_depth: spec.max_depth,
        typing: BTreeMap::new(),
    };
    let n_roots = 1 + g.rng.gen_range(0..2);
    let mut roots = Vec::new();
    for _ in 0..n_roots {
        if g.budget == 0 {
            break;
        }
        let c = root_classes.choose(&mut g.rng).unwrap().clone();
        roots.push(g.object(&c, 1, None));
    }
    g.add_refs(&mut roots);
    Ok(StructuredModel {
        roots,
        typing: g.typing,
    })
}

/// Ways of breaking a valid model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mutation {
    /// Remove one side of a pair of opposite references.
    DropOpposite,
    /// Point one reference at an identifier no object carries.
    RetargetRef,
    /// Replace an attribute value by one of another base type.
    RetypeAttribute,
}

impl Mutation {
    pub const ALL: [Mutation; 3] = [
        Mutation::DropOpposite,
        Mutation::RetargetRef,
        Mutation::RetypeAttribute,
    ];
}

/// Apply `kind` at a position chosen by `seed`. `None` when the model has
/// nothing the mutation can act on.
pub fn mutate(
    model: &StructuredModel,
    mm: &ModelType,
    kind: Mutation,
    seed: u64,
) -> Option<StructuredModel> {
    let mut rng = rng_for(seed, 2);
    let mut out = model.clone();
    let locs = locations(&model.roots).ok()?;
    // (owner location, prop, index in the payload)
    let mut sites: Vec<(Location, String, usize)> = Vec::new();
    walk_set(&model.roots, &mut |n| {
        let class = &model.typing[&n.oid];
        for b in &n.props {
            match (&b.payload, kind) {
                (Payload::Refs(is), Mutation::DropOpposite) => {
                    if mm
                        .opposite(&ReferenceEnd::reference(class, &b.name))
                        .is_some()
                    {
                        sites.extend(
                            (0..is.len()).map(|i| (locs[&n.oid].clone(), b.name.clone(), i)),
                        );
                    }
                }
                (Payload::Refs(is), Mutation::RetargetRef) => {
                    sites.push((locs[&n.oid].clone(), b.name.clone(), is.len()));
                }
                (Payload::Attr(_), Mutation::RetypeAttribute) => {
                    sites.push((locs[&n.oid].clone(), b.name.clone(), 0))
                }
                _ => {}
            }
        }
    });
    let (at, prop, i) = sites.choose(&mut rng)?.clone();
    let node = resolve_mut(&mut out.roots, &at)?;
    match (node.payload_mut(&prop)?, kind) {
        (Payload::Refs(is), Mutation::DropOpposite) => {
            is.remove(i);
        }
        (Payload::Refs(is), Mutation::RetargetRef) => {
            let ghost = Oid::new(format!("ghost{}", rng.gen_range(0..1000)));
            if is.is_empty() || rng.gen_bool(0.5) {
                is.push(ghost);
            } else {
                let j = rng.gen_range(0..is.len());
                is[j] = ghost;
            }
        }
        (Payload::Attr(v), Mutation::RetypeAttribute) => {
            *v = match v {
                Value::Str(_) => Value::Int(rng.gen_range(0..9)),
                Value::Int(_) => Value::Bool(rng.gen()),
                Value::Bool(_) => Value::Str("flipped".into()),
            };
        }
        _ => return None,
    }
    Some(out)
}

/// A resolvable location of `model` chosen by `seed`.
pub fn random_location(model: &StructuredModel, seed: u64) -> Option<Location> {
    let locs: Vec<Location> = locations(&model.roots).ok()?.into_values().collect();
    locs.choose(&mut rng_for(seed, 3)).cloned()
}

/// Children of the object at `at` held in containment `prop`.
pub(crate) fn children_of<'m>(
    model: &'m StructuredModel,
    at: &Location,
    prop: &str,
) -> &'m [ObjectNode] {
    match resolve(&model.roots, at).and_then(|n| n.payload(prop)) {
        Some(Payload::Cmts(os)) => os,
        _ => &[],
    }
}

pub(crate) fn is_isolated_in(model: &StructuredModel, node: &ObjectNode) -> bool {
    isolated(node, &model.roots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::check_valid;
    use crate::typing::conforms;

    #[test]
    fn single_object_budget_gives_one_root() {
        let cd = fixtures::class_diagram_mm();
        let m = gen_model(
            &cd,
            &GenSpec {
                seed: 1,
                max_objects: 1,
                ..GenSpec::default()
            },
        )
        .unwrap();
        assert_eq!(m.roots.len(), 1);
        assert_eq!(m.object_count(), 1);
        assert_eq!(m.class_of(&m.roots[0].oid), Some("Package"));
    }

    #[test]
    fn generated_models_are_valid_and_conformant() {
        let g = fixtures::graph_mm();
        let m = gen_model(
            &g,
            &GenSpec {
                seed: 7,
                max_objects: 20,
                ..GenSpec::default()
            },
        )
        .unwrap();
        assert!(conforms(&g, &m));
        assert!(oracle_validate(&m, &g).ok());
        assert!(check_valid(&m, &g).unwrap().ok());
    }

    #[test]
    fn generation_is_deterministic() {
        let sm = fixtures::state_machine_mm();
        let spec = GenSpec::with_seed(42);
        assert_eq!(
            gen_model(&sm, &spec).unwrap(),
            gen_model(&sm, &spec).unwrap()
        );
    }

    #[test]
    fn zero_bounds_are_rejected() {
        let cd = fixtures::class_diagram_mm();
        assert!(gen_model(
            &cd,
            &GenSpec {
                max_objects: 0,
                ..GenSpec::default()
            }
        )
        .is_err());
    }

    #[test]
    fn broken_opposite_is_reported_once() {
        let g = fixtures::graph_mm();
        let m = fixtures::graph_model();
        let mut broken = m.clone();
        let locs = locations(&m.roots).unwrap();
        let n1 = resolve_mut(&mut broken.roots, &locs[&Oid::from("n1")]).unwrap();
        *n1.payload_mut("outgoing").unwrap() = Payload::Refs(vec![]);
        let report = oracle_validate(&broken, &g);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report, check_valid(&broken, &g).unwrap());
    }

    #[test]
    fn mutations_break_the_model() {
        let g = fixtures::graph_mm();
        let m = fixtures::graph_model();
        let dropped = mutate(&m, &g, Mutation::DropOpposite, 3).unwrap();
        assert!(!check_valid(&dropped, &g).unwrap().ok());
        let dangling = mutate(&m, &g, Mutation::RetargetRef, 3).unwrap();
        assert!(check_valid(&dangling, &g)
            .unwrap()
            .violations
            .iter()
            .any(|v| v.kind == crate::model::ViolationKind::DanglingReference));
        let retyped = mutate(&m, &g, Mutation::RetypeAttribute, 3).unwrap();
        assert!(!conforms(&g, &retyped));
    }
}
