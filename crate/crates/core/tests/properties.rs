use std::collections::BTreeMap;

use fma_core::fixtures;
use fma_core::testkit::{
    gen_adversarial_program, gen_model, gen_program, mutate, oracle_conforms, oracle_validate,
    random_location, random_stmt, GenSpec, Mutation, OracleSubtyping,
};
use fma_core::{
    check_valid, class_type, conforms, extract, format, insert, meet, parse, run_program,
    subtype_of, typecheck_program, ClassRef, FreeVars, Measure, ModelType,
};
use proptest::prelude::*;

fn metamodel(i: usize) -> ModelType {
    let mut all = fixtures::all_metamodels();
    all.swap_remove(i % all.len())
}

fn spec(seed: u64, objects: usize) -> GenSpec {
    GenSpec {
        seed,
        max_objects: objects,
        max_depth: 3,
        max_stmts: 12,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn format_then_parse_is_identity(seed in any::<u64>(), depth in 0usize..6) {
        let s = random_stmt(seed, depth);
        let text = format(&s);
        prop_assert_eq!(parse(&text).unwrap(), s.clone());
        prop_assert_eq!(format(&parse(&text).unwrap()), text);
        prop_assert!(s.measure() >= 1);
    }

    #[test]
    fn generated_models_are_valid_and_conformant(seed in any::<u64>(), mm in 0usize..5, objects in 1usize..24) {
        let mm = metamodel(mm);
        let m = gen_model(&mm, &spec(seed, objects)).unwrap();
        prop_assert!(m.object_count() <= objects);
        prop_assert!(conforms(&mm, &m));
        prop_assert!(oracle_conforms(&mm, &m));
        prop_assert!(oracle_validate(&m, &mm).ok());
        prop_assert_eq!(gen_model(&mm, &spec(seed, objects)).unwrap(), m);
    }

    #[test]
    fn validity_agrees_with_the_oracle_on_mutants(seed in any::<u64>(), mm in 0usize..5, kind in 0usize..3) {
        let mm = metamodel(mm);
        let m = gen_model(&mm, &spec(seed, 12)).unwrap();
        if let Some(bad) = mutate(&m, &mm, Mutation::ALL[kind], seed) {
            prop_assert_eq!(check_valid(&bad, &mm).unwrap(), oracle_validate(&bad, &mm));
        }
    }

    #[test]
    fn extract_then_insert_restores(seed in any::<u64>(), mm in 0usize..5) {
        let mm = metamodel(mm);
        let m = gen_model(&mm, &spec(seed, 16)).unwrap();
        let loc = random_location(&m, seed).unwrap();
        let ex = extract(&m.roots, &loc).unwrap();
        let appended = insert(&ex.remainder, ex.object.clone(), &loc).unwrap();
        prop_assert_eq!(fma_core::locations(&appended).unwrap().len(), m.object_count());
        prop_assert_eq!(ex.restore(&loc).unwrap(), m.roots);
    }

    #[test]
    fn well_typed_programs_preserve_conformance(seed in any::<u64>(), mm in 0usize..3, adversarial in any::<bool>()) {
        let mm = metamodel(mm);
        let spec = spec(seed, 10);
        let m = gen_model(&mm, &spec).unwrap();
        let p = if adversarial { gen_adversarial_program(&mm, &m, &spec) } else { gen_program(&mm, &m, &spec) }.unwrap();
        prop_assert!(p.is_closed());
        prop_assert!(typecheck_program(&mm, &m.typing, &p, &BTreeMap::new()).ok());
        match run_program(&m, &mm, &p, BTreeMap::new()) {
            Ok(out) => {
                prop_assert!(conforms(&mm, &out));
                prop_assert!(check_valid(&out, &mm).unwrap().ok());
            }
            Err(e) => prop_assert!(e.trapped().is_some(), "{}", e),
        }
    }

    #[test]
    fn runs_are_deterministic(seed in any::<u64>(), mm in 0usize..3) {
        let mm = metamodel(mm);
        let spec = spec(seed, 10);
        let m = gen_model(&mm, &spec).unwrap();
        let p = gen_adversarial_program(&mm, &m, &spec).unwrap();
        let a = run_program(&m, &mm, &p, BTreeMap::new()).map(|o| o.to_json().unwrap()).map_err(|e| e.to_string());
        let b = run_program(&m, &mm, &p, BTreeMap::new()).map(|o| o.to_json().unwrap()).map_err(|e| e.to_string());
        prop_assert_eq!(a, b);
    }
}

fn all_classes(mm: &ModelType) -> Vec<ClassRef> {
    mm.class_names()
        .map(ClassRef::named)
        .chain([ClassRef::Any, ClassRef::Bottom])
        .collect()
}

#[test]
fn meet_is_a_commutative_upper_bound() {
    for mm in fixtures::all_metamodels() {
        let sub = OracleSubtyping::new(&mm, &mm);
        for a in all_classes(&mm) {
            for b in all_classes(&mm) {
                let m = meet(&mm, &a, &b);
                assert_eq!(m, meet(&mm, &b, &a));
                assert!(
                    sub.classes(&a, &m) && sub.classes(&b, &m),
                    "{a} ∧ {b} = {m} in {}",
                    mm.name
                );
            }
        }
    }
}

#[test]
fn subtyping_agrees_with_the_fixed_point() {
    for mm in fixtures::all_metamodels() {
        let sub = OracleSubtyping::new(&mm, &mm);
        for a in all_classes(&mm) {
            for b in all_classes(&mm) {
                let (ta, tb) = (class_type(&mm, &a).unwrap(), class_type(&mm, &b).unwrap());
                assert_eq!(
                    subtype_of(&mm, &ta, &tb),
                    sub.classes(&a, &b),
                    "{a} <: {b} in {}",
                    mm.name
                );
            }
        }
    }
}
