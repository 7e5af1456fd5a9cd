//! Workloads shared by the benchmarks.

use fma_core::testkit::{gen_model, gen_program, GenSpec};
use fma_core::{ModelType, Stmt, StructuredModel};

/// A generated model of at most `objects` objects and a program over it.
pub fn workload(mm: &ModelType, objects: usize, seed: u64) -> (StructuredModel, Stmt) {
    let spec = GenSpec {
        seed,
        max_objects: objects,
        max_depth: 6,
        max_stmts: 40,
    };
    let model = gen_model(mm, &spec).expect("generation succeeds on fixture metamodels");
    let program =
        gen_program(mm, &model, &spec).expect("generation succeeds on fixture metamodels");
    (model, program)
}
