//! Reference metamodels, models and programs shared by tests, benches and
//! the command line tool. The JSON sources live in the workspace
//! `fixtures/` directory.

use crate::metamodel::ModelType;
use crate::model::StructuredModel;

pub const CLASS_DIAGRAM_MM: &str = include_str!("../../../fixtures/cd.mm.json");
pub const VEHICLES_MM: &str = include_str!("../../../fixtures/vehicles.mm.json");
pub const GRAPH_MM: &str = include_str!("../../../fixtures/graph.mm.json");
pub const STATE_MACHINE_MM: &str = include_str!("../../../fixtures/sm.mm.json");
pub const STATE_MACHINE_RENAMED_MM: &str = include_str!("../../../fixtures/sm-renamed.mm.json");
pub const BAD_OPPOSITE_MM: &str = include_str!("../../../fixtures/badopp.mm.json");

pub const PULL_UP_MODEL: &str = include_str!("../../../fixtures/cd.model.json");
pub const PULL_UP_EXPECTED: &str = include_str!("../../../fixtures/cd.expected.json");
pub const ANNOTATED_MODEL: &str = include_str!("../../../fixtures/annotated.model.json");
pub const GARAGE_MODEL: &str = include_str!("../../../fixtures/garage.model.json");
pub const GRAPH_MODEL: &str = include_str!("../../../fixtures/graph.model.json");

/// Pull-up-field refactoring: move property "3" of class "2" up to class
/// "1" and drop the duplicate "5" of class "4".
pub const PULL_UP_PROGRAM: &str = include_str!("../../../fixtures/pullup.fma");

fn mm(text: &str) -> ModelType {
    ModelType::from_json(text).expect("fixture metamodel is valid")
}

fn model(text: &str) -> StructuredModel {
    StructuredModel::from_json(text).expect("fixture model parses")
}

/// Package / Class / Property.
pub fn class_diagram_mm() -> ModelType {
    mm(CLASS_DIAGRAM_MM)
}

/// Garage of abstract Vehicles, specialised by Car and Truck.
pub fn vehicles_mm() -> ModelType {
    mm(VEHICLES_MM)
}

/// Graph / Node / Edge / SubEdge with bidirectional ends.
pub fn graph_mm() -> ModelType {
    mm(GRAPH_MM)
}

/// State machines whose property names line up with the graph metamodel.
pub fn state_machine_mm() -> ModelType {
    mm(STATE_MACHINE_MM)
}

/// As [`state_machine_mm`] with `nodes` renamed to `states`.
pub fn state_machine_renamed_mm() -> ModelType {
    mm(STATE_MACHINE_RENAMED_MM)
}

pub fn all_metamodels() -> Vec<ModelType> {
    vec![
        class_diagram_mm(),
        vehicles_mm(),
        graph_mm(),
        state_machine_mm(),
        state_machine_renamed_mm(),
    ]
}

pub fn pull_up_model() -> StructuredModel {
    model(PULL_UP_MODEL)
}

pub fn pull_up_expected() -> StructuredModel {
    model(PULL_UP_EXPECTED)
}

/// Pull-up model where class "1" annotates property "3".
pub fn annotated_model() -> StructuredModel {
    model(ANNOTATED_MODEL)
}

pub fn garage_model() -> StructuredModel {
    model(GARAGE_MODEL)
}

/// Graph "g1" with nodes n1, n2 and edge e1 from n1 to n2.
pub fn graph_model() -> StructuredModel {
    model(GRAPH_MODEL)
}
