use std::path::PathBuf;
use std::process::{Command, Output};

use fma_core::{conforms, fixtures, StructuredModel};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

fn fma(args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fma"));
    cmd.current_dir(fixture(""));
    cmd.args(args).output().expect("fma runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_pull_up_writes_conformant_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out.json");
    let o = fma(&[
        "run",
        "cd.mm.json",
        "cd.model.json",
        "pullup.fma",
        "-o",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m = StructuredModel::from_json(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(m, fixtures::pull_up_expected());
    assert!(conforms(&fixtures::class_diagram_mm(), &m));
}

#[test]
fn run_prints_to_stdout_without_output_file() {
    let o = fma(&["run", "cd.mm.json", "cd.model.json", "pullup.fma"]);
    assert_eq!(code(&o), 0);
    assert_eq!(
        StructuredModel::from_json(&stdout(&o)).unwrap(),
        fixtures::pull_up_expected()
    );
}

#[test]
fn unsetting_a_referenced_subtree_traps() {
    let o = fma(&[
        "run",
        "cd.mm.json",
        "annotated.model.json",
        "unset-referenced.fma",
    ]);
    assert_eq!(code(&o), 1);
    assert_eq!(
        stderr(&o),
        "error: E-CmtUnsetErrorIso (NotIsolated): \"3\" or its content is referenced\n"
    );
}

#[test]
fn checked_run_refuses_ill_typed_programs() {
    let o = fma(&[
        "run",
        "--check",
        "cd.mm.json",
        "cd.model.json",
        "ill-typed.fma",
    ]);
    assert_eq!(code(&o), 2);
    assert_eq!(
        stderr(&o),
        "error: T-Set at let var(\"c\") > snapshot var(\"c\") > set(\"name\"): expected String, found Integer\n"
    );
    let unchecked = fma(&["run", "cd.mm.json", "cd.model.json", "ill-typed.fma"]);
    assert_eq!(code(&unchecked), 3);
    assert!(
        stderr(&unchecked).starts_with("error: output model rejected:\nT-Obj"),
        "{}",
        stderr(&unchecked)
    );
}

#[test]
fn trace_lists_rules_with_measures() {
    let o = fma(&[
        "run",
        "--trace",
        "cd.mm.json",
        "cd.model.json",
        "pullup.fma",
    ]);
    assert_eq!(code(&o), 0);
    let trace = stderr(&o);
    assert!(
        trace.starts_with("E-FmaLet xi=14 parent=- focus=-\n"),
        "{trace}"
    );
    assert!(trace.contains("E-CmtUniSet xi=2 parent=3 focus=\"0\".classes.\"1\""));
}

#[test]
fn bindings_seed_variables() {
    let dir = tempfile::tempdir().unwrap();
    let program = dir.path().join("p.fma");
    std::fs::write(
        &program,
        "snapshot var(\"c\") {\n  set(\"name\", var(\"n\"))\n}\n",
    )
    .unwrap();
    let bindings = dir.path().join("b.json");
    std::fs::write(&bindings, r#"{"c": {"oid": "1"}, "n": "Automobile"}"#).unwrap();
    let args = [
        "run",
        "--check",
        "cd.mm.json",
        "cd.model.json",
        program.to_str().unwrap(),
    ];
    let o = fma(&[&args[..], &["--bindings", bindings.to_str().unwrap()]].concat());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("\"Automobile\""));
    let unbound = fma(&args);
    assert_eq!(code(&unbound), 2);
}

#[test]
fn check_subtype_follows_property_names() {
    let o = fma(&["check", "subtype", "sm.mm.json", "graph.mm.json"]);
    assert_eq!((code(&o), stdout(&o).as_str()), (0, "true\n"));
    let o = fma(&["check", "subtype", "sm-renamed.mm.json", "graph.mm.json"]);
    assert_eq!((code(&o), stdout(&o).as_str()), (0, "false\n"));
}

#[test]
fn check_model_lists_dangling_references() {
    let o = fma(&["check", "model", "cd.mm.json", "broken.model.json"]);
    assert_eq!(code(&o), 3);
    assert!(
        stderr(&o).contains("DanglingReference \"1\".annotations -> \"zz\""),
        "{}",
        stderr(&o)
    );
    let ok = fma(&["check", "model", "cd.mm.json", "cd.model.json"]);
    assert_eq!((code(&ok), stdout(&ok).as_str()), (0, "ok: 6 objects\n"));
}

#[test]
fn check_mm_reports_containment_opposites() {
    let o = fma(&["check", "mm", "badopp.mm.json"]);
    assert_eq!(code(&o), 5);
    assert_eq!(
        stderr(&o),
        "error: badopp.mm.json: containment bCE(Edge, nodes) declared opposite of containment bCE(Node, edges)\n"
    );
    let ok = fma(&["check", "mm", "graph.mm.json"]);
    assert_eq!(
        (code(&ok), stdout(&ok).as_str()),
        (0, "ok: Graph (4 classes, root Graph)\n")
    );
}

#[test]
fn check_types_prints_the_verdict() {
    let o = fma(&[
        "check",
        "types",
        "cd.mm.json",
        "cd.model.json",
        "ill-typed.fma",
    ]);
    assert_eq!(code(&o), 2);
    assert!(stdout(&o).contains("\"rule\": \"T-Set\""));
    let ok = fma(&[
        "check",
        "types",
        "cd.mm.json",
        "cd.model.json",
        "pullup.fma",
    ]);
    assert_eq!((code(&ok), stdout(&ok).as_str()), (0, "[]\n"));
}

#[test]
fn infer_prints_the_root_type() {
    let o = fma(&["infer", "vehicles.mm.json", "garage.model.json"]);
    assert_eq!((code(&o), stdout(&o).as_str()), (0, "Garage\n"));
}

#[test]
fn fmt_is_canonical_and_reports_parse_errors() {
    let o = fma(&["fmt", "pullup.fma"]);
    assert_eq!(code(&o), 0);
    assert_eq!(
        fma_core::parse(&stdout(&o)).unwrap(),
        fma_core::parse(fixtures::PULL_UP_PROGRAM).unwrap()
    );
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.fma");
    std::fs::write(
        &bad,
        "let var(\"x\") = oid(\"1\") in\nsnapshot var(\"x\") { set(\"name\" 1) }\n",
    )
    .unwrap();
    let o = fma(&["fmt", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 4);
    assert!(stderr(&o).contains(":2:"), "{}", stderr(&o));
}

#[test]
fn fuzz_reports_no_failures() {
    let o = fma(&["fuzz", "graph.mm.json", "--seeds", "50"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).ends_with("0 failures\n"));
    let o = fma(&["fuzz", "cd.mm.json", "--seeds", "50", "--adversarial"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
}

#[test]
fn usage_errors_exit_64() {
    assert_eq!(code(&fma(&["bogus"])), 64);
    assert_eq!(code(&fma(&["run", "cd.mm.json"])), 64);
    assert_eq!(code(&fma(&["check", "mm", "missing.json"])), 64);
    assert_eq!(code(&fma(&["--help"])), 0);
}
