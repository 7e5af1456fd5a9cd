use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicU64, Ordering};
use std::thread;

use clap::{Parser, Subcommand};
use fma_core::testkit::{gen_adversarial_program, gen_model, gen_program, GenSpec};
use fma_core::{
    check_conformance, check_valid, format, model_subtype, parse, typecheck_program, EvalError,
    Interpreter, ModelType, Oid, RtValue, RunError, ScalarType, Stmt, StructuredModel, TypeEnvVars,
    Value,
};
use serde_json::Value as Json;
use thiserror::Error;

#[derive(Parser)]
#[command(
    name = "fma",
    version,
    about = "Typed transformations of structured models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a program on a model and print or write the result.
    Run {
        metamodel: PathBuf,
        model: PathBuf,
        program: PathBuf,
        /// JSON map from variable to oid (`{"oid": ".."}`) or scalar.
        #[arg(long)]
        bindings: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Type-check first and refuse ill-typed programs.
        #[arg(long)]
        check: bool,
        /// Print one line per rule application to stderr.
        #[arg(long)]
        trace: bool,
    },
    #[command(subcommand)]
    Check(CheckCommand),
    /// Print the inferred root type of a model.
    Infer { metamodel: PathBuf, model: PathBuf },
    /// Print a program in canonical form.
    Fmt { program: PathBuf },
    /// Generate models and programs, run them and check the results.
    Fuzz {
        metamodel: PathBuf,
        #[arg(long, default_value_t = 100)]
        seeds: u64,
        #[arg(long, default_value_t = 0)]
        start: u64,
        #[arg(long)]
        adversarial: bool,
        #[arg(long, default_value_t = 4)]
        threads: usize,
    },
}

#[derive(Subcommand)]
enum CheckCommand {
    /// Validate a metamodel.
    Mm { metamodel: PathBuf },
    /// Check validity and conformance of a model.
    Model { metamodel: PathBuf, model: PathBuf },
    /// Type-check a program against the objects of a model.
    Types {
        metamodel: PathBuf,
        model: PathBuf,
        program: PathBuf,
        #[arg(long)]
        bindings: Option<PathBuf>,
    },
    /// Decide whether the first metamodel is a subtype of the second.
    Subtype { sub: PathBuf, sup: PathBuf },
}

#[derive(Debug, Error)]
enum Failure {
    #[error("{0}")]
    Trapped(String),
    #[error("{0}")]
    IllTyped(String),
    #[error("{0}")]
    BadModel(String),
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    BadMetamodel(String),
    #[error("{0}")]
    Usage(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Trapped(_) => 1,
            Failure::IllTyped(_) => 2,
            Failure::BadModel(_) => 3,
            Failure::Parse(_) => 4,
            Failure::BadMetamodel(_) => 5,
            Failure::Usage(_) => 64,
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn load_metamodel(path: &Path) -> Result<ModelType, Failure> {
    ModelType::from_json(&read(path)?)
        .map_err(|e| Failure::BadMetamodel(format!("{}: {e}", path.display())))
}

fn load_model(path: &Path) -> Result<StructuredModel, Failure> {
    StructuredModel::from_json(&read(path)?)
        .map_err(|e| Failure::BadModel(format!("{}: {e}", path.display())))
}

fn load_program(path: &Path) -> Result<Stmt, Failure> {
    parse(&read(path)?).map_err(|e| Failure::Parse(format!("{}:{e}", path.display())))
}

/// Problems with a model, one per line; empty when valid and conformant.
fn model_problems(mm: &ModelType, model: &StructuredModel) -> Result<Vec<String>, Failure> {
    let report = check_valid(model, mm).map_err(|e| Failure::BadModel(e.to_string()))?;
    let mut out: Vec<String> = report
        .violations
        .iter()
        .map(|v| format!("{:?} {}.{} -> {}", v.kind, v.owner, v.property, v.target))
        .collect();
    if let Err(e) = check_conformance(mm, model) {
        out.push(e.to_string());
    }
    Ok(out)
}

fn require_model(mm: &ModelType, model: &StructuredModel) -> Result<(), Failure> {
    let problems = model_problems(mm, model)?;
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Failure::BadModel(problems.join("\n")))
    }
}

fn load_bindings(
    path: Option<&Path>,
    model: &StructuredModel,
) -> Result<(BTreeMap<String, RtValue>, TypeEnvVars), Failure> {
    let mut vars = BTreeMap::new();
    let mut gamma = TypeEnvVars::new();
    let Some(path) = path else {
        return Ok((vars, gamma));
    };
    let bad = |msg: String| Failure::Usage(format!("{}: {msg}", path.display()));
    let doc: Json = serde_json::from_str(&read(path)?).map_err(|e| bad(e.to_string()))?;
    let Json::Object(map) = doc else {
        return Err(bad("expected a JSON object".into()));
    };
    for (x, v) in map {
        let (value, ty) = match v {
            Json::Object(o) => {
                let Some(Json::String(oid)) = o.get("oid") else {
                    return Err(bad(format!(
                        "binding {x:?} must be {{\"oid\": \"..\"}} or a scalar"
                    )));
                };
                let oid = Oid::new(oid.clone());
                let ty = match model.class_of(&oid) {
                    Some(c) => ScalarType::Ref(fma_core::ClassRef::named(c)),
                    None => ScalarType::Ref(fma_core::ClassRef::Any),
                };
                (RtValue::Ref(oid), ty)
            }
            other => {
                let v: Value = serde_json::from_value(other)
                    .map_err(|e| bad(format!("binding {x:?}: {e}")))?;
                let ty = ScalarType::Base(v.base_type());
                (RtValue::Scalar(v), ty)
            }
        };
        vars.insert(x.clone(), value);
        gamma.insert(x, ty);
    }
    Ok((vars, gamma))
}

fn type_errors(
    mm: &ModelType,
    model: &StructuredModel,
    program: &Stmt,
    gamma: &TypeEnvVars,
) -> Result<(), Failure> {
    let verdict = typecheck_program(mm, &model.typing, program, gamma);
    if verdict.ok() {
        Ok(())
    } else {
        Err(Failure::IllTyped(
            verdict
                .errors
                .iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join("\n"),
        ))
    }
}

fn cmd_run(
    metamodel: &Path,
    model: &Path,
    program: &Path,
    bindings: Option<&Path>,
    output: Option<&Path>,
    check: bool,
    trace: bool,
) -> Result<(), Failure> {
    let mm = load_metamodel(metamodel)?;
    let m = load_model(model)?;
    require_model(&mm, &m)?;
    let p = load_program(program)?;
    let (vars, gamma) = load_bindings(bindings, &m)?;
    if check {
        type_errors(&mm, &m, &p, &gamma)?;
    }
    let mut it = Interpreter::new(&mm);
    if trace {
        it = it.with_trace();
    }
    let result = it.run(&m, &p, vars);
    if trace {
        let mut err = std::io::stderr().lock();
        for t in it.trace() {
            let _ = writeln!(err, "{t}");
        }
    }
    let out = result.map_err(|e| match e {
        RunError::Precondition(msg) => Failure::IllTyped(msg),
        RunError::Eval(e) => Failure::Trapped(e.to_string()),
    })?;
    let problems = model_problems(&mm, &out)?;
    if !problems.is_empty() {
        return Err(Failure::BadModel(format!(
            "output model rejected:\n{}",
            problems.join("\n")
        )));
    }
    let text = out
        .to_json()
        .map_err(|e| Failure::BadModel(e.to_string()))?;
    match output {
        Some(path) => fs::write(path, text + "\n")
            .map_err(|e| Failure::Usage(format!("{}: {e}", path.display()))),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn cmd_check(c: CheckCommand) -> Result<(), Failure> {
    match c {
        CheckCommand::Mm { metamodel } => {
            let mm = load_metamodel(&metamodel)?;
            println!(
                "ok: {} ({} classes, root {})",
                mm.name,
                mm.classes.len(),
                mm.root
            );
        }
        CheckCommand::Model { metamodel, model } => {
            let mm = load_metamodel(&metamodel)?;
            let m = load_model(&model)?;
            require_model(&mm, &m)?;
            println!("ok: {} objects", m.object_count());
        }
        CheckCommand::Types {
            metamodel,
            model,
            program,
            bindings,
        } => {
            let mm = load_metamodel(&metamodel)?;
            let m = load_model(&model)?;
            let p = load_program(&program)?;
            let (_, gamma) = load_bindings(bindings.as_deref(), &m)?;
            let verdict = typecheck_program(&mm, &m.typing, &p, &gamma);
            println!("{}", verdict.to_json());
            if !verdict.ok() {
                return Err(Failure::IllTyped(
                    verdict
                        .errors
                        .iter()
                        .map(|d| d.to_string())
                        .collect::<Vec<_>>()
                        .join("\n"),
                ));
            }
        }
        CheckCommand::Subtype { sub, sup } => {
            let (a, b) = (load_metamodel(&sub)?, load_metamodel(&sup)?);
            println!("{}", model_subtype(&a, &b));
        }
    }
    Ok(())
}

fn cmd_infer(metamodel: &Path, model: &Path) -> Result<(), Failure> {
    let mm = load_metamodel(metamodel)?;
    let m = load_model(model)?;
    let c = check_conformance(&mm, &m).map_err(|e| Failure::BadModel(e.to_string()))?;
    println!("{c}");
    Ok(())
}

#[derive(Default)]
struct Tally {
    completed: AtomicU64,
    trapped: AtomicU64,
    failures: std::sync::Mutex<Vec<String>>,
}

fn fuzz_one(mm: &ModelType, seed: u64, adversarial: bool, tally: &Tally) {
    let fail = |msg: String| {
        tally
            .failures
            .lock()
            .unwrap()
            .push(format!("seed {seed}: {msg}"))
    };
    let spec = GenSpec::with_seed(seed);
    let generated = gen_model(mm, &spec).and_then(|m| {
        let p = if adversarial {
            gen_adversarial_program(mm, &m, &spec)
        } else {
            gen_program(mm, &m, &spec)
        }?;
        Ok((m, p))
    });
    let (m, p) = match generated {
        Ok(x) => x,
        Err(e) => return fail(e.to_string()),
    };
    if !typecheck_program(mm, &m.typing, &p, &TypeEnvVars::new()).ok() {
        return fail(format!("generated program is ill-typed:\n{}", format(&p)));
    }
    match Interpreter::new(mm).run(&m, &p, BTreeMap::new()) {
        Ok(out) => match model_problems(mm, &out) {
            Ok(problems) if problems.is_empty() => {
                tally.completed.fetch_add(1, Ordering::Relaxed);
            }
            Ok(problems) => fail(format!("{}\n{}", problems.join("\n"), format(&p))),
            Err(e) => fail(e.to_string()),
        },
        Err(RunError::Eval(EvalError::Trapped(_))) => {
            tally.trapped.fetch_add(1, Ordering::Relaxed);
        }
        Err(e) => fail(format!("{e}\n{}", format(&p))),
    }
}

fn cmd_fuzz(
    metamodel: &Path,
    seeds: u64,
    start: u64,
    adversarial: bool,
    threads: usize,
) -> Result<(), Failure> {
    let mm = load_metamodel(metamodel)?;
    let tally = Tally::default();
    let threads = threads.max(1) as u64;
    thread::scope(|s| {
        for t in 0..threads {
            let (mm, tally) = (&mm, &tally);
            s.spawn(move || {
                for seed in (start + t..start + seeds).step_by(threads as usize) {
                    fuzz_one(mm, seed, adversarial, tally);
                }
            });
        }
    });
    let mut failures = tally.failures.into_inner().unwrap();
    failures.sort();
    println!(
        "seeds {seeds}: {} completed, {} trapped, {} failures",
        tally.completed.into_inner(),
        tally.trapped.into_inner(),
        failures.len()
    );
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Trapped(failures.join("\n")))
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run {
            metamodel,
            model,
            program,
            bindings,
            output,
            check,
            trace,
        } => cmd_run(
            &metamodel,
            &model,
            &program,
            bindings.as_deref(),
            output.as_deref(),
            check,
            trace,
        ),
        Command::Check(c) => cmd_check(c),
        Command::Infer { metamodel, model } => cmd_infer(&metamodel, &model),
        Command::Fmt { program } => {
            print!("{}", format(&load_program(&program)?));
            println!();
            Ok(())
        }
        Command::Fuzz {
            metamodel,
            seeds,
            start,
            adversarial,
            threads,
        } => cmd_fuzz(&metamodel, seeds, start, adversarial, threads),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(64);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
