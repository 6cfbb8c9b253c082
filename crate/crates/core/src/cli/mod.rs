//! Command-line front end.
//!
//! Exit codes: 0 success, 1 input/output failure, 2 convergence failure,
//! 3 validation error. Messages go to standard error; standard output
//! carries the JSON summary of a run, or the self-test report.

pub mod scenario;
pub mod selftest;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::Error;
use crate::io::ConfigDocument;
use scenario::{OutputSpec, Prepared, Scenario, Task};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONVERGENCE: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "nbody-hkam", version, about = "Homogeneous weak KAM tools for N-body problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct TaskArgs {
    /// Configuration document: {"masses", "dim", "kappa", "positions"?}.
    #[arg(long)]
    config: PathBuf,
    /// Override the document's kappa.
    #[arg(long)]
    kappa: Option<f64>,
    /// Task options: a JSON file, or inline JSON starting with '{'.
    #[arg(long)]
    options: Option<String>,
    /// Output directory (default: working directory).
    #[arg(long)]
    out: Option<String>,
    /// Output file stem (default: task name).
    #[arg(long)]
    stem: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a scenario file (or the scenario recorded in a manifest).
    Run {
        scenario: PathBuf,
        /// Override the scenario's output directory.
        #[arg(long)]
        out: Option<String>,
    },
    /// Search for central configurations from given and random seeds.
    CentralFind(TaskArgs),
    /// Compare psi(s) with a numerical phi(s, 0) for central configurations.
    MinimizingTest(TaskArgs),
    /// Minimal action between two configurations, fixed or free time.
    Phi(TaskArgs),
    /// Lax-Oleinik iteration on a configuration chart.
    WeakKam(TaskArgs),
    /// Solve the sphere Hamilton-Jacobi equation on a circle chart.
    SphereHj(TaskArgs),
    /// Gradient flow of v and the collision map.
    Flow(TaskArgs),
    /// Reconstruct a calibrating curve from v.
    Calibrate(TaskArgs),
    /// Busemann function along a minimizing ray.
    Busemann(TaskArgs),
    /// Parabolic ejection constants and checks.
    Ejection(TaskArgs),
    /// Fast self test; prints one PASS/FAIL line per check.
    Selftest {
        /// Also write selftest.csv into this directory.
        #[arg(long)]
        out: Option<String>,
        /// Flip the sign of grad U (checks that the tests catch it).
        #[arg(long, hide = true)]
        inject_gradient_sign_error: bool,
    },
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Convergence { .. } | Error::Range(_) => EXIT_CONVERGENCE,
            Error::Io(_) | Error::Csv(_) => EXIT_IO,
            _ => EXIT_VALIDATION,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn validation(msg: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_VALIDATION,
        message: msg.into(),
    }
}

/// Parses a scenario, accepting a manifest's embedded `scenario` too.
pub fn parse_scenario(text: &str) -> Result<Scenario, Failure> {
    let mut v: Value =
        serde_json::from_str(text).map_err(|e| validation(format!("malformed scenario: {e}")))?;
    if v.get("inputs_sha256").is_some() {
        if let Some(inner) = v.get_mut("scenario").map(Value::take) {
            v = inner;
        }
    }
    serde_json::from_value(v).map_err(|e| validation(format!("malformed scenario: {e}")))
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Result of a completed run.
#[derive(Debug)]
pub struct RunReport {
    pub summary: Value,
    pub manifest: Value,
    pub written: Vec<PathBuf>,
    pub code: i32,
    pub message: Option<String>,
}

/// Validates, runs and writes outputs plus `<stem>.manifest.json`.
pub fn run_scenario(scenario: Scenario) -> Result<RunReport, Failure> {
    let started = Instant::now();
    let prepared = Prepared::new(scenario)?;
    let outcome = prepared.run()?;
    let stem = prepared.stem();
    let dir = PathBuf::from(prepared.scenario.output.dir.clone().unwrap_or_else(|| ".".into()));

    // the manifest records the options with every default filled in
    let mut resolved = prepared.scenario.clone();
    resolved.options = outcome.resolved_options.clone();
    // output locations do not change results, so they stay out of the hash
    let hashed = Scenario {
        output: OutputSpec::default(),
        ..resolved.clone()
    };
    let canonical = serde_json::to_vec(&hashed).expect("scenario serializes");

    std::fs::create_dir_all(&dir).map_err(Error::from)?;
    let mut written = Vec::new();
    let mut outputs = Vec::new();
    for f in &outcome.files {
        let p = dir.join(&f.name);
        std::fs::write(&p, &f.bytes).map_err(Error::from)?;
        outputs.push(json!({"file": f.name, "sha256": sha256_hex(&f.bytes)}));
        written.push(p);
    }
    let (code, message) = match &outcome.convergence_failure {
        Some(m) => (EXIT_CONVERGENCE, Some(m.clone())),
        None => (EXIT_OK, None),
    };
    let manifest = json!({
        "program": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "task": prepared.scenario.task.name(),
        "inputs_sha256": sha256_hex(&canonical),
        "scenario": resolved,
        "threads": crate::parallel::threads(),
        "wall_time_seconds": started.elapsed().as_secs_f64(),
        "status": if code == EXIT_OK { "ok" } else { "convergence-failure" },
        "message": message,
        "outputs": outputs,
    });
    let mp = dir.join(format!("{stem}.manifest.json"));
    let mut bytes = serde_json::to_vec_pretty(&manifest).expect("manifest");
    bytes.push(b'\n');
    std::fs::write(&mp, bytes).map_err(Error::from)?;
    written.push(mp);
    Ok(RunReport {
        summary: outcome.summary,
        manifest,
        written,
        code,
        message,
    })
}

fn read_options(arg: &Option<String>) -> Result<Value, Failure> {
    let Some(a) = arg else {
        return Ok(Value::Null);
    };
    let text = if a.trim_start().starts_with('{') {
        a.clone()
    } else {
        std::fs::read_to_string(a).map_err(|e| validation(format!("cannot read options {a}: {e}")))?
    };
    serde_json::from_str(&text).map_err(|e| validation(format!("malformed options: {e}")))
}

fn scenario_from_args(task: Task, a: &TaskArgs) -> Result<Scenario, Failure> {
    let text = std::fs::read_to_string(&a.config)
        .map_err(|e| validation(format!("cannot read {}: {e}", a.config.display())))?;
    let mut system: ConfigDocument =
        serde_json::from_str(&text).map_err(|e| validation(format!("malformed configuration: {e}")))?;
    if let Some(k) = a.kappa {
        system.kappa = k;
    }
    Ok(Scenario {
        system,
        task,
        options: read_options(&a.options)?,
        output: OutputSpec {
            dir: a.out.clone(),
            stem: a.stem.clone(),
        },
        seed: a.seed,
    })
}

/// Writes to standard output, ignoring a closed pipe.
fn emit(text: &str) {
    use std::io::Write;
    let _ = std::io::stdout().write_all(text.as_bytes());
}

fn print_run(r: &RunReport) -> i32 {
    emit(&format!("{}\n", serde_json::to_string_pretty(&r.summary).expect("json")));
    if let Some(m) = &r.message {
        eprintln!("convergence failure: {m}");
    }
    r.code
}

fn report_failure(f: Failure) -> i32 {
    eprintln!("error: {}", f.message);
    f.code
}

/// Entry point shared by the binary and the tests; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_VALIDATION,
            };
        }
    };
    let task = |t: Task, a: &TaskArgs| -> i32 {
        match scenario_from_args(t, a).and_then(run_scenario) {
            Ok(r) => print_run(&r),
            Err(f) => report_failure(f),
        }
    };
    match &cli.command {
        Command::Run { scenario, out } => {
            let parsed = std::fs::read_to_string(scenario)
                .map_err(|e| Failure {
                    code: EXIT_VALIDATION,
                    message: format!("cannot read {}: {e}", scenario.display()),
                })
                .and_then(|t| parse_scenario(&t));
            let parsed = parsed.map(|mut s| {
                if out.is_some() {
                    s.output.dir = out.clone();
                }
                s
            });
            match parsed.and_then(run_scenario) {
                Ok(r) => print_run(&r),
                Err(f) => report_failure(f),
            }
        }
        Command::CentralFind(a) => task(Task::CentralFind, a),
        Command::MinimizingTest(a) => task(Task::MinimizingTest, a),
        Command::Phi(a) => task(Task::Phi, a),
        Command::WeakKam(a) => task(Task::WeakKam, a),
        Command::SphereHj(a) => task(Task::SphereHj, a),
        Command::Flow(a) => task(Task::Flow, a),
        Command::Calibrate(a) => task(Task::Calibrate, a),
        Command::Busemann(a) => task(Task::Busemann, a),
        Command::Ejection(a) => task(Task::Ejection, a),
        Command::Selftest {
            out,
            inject_gradient_sign_error,
        } => {
            if *inject_gradient_sign_error {
                crate::space::FLIP_GRADIENT_SIGN.store(true, std::sync::atomic::Ordering::Relaxed);
            }
            let report = selftest::run();
            emit(&report.text());
            if let Some(dir) = out {
                let dir = Path::new(dir);
                let written = std::fs::create_dir_all(dir)
                    .and_then(|_| std::fs::write(dir.join("selftest.csv"), report.csv()));
                if let Err(e) = written {
                    eprintln!("error: {e}");
                    return EXIT_IO;
                }
            }
            if report.all_pass() {
                EXIT_OK
            } else {
                eprintln!("self test failed");
                1
            }
        }
    }
}

#[cfg(test)]
mod tests;
