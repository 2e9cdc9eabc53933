//! Command implementations behind the `vrp2l` binary.
//!
//! Every command is a plain function returning a [`CliError`] on failure so
//! tests can drive them without spawning a process. Exit codes: 0 success,
//! 2 infeasible, 3 input error.

pub mod args;
pub mod bench;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use vrp2l::io::{parse_instance, parse_solution, serialize_instance, write_solution};
use vrp2l::tabu::ConvergenceRecord;
use vrp2l::{solve, Instance, SolveOutcome, SolveParams, Violation};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_INPUT: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Infeasible(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Input(_) => EXIT_INPUT,
            Self::Infeasible(_) => EXIT_INFEASIBLE,
        }
    }
}

impl From<vrp2l::Error> for CliError {
    fn from(e: vrp2l::Error) -> Self {
        use vrp2l::Error as E;
        match e {
            E::Construction(_) | E::InfeasibleStart(_) | E::InfeasibleConfig(_) => Self::Infeasible(e.to_string()),
            _ => Self::Input(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

pub fn read_instance(path: &Path) -> CliResult<(Instance, String)> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let instance = parse_instance(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok((instance, sha256_hex(text.as_bytes())))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn write(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Everything needed to repeat a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub instance: PathBuf,
    pub instance_sha256: String,
    /// Recorded for bookkeeping; the solver itself draws no random numbers.
    pub seed: u64,
    pub params: SolveParams,
    pub output_dir: PathBuf,
}

/// Mileage after each stage; `postopt` is absent when post-optimisation
/// was switched off.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub initial: f64,
    pub tabu: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub postopt: Option<f64>,
    pub initial_trucks: usize,
    pub final_trucks: usize,
    pub iterations: usize,
    pub seconds: [f64; 3],
    pub feasible: bool,
}

impl Summary {
    pub fn of(outcome: &SolveOutcome, postopt: bool) -> Self {
        Self {
            initial: outcome.initial.total_mileage,
            tabu: outcome.after_tabu.total_mileage,
            postopt: postopt.then_some(outcome.solution.total_mileage),
            initial_trucks: outcome.initial.used_trucks(),
            final_trucks: outcome.solution.used_trucks(),
            iterations: outcome.iterations,
            seconds: outcome.seconds,
            feasible: outcome.solution.is_feasible(),
        }
    }

    pub fn final_mileage(&self) -> f64 {
        self.postopt.unwrap_or(self.tabu)
    }
}

impl std::fmt::Display for Summary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "initial {:.2} ({} trucks)  tabu {:.2}", self.initial, self.initial_trucks, self.tabu)?;
        if let Some(p) = self.postopt {
            write!(f, "  post-opt {p:.2}")?;
        }
        write!(f, "  final trucks {}  iterations {}", self.final_trucks, self.iterations)
    }
}

/// Convergence log as CSV: iteration, elapsed_ms, current_mileage,
/// best_mileage.
pub fn convergence_csv(log: &[ConvergenceRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["iteration", "elapsed_ms", "current_mileage", "best_mileage"])
        .expect("in-memory write");
    for r in log {
        w.write_record([
            r.iteration.to_string(),
            format!("{:.3}", r.elapsed_seconds * 1000.0),
            format!("{:.6}", r.current),
            format!("{:.6}", r.best),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
}

/// Solves `instance` and writes `run.json`, `solution.json`,
/// `convergence.csv` and `summary.json` into `out`.
pub fn cmd_solve(instance: &Instance, config: &RunConfig) -> CliResult<(SolveOutcome, Summary)> {
    let outcome = solve(instance, &config.params)?;
    let summary = Summary::of(&outcome, config.params.postopt);
    let out = &config.output_dir;
    write(&out.join("run.json"), &pretty(config))?;
    write(&out.join("solution.json"), &write_solution(&outcome.solution, instance))?;
    write(&out.join("convergence.csv"), &convergence_csv(&outcome.convergence))?;
    write(&out.join("summary.json"), &pretty(&summary))?;
    if !outcome.solution.is_feasible() {
        return Err(CliError::Infeasible("the final solution breaks a constraint".into()));
    }
    Ok((outcome, summary))
}

pub(crate) fn pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("plain data serializes")
}

/// Writes a generated instance, to stdout when `out` is `None`.
pub fn cmd_gen(config: &vrp2l::generate::GeneratorConfig, out: Option<&Path>) -> CliResult<Instance> {
    let instance = vrp2l::generate::generate_instance(config)?;
    let text = serialize_instance(&instance);
    match out {
        Some(p) => write(p, &text)?,
        None => println!("{text}"),
    }
    Ok(instance)
}

/// Checks a solution document against an instance.
pub fn cmd_validate(instance: &Instance, solution_path: &Path) -> CliResult<Vec<Violation>> {
    let text = fs::read_to_string(solution_path).map_err(|e| io_err(solution_path, e))?;
    let solution =
        parse_solution(&text).map_err(|e| CliError::Input(format!("{}: {e}", solution_path.display())))?;
    Ok(vrp2l::validate_solution(&solution, instance))
}

/// Exact optimum of a tiny instance, written to `out` when given.
pub fn cmd_oracle(instance: &Instance, out: Option<&Path>) -> CliResult<vrp2l::Solution> {
    let solution = vrp2l::oracle::exact_solve(instance)?
        .ok_or_else(|| CliError::Infeasible("the instance has no feasible solution".into()))?;
    if let Some(p) = out {
        write(p, &write_solution(&solution, instance))?;
    }
    Ok(solution)
}
