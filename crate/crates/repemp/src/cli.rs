//! Command-line front end. `execute` is the whole program minus process
//! plumbing, so tests can drive it in-process.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use repemp_core::empowerment::{rep_emp, EmpowermentError, Estimator, DEFAULT_TOLERANCE};
use repemp_core::envemp::{env_empowerment, GridError};

use crate::grid::{GridFile, GridFileError};
use crate::report::{self, CompareReport, EvalReport, LibraryRow, Ranking, DEFAULT_BITS_PRECISION};
use crate::run::run;
use crate::scenario::{Scenario, ScenarioError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_CAP: i32 = 3;
pub const EXIT_TASK: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "repemp", version, about = "Representational empowerment of program libraries")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate one library.
    Eval(EvalArgs),
    /// Rank several libraries by representational empowerment.
    Compare(CompareArgs),
    /// Run the scenario's task sequence through executor and curator.
    Run(Common),
    /// Check a scenario and report every problem found.
    Validate(Common),
    /// Environmental empowerment on a grid map.
    Grid(GridArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorArg {
    Uniform,
    Capacity,
}

impl From<EstimatorArg> for Estimator {
    fn from(e: EstimatorArg) -> Estimator {
        match e {
            EstimatorArg::Uniform => Estimator::Uniform,
            EstimatorArg::Capacity => Estimator::Capacity,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum)]
pub enum Format {
    #[default]
    Table,
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long, value_enum)]
    pub estimator: Option<EstimatorArg>,
    #[arg(long)]
    pub horizon: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_BITS_PRECISION)]
    pub bits_precision: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub library: String,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: Common,
    /// Library ids; repeat the flag or list them after it.
    #[arg(long = "library", num_args = 1.., required = true)]
    pub libraries: Vec<String>,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub horizon: Option<u32>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_BITS_PRECISION)]
    pub bits_precision: usize,
    /// Evaluate every floor cell, not just the start.
    #[arg(long)]
    pub all: bool,
    #[arg(long, default_value_t = repemp_core::context::DEFAULT_ENUMERATION_CAP)]
    pub enumeration_cap: u64,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    GridFile(#[from] GridFileError),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Cap(String),
    #[error("{0}")]
    Task(String),
    #[error("{0}")]
    Other(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Scenario(_) | CliError::Usage(_) => EXIT_VALIDATION,
            CliError::GridFile(GridFileError::Grid(GridError::CapExceeded { .. })) | CliError::Cap(_) => EXIT_CAP,
            CliError::GridFile(GridFileError::Io { .. }) => EXIT_OTHER,
            CliError::GridFile(_) => EXIT_VALIDATION,
            CliError::Task(_) => EXIT_TASK,
            CliError::Other(_) | CliError::Io(_) => EXIT_OTHER,
        }
    }
}

fn emp_error(e: EmpowermentError) -> CliError {
    match e {
        EmpowermentError::CapExceeded { .. } => CliError::Cap(e.to_string()),
        other => CliError::Other(other.to_string()),
    }
}

fn load(common: &Common) -> Result<Scenario, CliError> {
    let mut s = Scenario::load(&common.scenario)?;
    if let Some(t) = common.horizon {
        s.horizon = t;
        s.curator.horizon = t;
    }
    if let Some(e) = common.estimator {
        s.estimator = e.into();
        s.curator.estimator = e.into();
    }
    if let Some(seed) = common.seed {
        s.seed = seed;
    }
    Ok(s)
}

fn evaluate(s: &Scenario, id: &str, estimator: Estimator) -> Result<LibraryRow, CliError> {
    let lib = s.library(id).ok_or_else(|| CliError::Usage(format!("unknown library `{id}`")))?;
    let report = rep_emp(&lib, &s.context, s.horizon, estimator).map_err(emp_error)?;
    Ok(LibraryRow::new(id, &lib, report))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    std::fs::write(path, report::json(value))?;
    Ok(())
}

fn render(rows: &[LibraryRow], format: Format, precision: usize, json: impl FnOnce() -> String) -> String {
    match format {
        Format::Table => report::table(rows, precision),
        Format::Csv => report::csv(rows, precision),
        Format::Json => json(),
    }
}

/// Runs one parsed command, writing human output to `out`.
pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Eval(a) => {
            let s = load(&a.common)?;
            let row = evaluate(&s, &a.library, s.estimator)?;
            let rep = EvalReport { scenario: s.name.clone(), horizon: s.horizon, estimator: s.estimator, row };
            if let Some(path) = &a.common.out {
                write_json(path, &rep)?;
            }
            let text = render(std::slice::from_ref(&rep.row), a.format, a.common.bits_precision, || report::json(&rep));
            out.write_all(text.as_bytes())?;
        }
        Command::Compare(a) => {
            let s = load(&a.common)?;
            if a.libraries.len() < 2 {
                return Err(CliError::Usage("compare needs at least two libraries".into()));
            }
            let mut estimators = vec![Estimator::Uniform];
            if s.estimator == Estimator::Capacity {
                estimators.push(Estimator::Capacity);
            }
            let mut rankings = Vec::new();
            for e in estimators {
                let rows = a.libraries.iter().map(|id| evaluate(&s, id, e)).collect::<Result<Vec<_>, _>>()?;
                rankings.push(Ranking::new(e, rows));
            }
            let rep = CompareReport { scenario: s.name.clone(), horizon: s.horizon, rankings };
            if let Some(path) = &a.common.out {
                write_json(path, &rep)?;
            }
            if a.format == Format::Json {
                out.write_all(report::json(&rep).as_bytes())?;
            } else {
                let many = rep.rankings.len() > 1;
                for (i, r) in rep.rankings.iter().enumerate() {
                    if many {
                        if i > 0 {
                            writeln!(out)?;
                        }
                        writeln!(out, "# estimator: {}", r.estimator)?;
                    }
                    out.write_all(render(&r.rows, a.format, a.common.bits_precision, String::new).as_bytes())?;
                }
            }
        }
        Command::Run(c) => {
            let s = load(&c)?;
            if s.tasks.is_empty() {
                return Err(CliError::Usage("scenario has no tasks to run".into()));
            }
            let rep = run(&s, &s.curator);
            match &c.out {
                Some(path) => {
                    write_json(path, &rep)?;
                    for step in &rep.steps {
                        let reward = step.episode.as_ref().map_or(0.0, |e| e.reward);
                        match &step.error {
                            Some(e) => writeln!(out, "task {} {}: error: {e}", step.task_index, step.task)?,
                            None => writeln!(
                                out,
                                "task {} {}: reward {} -> {} -> {{{}}} ({} bits)",
                                step.task_index,
                                step.task,
                                report::bits(reward, c.bits_precision),
                                step.action_label.as_deref().unwrap_or("-"),
                                step.library.ids().collect::<Vec<_>>().join(", "),
                                report::bits(step.report.as_ref().map_or(0.0, |r| r.value()), c.bits_precision),
                            )?,
                        }
                    }
                }
                None => out.write_all(report::json(&rep).as_bytes())?,
            }
            if rep.failed() {
                return Err(CliError::Task(format!("{} of {} tasks failed", rep.statistics.failed_tasks, rep.statistics.tasks)));
            }
        }
        Command::Validate(c) => {
            let s = load(&c)?;
            writeln!(
                out,
                "ok: {} ({} programs, {} libraries, {} tasks)",
                s.name,
                s.context.scope.programs().count(),
                s.libraries.len(),
                s.tasks.len()
            )?;
        }
        Command::Grid(a) => {
            let g = GridFile::load(&a.scenario)?;
            let t = a.horizon.unwrap_or(g.horizon);
            let cells = if a.all { g.floor() } else { vec![g.start] };
            let mut rows = Vec::new();
            for c in cells {
                let r = env_empowerment(&g.mdp, c, t, DEFAULT_TOLERANCE, a.enumeration_cap).map_err(GridFileError::Grid)?;
                rows.push(GridRow { x: c.0, y: c.1, report: r });
            }
            let rep = GridReport { grid: g.name.clone(), horizon: t, slip: g.mdp.slip(), cells: rows };
            if let Some(path) = &a.out {
                write_json(path, &rep)?;
            }
            writeln!(out, "{:>3}  {:>3}  {:>6}  {:>8}", "x", "y", "states", "empowerment")?;
            for r in &rep.cells {
                writeln!(out, "{:>3}  {:>3}  {:>6}  {:>11}", r.x, r.y, r.report.n_eff, report::bits(r.report.value(), a.bits_precision))?;
            }
        }
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct GridRow {
    x: usize,
    y: usize,
    report: repemp_core::empowerment::EmpowermentReport,
}

#[derive(Debug, Serialize)]
struct GridReport {
    grid: String,
    horizon: u32,
    slip: f64,
    cells: Vec<GridRow>,
}

/// Parses `args` (including the program name) and runs; returns the exit
/// code. Errors go to `err`.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = if e.use_stderr() { write!(err, "{}", e.render()) } else { write!(out, "{}", e.render()) };
            return code;
        }
    };
    match execute(cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
