//! Configuration-driven convergence studies for the `regge` binary.

pub mod checks;
pub mod config;
pub mod study;

use std::path::Path;

use thiserror::Error;

use regge_core::lift::LiftError;
use regge_core::norms::to_csv;
use regge_core::spaces::SpaceError;

pub use config::StudyConfig;
pub use study::StudyOutput;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("property suite failed: {0}")]
    Property(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<LiftError> for CliError {
    fn from(e: LiftError) -> CliError {
        CliError::Numerical(e.to_string())
    }
}

impl From<SpaceError> for CliError {
    fn from(e: SpaceError) -> CliError {
        CliError::Numerical(e.to_string())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Property(_) => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Interpolate,
    Curvature,
    Connection,
    Curl,
    Inc,
    OpsCheck,
}

/// Command line values that take precedence over the config file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub quad_degree: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut StudyConfig) {
        if let Some(s) = self.seed {
            cfg.mesh.seed = s;
        }
        if let Some(q) = self.quad_degree {
            cfg.quad_degree = Some(q);
        }
    }
}

/// Runs a convergence study.
pub fn run_study(cmd: Command, cfg: &StudyConfig) -> Result<StudyOutput, CliError> {
    match cmd {
        Command::Interpolate => study::interpolate(cfg),
        Command::Curvature => study::curvature(cfg),
        Command::Connection => study::connection(cfg),
        Command::Curl => study::curl(cfg),
        Command::Inc => study::inc(cfg),
        Command::OpsCheck => Err(CliError::Config("ops-check is not a convergence study".into())),
    }
}

/// Writes `<name>.csv` per table and `<name>.vtk` per field into `dir`.
pub fn write_output(dir: &Path, out: &StudyOutput) -> Result<Vec<std::path::PathBuf>, CliError> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for t in &out.tables {
        let p = dir.join(format!("{}.csv", t.name));
        std::fs::write(&p, to_csv(&t.records))?;
        written.push(p);
    }
    for (name, text) in &out.vtk {
        let p = dir.join(format!("{name}.vtk"));
        std::fs::write(&p, text)?;
        written.push(p);
    }
    Ok(written)
}

/// Runs the property suite on the config's metric and coarsest mesh and
/// returns the report, failing with [`CliError::Property`] if any check
/// does not hold.
pub fn ops_check(cfg: &StudyConfig) -> Result<String, CliError> {
    let settings = checks::SuiteSettings {
        metric: cfg.analytic_metric()?,
        rect: cfg.rect(),
        n: cfg.mesh.n0,
        perturb_amplitude: cfg.mesh.perturb_amplitude,
        seed: cfg.mesh.seed,
        degrees: cfg.degrees.clone(),
    };
    let outcomes = checks::run_suite(&settings)?;
    let report: String = outcomes.iter().map(|o| o.line() + "\n").collect();
    let failed = outcomes.iter().filter(|o| !o.pass).count();
    if failed > 0 {
        return Err(CliError::Property(format!("{failed} of {} checks failed\n{report}", outcomes.len())));
    }
    Ok(report)
}
