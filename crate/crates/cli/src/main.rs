use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use regge_cli::{ops_check, run_study, write_output, CliError, Command, Overrides, StudyConfig};

#[derive(Parser)]
#[command(name = "regge", version, about = "Curvature, connection and covariant operators of Regge metrics")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Regge interpolation error of the exact metric.
    Interpolate(Common),
    /// Gauss curvature convergence study.
    Curvature(Common),
    /// Connection 1-form convergence study.
    Connection(Common),
    /// Covariant curl of the interpolation error.
    Curl(Common),
    /// Covariant incompatibility of the interpolation error.
    Inc(Common),
    /// Geometric identities and assembly cross-checks.
    OpsCheck(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    quad_degree: Option<usize>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (cmd, common) = match cli.command {
        Sub::Interpolate(c) => (Command::Interpolate, c),
        Sub::Curvature(c) => (Command::Curvature, c),
        Sub::Connection(c) => (Command::Connection, c),
        Sub::Curl(c) => (Command::Curl, c),
        Sub::Inc(c) => (Command::Inc, c),
        Sub::OpsCheck(c) => (Command::OpsCheck, c),
    };
    let mut cfg = StudyConfig::load(&common.config)?;
    Overrides { seed: common.seed, quad_degree: common.quad_degree }.apply(&mut cfg);
    if cmd == Command::OpsCheck {
        print!("{}", ops_check(&cfg)?);
        return Ok(());
    }
    let out = run_study(cmd, &cfg)?;
    for p in write_output(&common.out, &out)? {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
