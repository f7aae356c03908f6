use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use ptdyson::{run, write_outputs, Command, ScenarioConfig};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Sub {
    VerifyAlgebra,
    Classify,
    Static,
    SolveMap,
    VerifyMetric,
    Evolve,
    Sweep,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::VerifyAlgebra => Command::VerifyAlgebra,
            Sub::Classify => Command::Classify,
            Sub::Static => Command::Static,
            Sub::SolveMap => Command::SolveMap,
            Sub::VerifyMetric => Command::VerifyMetric,
            Sub::Evolve => Command::Evolve,
            Sub::Sweep => Command::Sweep,
        }
    }
}

/// Dyson maps, metrics and wavefunctions for the ixy-coupled oscillator.
///
/// Exit status: 0 when every check passes, 1 when a check fails, 2 on a
/// bad config. Set PTDYSON_WORKERS to limit sweep threads.
#[derive(Debug, Parser)]
#[command(name = "ptdyson", version)]
struct Cli {
    #[arg(value_enum)]
    subcommand: Sub,
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match ScenarioConfig::load(&cli.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cmd = Command::from(cli.subcommand);
    let outcome = run(cmd, &cfg);
    if let Err(e) = write_outputs(cmd, &outcome, &cli.out_dir) {
        eprintln!("error: cannot write outputs to {}: {e}", cli.out_dir.display());
        return ExitCode::from(1);
    }
    if !cli.quiet {
        print!("{}", outcome.report.render());
    }
    ExitCode::from(outcome.report.exit_code() as u8)
}
