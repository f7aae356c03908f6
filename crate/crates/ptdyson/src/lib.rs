//! Scenario runner for the ptdyson-core engine: JSON configs, reports,
//! CSV tables and λ sweeps.

pub mod commands;
pub mod config;
pub mod report;

use std::io;
use std::path::{Path, PathBuf};

pub use commands::{run, Command, Outcome};
pub use config::{ConfigError, ScenarioConfig};
pub use report::{Check, RunReport, Table};

/// Writes `<stem>.csv` and `<stem>_report.txt` into `dir`.
pub fn write_outputs(cmd: Command, outcome: &Outcome, dir: &Path) -> io::Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let stem = cmd.file_stem();
    let csv = dir.join(format!("{stem}.csv"));
    let txt = dir.join(format!("{stem}_report.txt"));
    outcome.table.write(&csv)?;
    std::fs::write(&txt, outcome.report.render())?;
    Ok((csv, txt))
}
