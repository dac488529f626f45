//! Config-driven experiment harness: builds datasets, runs the centralized,
//! FL-only and FFM regimes over seeded trials and emits reports.

pub mod config;
mod error;
pub mod experiment;
pub mod report;

use std::path::Path;

pub use config::{ExperimentConfig, Format, SummaryStat};
pub use error::{HarnessError, Result};
pub use experiment::{run_compare, run_experiment, run_sweep, Outcome};
pub use report::{summarize, Report};

/// Writes every trace as `<dir>/<entry>-trial<i>.jsonl`.
pub fn write_traces(outcome: &Outcome, dir: &Path) -> Result<()> {
    let io = |source| HarnessError::Output {
        path: dir.to_path_buf(),
        source,
    };
    std::fs::create_dir_all(dir).map_err(io)?;
    for (entry, traces) in outcome.report.entries.iter().zip(&outcome.traces) {
        for (i, trace) in traces.iter().enumerate() {
            trace.write_jsonl(dir.join(format!("{}-trial{i}.jsonl", entry.name)))?;
        }
    }
    Ok(())
}
