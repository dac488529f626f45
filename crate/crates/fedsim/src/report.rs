//! Report types, trial summaries and JSON/CSV emission.

use std::io::Write;
use std::path::Path;

use fedsim_core::federation::{nan_as_null, Metrics, Mode, RoundHistory};
use fedsim_core::simnet::CommTotals;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Format, SummaryStat};
use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Run,
    Compare,
    Sweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub stat: SummaryStat,
    /// Index of the trial the summary is taken from.
    pub trial: usize,
    pub accuracy: f64,
    #[serde(with = "nan_as_null")]
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub trial: usize,
    pub seed: u64,
    pub split_seed: u64,
    pub final_metrics: Metrics,
    pub comm: CommTotals,
    pub history: RoundHistory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub name: String,
    pub mode: Mode,
    pub k_shot: Option<usize>,
    pub split_seeds: Vec<u64>,
    pub summary: Summary,
    pub comm: CommTotals,
    pub trials: Vec<TrialReport>,
}

/// Top-level document. Keys appear in field order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub command: Command,
    pub config: ExperimentConfig,
    pub entries: Vec<Entry>,
}

/// `best` takes the highest accuracy (earliest trial on ties); `median`
/// sorts by accuracy and takes the middle, the lower middle for even counts.
pub fn summarize(finals: &[Metrics], stat: SummaryStat) -> Result<Summary> {
    if finals.is_empty() {
        return Err(HarnessError::Config {
            field: "trials".into(),
            reason: "nothing to summarize".into(),
        });
    }
    let mut order: Vec<usize> = (0..finals.len()).collect();
    order.sort_by(|&a, &b| finals[a].accuracy.total_cmp(&finals[b].accuracy).then(a.cmp(&b)));
    let trial = match stat {
        SummaryStat::Best => {
            let top = finals[*order.last().expect("non-empty")].accuracy;
            *order.iter().find(|&&i| finals[i].accuracy == top).expect("non-empty")
        }
        SummaryStat::Median => order[(order.len() - 1) / 2],
    };
    Ok(Summary {
        stat,
        trial,
        accuracy: finals[trial].accuracy,
        loss: finals[trial].loss,
    })
}

pub const CSV_HEADER: [&str; 15] = [
    "entry",
    "mode",
    "k_shot",
    "trial",
    "seed",
    "round",
    "train_loss",
    "test_accuracy",
    "test_loss",
    "aggregations",
    "messages",
    "bytes",
    "participants",
    "params_hash",
    "diverged",
];

fn num(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else {
        String::new()
    }
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// One row per (entry, trial, round).
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER).expect("in-memory write");
        for e in &self.entries {
            for t in &e.trials {
                let diverged = t.history.diverged.is_some().to_string();
                for r in &t.history.rounds {
                    let participants: Vec<String> = r.participants.iter().map(usize::to_string).collect();
                    w.write_record([
                        e.name.clone(),
                        e.mode.name().to_string(),
                        e.k_shot.map(|k| k.to_string()).unwrap_or_default(),
                        t.trial.to_string(),
                        t.seed.to_string(),
                        r.round.to_string(),
                        num(r.train_loss),
                        num(r.test_accuracy),
                        num(r.test_loss),
                        r.aggregations.to_string(),
                        r.messages.to_string(),
                        r.bytes.to_string(),
                        participants.join(";"),
                        r.params_hash.clone(),
                        diverged.clone(),
                    ])
                    .expect("in-memory write");
                }
            }
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => self.to_json(),
            Format::Csv => self.to_csv(),
        }
    }

    /// Writes the rendered report to `path`, or stdout when `None`.
    pub fn emit(&self, format: Format, path: Option<&Path>) -> Result<()> {
        let text = self.render(format);
        match path {
            Some(p) => std::fs::write(p, text).map_err(|source| HarnessError::Output {
                path: p.to_path_buf(),
                source,
            }),
            None => std::io::stdout()
                .write_all(text.as_bytes())
                .map_err(|source| HarnessError::Output {
                    path: "<stdout>".into(),
                    source,
                }),
        }
    }
}
