//! Trial assembly: data, partition, k-shot subsets and the chosen regime.

use std::collections::BTreeSet;
use std::sync::Arc;

use fedsim_core::data::{gen_blobs, load_csv, sample_kshot, split_public_private, take_stratified, Dataset, Shard};
use fedsim_core::federation::{Arrivals, Mode, RunOutcome, Simulation};
use fedsim_core::seed::{derive_seed, Role};
use fedsim_core::simnet::NetTrace;
use fedsim_core::{Data, DataShard, Plan};
use rayon::prelude::*;

use crate::config::{ContinualConfig, DatasetConfig, ExperimentConfig};
use crate::error::Result;
use crate::report::{summarize, Command, Entry, Report, TrialReport};

/// Training rows plus the held-out test shard.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: Arc<Data>,
    pub test: DataShard,
}

fn subset(ds: &Data, rows: &[usize]) -> Result<Data> {
    let mut features = Vec::with_capacity(rows.len() * ds.width());
    let mut labels = Vec::with_capacity(rows.len());
    for &i in rows {
        features.extend_from_slice(ds.row(i));
        labels.push(ds.label(i));
    }
    Ok(Dataset::new(features, ds.width(), labels, ds.classes())?)
}

/// Builds the training set and test shard; independent of the trial.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let seed = cfg.data_seed();
    match &cfg.dataset {
        DatasetConfig::Blobs {
            classes,
            per_class,
            dim,
            separation,
            noise_sd,
            test_per_class,
            ..
        } => {
            let train = gen_blobs(*classes, *per_class, *dim, *separation, *noise_sd, seed)?;
            let test_seed = derive_seed(seed, Role::TestData, 0, 0);
            let test = gen_blobs(
                *classes,
                test_per_class.unwrap_or(*per_class),
                *dim,
                *separation,
                *noise_sd,
                test_seed,
            )?;
            Ok(Prepared {
                train: Arc::new(train),
                test: Shard::all(Arc::new(test)),
            })
        }
        DatasetConfig::Csv {
            path,
            label_column,
            test_fraction,
            ..
        } => {
            let all = Arc::new(load_csv::<f64>(path, label_column)?);
            let n = all.len();
            let held = ((n as f64 * test_fraction).round() as usize).clamp(1, n.saturating_sub(1).max(1));
            let (test, rest) = take_stratified(&Shard::all(Arc::clone(&all)), held, derive_seed(seed, Role::TestData, 0, 0))?;
            Ok(Prepared {
                train: Arc::new(subset(&all, rest.indices())?),
                test: Shard::all(Arc::new(subset(&all, test.indices())?)),
            })
        }
    }
}

/// One trial's data view.
pub struct TrialData {
    pub split_seed: u64,
    pub plan: Plan,
    pub arrivals: Option<Arrivals>,
}

/// Split and k-shot subsetting for the trial seeded with `seed`.
pub fn trial_data(cfg: &ExperimentConfig, prepared: &Prepared, seed: u64) -> Result<TrialData> {
    let split_seed = derive_seed(seed, Role::Split, 0, 0);
    let full = split_public_private(Arc::clone(&prepared.train), cfg.clients, cfg.partition, split_seed)?;
    let mut plan = full.clone();
    if let Some(k) = cfg.k_shot {
        if !plan.public.is_empty() {
            plan.public = sample_kshot(&plan.public, k, derive_seed(seed, Role::KShot, 0, 0))?;
        }
        for (c, shard) in plan.private.iter_mut().enumerate() {
            *shard = sample_kshot(shard, k, derive_seed(seed, Role::KShot, 0, c as u64 + 1))?;
        }
    }
    let arrivals = cfg
        .continual
        .map(|c| continual_arrivals(cfg, &full.private, &plan.private, c, seed))
        .transpose()?;
    Ok(TrialData {
        split_seed,
        plan,
        arrivals,
    })
}

/// Rounds `2..=T` each hand every client `per_class` rows per class from
/// the part of its original private shard it does not hold yet.
fn continual_arrivals(
    cfg: &ExperimentConfig,
    full: &[DataShard],
    held: &[DataShard],
    continual: ContinualConfig,
    seed: u64,
) -> Result<Arrivals> {
    let rounds = cfg.federation.rounds;
    let mut per_round = vec![vec![Vec::new(); full.len()]; rounds];
    for (c, (all, have)) in full.iter().zip(held).enumerate() {
        let have: BTreeSet<usize> = have.indices().iter().copied().collect();
        let mut pool: Vec<usize> = all.indices().iter().copied().filter(|i| !have.contains(i)).collect();
        for (t, slot) in per_round.iter_mut().enumerate().skip(1) {
            if pool.is_empty() {
                break;
            }
            let spare = Shard::new(Arc::clone(all.dataset()), pool.clone())?;
            let fresh = sample_kshot(&spare, continual.per_class, derive_seed(seed, Role::Arrival, t as u64 + 1, c as u64))?;
            let taken: BTreeSet<usize> = fresh.indices().iter().copied().collect();
            pool.retain(|i| !taken.contains(i));
            slot[c] = fresh.indices().to_vec();
        }
    }
    Ok(Arrivals { per_round })
}

pub struct TrialRun {
    pub report: TrialReport,
    pub trace: NetTrace,
}

/// Runs trial `index` of `cfg` under `mode`.
pub fn run_trial(cfg: &ExperimentConfig, prepared: &Prepared, mode: Mode, index: usize) -> Result<TrialRun> {
    let seed = cfg.base_seed.wrapping_add(index as u64);
    let data = trial_data(cfg, prepared, seed)?;
    let spec = cfg.model.spec(prepared.train.width(), prepared.train.classes())?;
    let mut fed = cfg.federation.clone();
    fed.mode = mode;
    let sim = Simulation::new(&fed, &spec, &data.plan, &prepared.test);
    let sim = match &data.arrivals {
        Some(a) => sim.with_arrivals(a),
        None => sim,
    };
    let RunOutcome {
        history, trace, comm, ..
    } = sim.run(seed)?;
    log::debug!(
        "{} trial {index}: final accuracy {:.4}",
        mode.name(),
        history.final_metrics().accuracy
    );
    Ok(TrialRun {
        report: TrialReport {
            trial: index,
            seed,
            split_seed: data.split_seed,
            final_metrics: history.final_metrics(),
            comm,
            history,
        },
        trace,
    })
}

/// All trials of one regime, summarized.
pub fn run_entry(
    cfg: &ExperimentConfig,
    prepared: &Prepared,
    name: String,
    mode: Mode,
) -> Result<(Entry, Vec<NetTrace>)> {
    let runs: Vec<TrialRun> = (0..cfg.trials)
        .into_par_iter()
        .map(|i| run_trial(cfg, prepared, mode, i))
        .collect::<Result<_>>()?;
    let finals: Vec<_> = runs.iter().map(|r| r.report.final_metrics).collect();
    let summary = summarize(&finals, cfg.summary)?;
    let mut comm = fedsim_core::simnet::CommTotals::default();
    for r in &runs {
        comm += r.report.comm;
    }
    let (trials, traces) = runs.into_iter().map(|r| (r.report, r.trace)).unzip();
    Ok((
        Entry {
            name,
            mode,
            k_shot: cfg.k_shot,
            split_seeds: (0..cfg.trials)
                .map(|i| derive_seed(cfg.base_seed.wrapping_add(i as u64), Role::Split, 0, 0))
                .collect(),
            summary,
            comm,
            trials,
        },
        traces,
    ))
}

/// Report plus per-entry, per-trial traces.
pub struct Outcome {
    pub report: Report,
    pub traces: Vec<Vec<NetTrace>>,
}

fn assemble(command: Command, cfg: &ExperimentConfig, parts: Vec<(Entry, Vec<NetTrace>)>) -> Outcome {
    let (entries, traces) = parts.into_iter().unzip();
    Outcome {
        report: Report {
            command,
            config: cfg.clone(),
            entries,
        },
        traces,
    }
}

/// `run`: the configured regime.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Outcome> {
    cfg.validate()?;
    let prepared = prepare(cfg)?;
    let mode = cfg.federation.mode;
    let entry = run_entry(cfg, &prepared, mode.name().to_string(), mode)?;
    Ok(assemble(Command::Run, cfg, vec![entry]))
}

/// `compare`: centralized, FL-only and FFM on identical partitions.
pub fn run_compare(cfg: &ExperimentConfig) -> Result<Outcome> {
    cfg.validate()?;
    let prepared = prepare(cfg)?;
    let parts = [Mode::Centralized, Mode::FlOnly, Mode::Ffm]
        .into_iter()
        .map(|mode| run_entry(cfg, &prepared, mode.name().to_string(), mode))
        .collect::<Result<_>>()?;
    Ok(assemble(Command::Compare, cfg, parts))
}

/// `sweep`: the configured regime once per k-shot value.
pub fn run_sweep(cfg: &ExperimentConfig, kshots: &[usize]) -> Result<Outcome> {
    cfg.validate()?;
    if kshots.is_empty() || kshots.contains(&0) {
        return Err(crate::HarnessError::Config {
            field: "kshots".into(),
            reason: "need one or more values >= 1".into(),
        });
    }
    let prepared = prepare(cfg)?;
    let parts = kshots
        .iter()
        .map(|&k| {
            let mut c = cfg.clone();
            c.k_shot = Some(k);
            run_entry(&c, &prepared, format!("k{k}"), c.federation.mode)
        })
        .collect::<Result<_>>()?;
    Ok(assemble(Command::Sweep, cfg, parts))
}
