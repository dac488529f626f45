//! FedAvg and FFM round state machines, the server update queue and
//! evaluation.

mod client;
mod config;
mod history;
mod queue;
mod run;
mod update;

pub use client::{central_optimize, evaluate, local_train, select_clients};
pub use config::{FedConfig, Mode, NetConfig, ServerLr, ServerPhase, Weighting};
pub use history::{nan_as_null, Divergence, Metrics, RoundHistory, RoundRecord};
pub use queue::{Flush, UpdateQueue};
pub use run::{run_centralized, run_fedavg, run_ffm, Arrivals, RunOutcome, ShardReads, Simulation};
pub use update::{aggregate, ClientUpdate};
