use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simnet::LatencyModel;

/// Optimization regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Server-side SGD on the public shard only.
    Centralized,
    /// FedAvg on private shards only.
    FlOnly,
    /// Server-side public-data optimization followed by a FedAvg round.
    Ffm,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Centralized => "centralized",
            Mode::FlOnly => "fl_only",
            Mode::Ffm => "ffm",
        }
    }
}

/// Server step size: one value for every round or one per round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ServerLr {
    Constant(f64),
    Schedule(Vec<f64>),
}

impl Default for ServerLr {
    fn default() -> Self {
        ServerLr::Constant(1.0)
    }
}

impl ServerLr {
    /// Step size for 1-based `round`.
    pub fn at(&self, round: usize) -> f64 {
        match self {
            ServerLr::Constant(eta) => *eta,
            ServerLr::Schedule(list) => list[round - 1],
        }
    }
}

/// Client weights in the aggregate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// `n_k / sum(n_j)`; the server step size is then a pure step size.
    #[default]
    Normalized,
    /// Raw `n_k`, exactly as in the unnormalized aggregation formula.
    SampleCount,
}

/// When the FFM server optimizes on public data.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServerPhase {
    #[default]
    EveryRound,
    FirstRoundOnly,
}

/// Latencies for asynchronous delivery. Client delays default to
/// `client_delay` unless `client_delays` lists one per client.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    #[serde(default)]
    pub server_delay: f64,
    #[serde(default)]
    pub client_delay: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub client_delays: Option<Vec<f64>>,
    #[serde(default)]
    pub jitter: f64,
}

impl NetConfig {
    pub fn latency(&self, clients: usize, seed: u64) -> Result<LatencyModel> {
        let mut base = vec![self.server_delay];
        match &self.client_delays {
            Some(list) => {
                if list.len() != clients {
                    return Err(Error::config(
                        "network.client_delays",
                        format!("expected {clients} entries, got {}", list.len()),
                    ));
                }
                base.extend(list);
            }
            None => base.extend(std::iter::repeat_n(self.client_delay, clients)),
        }
        let jitter = vec![self.jitter; clients + 1];
        LatencyModel::new(base, jitter, seed).map_err(|e| Error::config("network", e.to_string()))
    }
}

fn one() -> f64 {
    1.0
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// Round structure and optimizer settings shared by all three regimes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FedConfig {
    pub mode: Mode,
    /// Communication rounds `T`.
    pub rounds: usize,
    /// Local epochs `E` per round.
    pub local_epochs: usize,
    pub local_lr: f64,
    pub batch_size: usize,
    #[serde(default)]
    pub server_lr: ServerLr,
    /// Fraction of deployed clients that report (`S_t`).
    #[serde(default = "one")]
    pub participation: f64,
    /// Fraction of all clients the model is deployed to.
    #[serde(default = "one")]
    pub deploy_fraction: f64,
    /// Queue threshold; defaults to the number of reporting clients.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<usize>,
    /// Public-data epochs `E_pub` per server phase.
    #[serde(default)]
    pub server_epochs: usize,
    /// Learning rate for server-side public-data SGD; defaults to `local_lr`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub server_opt_lr: Option<f64>,
    /// Centralized baseline epoch budget; defaults to `rounds * server_epochs`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centralized_epochs: Option<usize>,
    #[serde(default)]
    pub weighting: Weighting,
    #[serde(default)]
    pub server_phase: ServerPhase,
    #[serde(default, rename = "async", skip_serializing_if = "is_false")]
    pub asynchronous: bool,
    #[serde(default)]
    pub network: NetConfig,
}

impl FedConfig {
    /// Synchronous defaults for `mode`; callers adjust fields as needed.
    pub fn new(mode: Mode, rounds: usize, local_epochs: usize, local_lr: f64, batch_size: usize) -> Self {
        Self {
            mode,
            rounds,
            local_epochs,
            local_lr,
            batch_size,
            server_lr: ServerLr::default(),
            participation: 1.0,
            deploy_fraction: 1.0,
            tau: None,
            server_epochs: 0,
            server_opt_lr: None,
            centralized_epochs: None,
            weighting: Weighting::default(),
            server_phase: ServerPhase::default(),
            asynchronous: false,
            network: NetConfig::default(),
        }
    }

    pub fn public_lr(&self) -> f64 {
        self.server_opt_lr.unwrap_or(self.local_lr)
    }

    pub fn centralized_budget(&self) -> usize {
        self.centralized_epochs
            .unwrap_or(self.rounds * self.server_epochs)
    }

    /// `|S|`: clients receiving the model each round.
    pub fn deployed_count(&self, clients: usize) -> usize {
        selection_size(clients, self.deploy_fraction)
    }

    /// `|S_t|`: clients reporting each round.
    pub fn reporting_count(&self, clients: usize) -> usize {
        selection_size(self.deployed_count(clients), self.participation)
    }

    pub fn tau_for(&self, clients: usize) -> usize {
        self.tau.unwrap_or_else(|| self.reporting_count(clients))
    }

    /// Field-level checks against a population of `clients`.
    pub fn validate(&self, clients: usize) -> Result<()> {
        let finite_nonneg = |field, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::config(field, format!("must be finite and >= 0, got {v}")))
            }
        };
        if clients == 0 {
            return Err(Error::config("clients", "must be >= 1"));
        }
        if self.local_epochs == 0 {
            return Err(Error::config("local_epochs", "must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be >= 1"));
        }
        finite_nonneg("local_lr", self.local_lr)?;
        if let Some(lr) = self.server_opt_lr {
            finite_nonneg("server_opt_lr", lr)?;
        }
        for (field, f) in [("participation", self.participation), ("deploy_fraction", self.deploy_fraction)] {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::config(field, format!("must lie in (0, 1], got {f}")));
            }
        }
        match &self.server_lr {
            ServerLr::Constant(eta) => {
                if !(eta.is_finite() && *eta > 0.0) {
                    return Err(Error::config("server_lr", format!("must be finite and > 0, got {eta}")));
                }
            }
            ServerLr::Schedule(list) => {
                if list.len() < self.rounds {
                    return Err(Error::config(
                        "server_lr",
                        format!("schedule has {} entries for {} rounds", list.len(), self.rounds),
                    ));
                }
                if let Some(eta) = list.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
                    return Err(Error::config("server_lr", format!("entries must be finite and > 0, got {eta}")));
                }
            }
        }
        if let Some(tau) = self.tau {
            if tau == 0 {
                return Err(Error::config("tau", "must be >= 1"));
            }
            if tau > clients {
                return Err(Error::config("tau", format!("{tau} exceeds the {clients} clients")));
            }
            let reporting = self.reporting_count(clients);
            if tau > reporting {
                return Err(Error::config(
                    "tau",
                    format!("{tau} exceeds the {reporting} clients reporting per round"),
                ));
            }
        }
        finite_nonneg("network.server_delay", self.network.server_delay)?;
        finite_nonneg("network.client_delay", self.network.client_delay)?;
        finite_nonneg("network.jitter", self.network.jitter)?;
        if let Some(list) = &self.network.client_delays {
            for &d in list {
                finite_nonneg("network.client_delays", d)?;
            }
        }
        Ok(())
    }
}

pub(crate) fn selection_size(population: usize, fraction: f64) -> usize {
    ((fraction * population as f64).ceil() as usize).clamp(1, population.max(1))
}
