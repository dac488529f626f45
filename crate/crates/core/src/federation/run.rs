//! Round orchestration for the three regimes.
//!
//! Synchronous rounds train every reporting client (in parallel), then push
//! deploy and upload messages through a zero-latency network so arrival
//! order is ascending client id. Asynchronous rounds are event driven: a
//! client trains when its deploy message arrives and its update joins the
//! server queue when the upload arrives. An asynchronous round ends after
//! its first aggregation; messages still in flight carry into the next
//! round and are applied against whatever the global model is by then.

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;

use crate::data::{PartitionPlan, Shard};
use crate::error::{Error, Result};
use crate::federation::{
    aggregate, central_optimize, evaluate, local_train, select_clients, ClientUpdate, Divergence, FedConfig,
    Flush, Metrics, Mode, RoundHistory, RoundRecord, ServerPhase, UpdateQueue,
};
use crate::model::{init_params, ModelSpec, ParameterVector};
use crate::scalar::Scalar;
use crate::seed::{derive_seed, Role};
use crate::simnet::{client_node, comm_totals, model_payload_bytes, CommTotals, LatencyModel, NetTrace, PayloadTag, SimNet, SERVER};

/// Rows that join client shards as rounds progress. `per_round[t - 1][k]`
/// lists rows client `k` gains at the start of round `t`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Arrivals {
    pub per_round: Vec<Vec<Vec<usize>>>,
}

impl Arrivals {
    fn for_round(&self, round: usize) -> Option<&[Vec<usize>]> {
        self.per_round.get(round - 1).map(Vec::as_slice)
    }
}

/// How many training epochs touched each kind of shard.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ShardReads {
    pub public_epochs: usize,
    pub private_epochs: usize,
}

#[derive(Debug, Clone)]
pub struct RunOutcome<T> {
    pub history: RoundHistory,
    /// Final global model (the last finite one if the run diverged).
    pub params: ParameterVector<T>,
    pub trace: NetTrace,
    pub comm: CommTotals,
    pub reads: ShardReads,
}

/// One simulated training run.
pub struct Simulation<'a, T> {
    config: &'a FedConfig,
    spec: &'a ModelSpec,
    plan: &'a PartitionPlan<T>,
    test: &'a Shard<T>,
    arrivals: Option<&'a Arrivals>,
}

impl<'a, T: Scalar> Simulation<'a, T> {
    pub fn new(config: &'a FedConfig, spec: &'a ModelSpec, plan: &'a PartitionPlan<T>, test: &'a Shard<T>) -> Self {
        Self {
            config,
            spec,
            plan,
            test,
            arrivals: None,
        }
    }

    pub fn with_arrivals(mut self, arrivals: &'a Arrivals) -> Self {
        self.arrivals = Some(arrivals);
        self
    }

    fn check(&self) -> Result<()> {
        let cfg = self.config;
        cfg.validate(self.plan.clients())?;
        let width = self.spec.input_dim();
        for (what, shard) in [("plan", &self.plan.public), ("test", self.test)] {
            let ds = shard.dataset();
            if ds.width() != width {
                return Err(Error::config(
                    "model",
                    format!("{what} rows have width {} but the model expects {width}", ds.width()),
                ));
            }
            if ds.classes() > self.spec.classes() {
                return Err(Error::config(
                    "model",
                    format!("{what} data has {} classes, model only {}", ds.classes(), self.spec.classes()),
                ));
            }
        }
        if self.test.is_empty() {
            return Err(Error::config("test", "test shard is empty"));
        }
        match cfg.mode {
            Mode::Centralized if self.plan.public.is_empty() => {
                Err(Error::config("public", "centralized mode needs a public shard"))
            }
            Mode::FlOnly | Mode::Ffm if self.plan.private.iter().any(Shard::is_empty) => {
                Err(Error::config("private", "every client needs a non-empty shard"))
            }
            _ => Ok(()),
        }
    }

    pub fn run(&self, seed: u64) -> Result<RunOutcome<T>> {
        self.check()?;
        let w0 = init_params::<T>(self.spec, derive_seed(seed, Role::Init, 0, 0));
        match self.config.mode {
            Mode::Centralized => self.centralized(w0, seed),
            Mode::FlOnly => Federated::new(self, w0, seed, false)?.run(),
            Mode::Ffm => Federated::new(self, w0, seed, true)?.run(),
        }
    }

    fn metrics(&self, w: &ParameterVector<T>) -> Result<Metrics> {
        evaluate(self.spec, w, self.test)
    }

    /// Sample-weighted mean loss of `w` over `shards`.
    fn train_loss(&self, w: &ParameterVector<T>, shards: &[&Shard<T>]) -> Result<f64> {
        let mut total = 0.0;
        let mut n = 0usize;
        for s in shards.iter().filter(|s| !s.is_empty()) {
            total += evaluate(self.spec, w, s)?.loss * s.len() as f64;
            n += s.len();
        }
        Ok(if n == 0 { f64::NAN } else { total / n as f64 })
    }

    fn record(
        &self,
        round: usize,
        w: &ParameterVector<T>,
        train_loss: f64,
        participants: Vec<usize>,
        aggregations: usize,
        comm: CommTotals,
    ) -> Result<RoundRecord> {
        let m = self.metrics(w)?;
        Ok(RoundRecord {
            round,
            params_hash: format!("{:016x}", w.fingerprint()),
            train_loss,
            test_accuracy: m.accuracy,
            test_loss: m.loss,
            participants,
            aggregations,
            messages: comm.messages,
            bytes: comm.bytes,
        })
    }

    fn centralized(&self, mut w: ParameterVector<T>, seed: u64) -> Result<RunOutcome<T>> {
        let cfg = self.config;
        let public = &self.plan.public;
        let budget = cfg.centralized_budget();
        let chunk = cfg.server_epochs.max(1);
        let lr = T::lit(cfg.public_lr());
        let mut history = RoundHistory {
            initial: self.metrics(&w)?,
            rounds: Vec::new(),
            diverged: None,
        };
        let mut reads = ShardReads::default();
        let (mut done, mut round) = (0, 0);
        while done < budget {
            round += 1;
            let epochs = chunk.min(budget - done);
            let seed = derive_seed(seed, Role::Central, round as u64, 0);
            match central_optimize(&w, self.spec, public, epochs, lr, cfg.batch_size, seed) {
                Ok(next) => w = next,
                Err(Error::NonFinite(_)) => {
                    history.diverged = Some(Divergence {
                        round,
                        client: None,
                        reason: "non-finite parameters in public-data optimization".into(),
                    });
                    break;
                }
                Err(e) => return Err(e),
            }
            reads.public_epochs += epochs;
            done += epochs;
            let train_loss = self.train_loss(&w, &[public])?;
            let rec = self.record(round, &w, train_loss, Vec::new(), 0, CommTotals::default())?;
            note_nan_loss(&mut history, &rec);
            history.rounds.push(rec);
        }
        Ok(RunOutcome {
            history,
            params: w,
            trace: NetTrace::default(),
            comm: CommTotals::default(),
            reads,
        })
    }
}

fn note_nan_loss(history: &mut RoundHistory, rec: &RoundRecord) {
    if !rec.test_loss.is_finite() && history.diverged.is_none() {
        history.diverged = Some(Divergence {
            round: rec.round,
            client: None,
            reason: "non-finite test loss".into(),
        });
    }
}

enum Payload<T> {
    Deploy {
        model: Arc<ParameterVector<T>>,
        round: usize,
        reports: bool,
    },
    Update(ClientUpdate<T>),
}

struct Federated<'s, 'a, T> {
    sim: &'s Simulation<'a, T>,
    seed: u64,
    use_public: bool,
    w: ParameterVector<T>,
    queue: UpdateQueue<T>,
    net: SimNet,
    shards: Vec<Shard<T>>,
    busy: Vec<bool>,
    payloads: HashMap<u64, Payload<T>>,
    now: f64,
    reads: ShardReads,
    message_bytes: u64,
}

/// Per-round result: aggregations performed, or why the run stopped.
type RoundStep = std::result::Result<usize, Divergence>;

impl<'s, 'a, T: Scalar> Federated<'s, 'a, T> {
    fn new(sim: &'s Simulation<'a, T>, w: ParameterVector<T>, seed: u64, use_public: bool) -> Result<Self> {
        let cfg = sim.config;
        let clients = sim.plan.clients();
        let latency = if cfg.asynchronous {
            cfg.network
                .latency(clients, derive_seed(seed, Role::Network, 0, 0))?
        } else {
            LatencyModel::instant(clients + 1)
        };
        Ok(Self {
            sim,
            seed,
            use_public,
            w,
            queue: UpdateQueue::new(cfg.tau_for(clients))?,
            net: SimNet::new(latency),
            shards: sim.plan.private.clone(),
            busy: vec![false; clients],
            payloads: HashMap::new(),
            now: 0.0,
            reads: ShardReads::default(),
            message_bytes: model_payload_bytes(sim.spec.param_count()),
        })
    }

    fn public(&self) -> Option<&'s Shard<T>> {
        let public = &self.sim.plan.public;
        (self.use_public && !public.is_empty()).then_some(public)
    }

    fn run(mut self) -> Result<RunOutcome<T>> {
        let sim = self.sim;
        let cfg = sim.config;
        let ids: Vec<usize> = (0..sim.plan.clients()).collect();
        let mut history = RoundHistory {
            initial: sim.metrics(&self.w)?,
            rounds: Vec::new(),
            diverged: None,
        };
        for t in 1..=cfg.rounds {
            if let Some(rows) = sim.arrivals.and_then(|a| a.for_round(t)) {
                for (shard, extra) in self.shards.iter_mut().zip(rows) {
                    *shard = shard.extended(extra);
                }
            }
            if let Err(d) = self.server_phase(t) {
                history.diverged = Some(d);
                break;
            }
            let deploy = select_clients(&ids, cfg.deploy_fraction, t, derive_seed(self.seed, Role::Select, 0, 0))?;
            let report = select_clients(&deploy, cfg.participation, t, derive_seed(self.seed, Role::Select, 0, 1))?;
            let seen = self.net.trace().len();
            let step = if cfg.asynchronous {
                self.async_round(t, &deploy, &report)?
            } else {
                self.sync_round(t, &deploy, &report)?
            };
            let aggregations = match step {
                Ok(n) => n,
                Err(d) => {
                    history.diverged = Some(d);
                    break;
                }
            };
            let delivered = NetTrace {
                events: self.net.trace().events[seen..].to_vec(),
            };
            let comm = comm_totals(&delivered, sim.spec.param_count());
            let mut train_shards: Vec<&Shard<T>> = report.iter().map(|&k| &self.shards[k]).collect();
            if let Some(public) = self.public() {
                train_shards.push(public);
            }
            let train_loss = sim.train_loss(&self.w, &train_shards)?;
            let rec = sim.record(t, &self.w, train_loss, report, aggregations, comm)?;
            note_nan_loss(&mut history, &rec);
            history.rounds.push(rec);
        }
        let trace = self.net.into_trace();
        let comm = comm_totals(&trace, sim.spec.param_count());
        Ok(RunOutcome {
            history,
            params: self.w,
            trace,
            comm,
            reads: self.reads,
        })
    }

    fn server_phase(&mut self, t: usize) -> RoundStep {
        let cfg = self.sim.config;
        let Some(public) = self.public() else {
            return Ok(0);
        };
        if cfg.server_epochs == 0 || (cfg.server_phase == ServerPhase::FirstRoundOnly && t > 1) {
            return Ok(0);
        }
        let seed = derive_seed(self.seed, Role::Central, t as u64, 0);
        let lr = T::lit(cfg.public_lr());
        match central_optimize(&self.w, self.sim.spec, public, cfg.server_epochs, lr, cfg.batch_size, seed) {
            Ok(w) => {
                self.w = w;
                self.reads.public_epochs += cfg.server_epochs;
                Ok(0)
            }
            Err(e) => Err(Divergence {
                round: t,
                client: None,
                reason: e.to_string(),
            }),
        }
    }

    fn train(&mut self, model: &ParameterVector<T>, client: usize, round: usize) -> Result<std::result::Result<ClientUpdate<T>, Divergence>> {
        let cfg = self.sim.config;
        self.reads.private_epochs += cfg.local_epochs;
        let result = local_train(
            model,
            self.sim.spec,
            &self.shards[client],
            cfg.local_epochs,
            T::lit(cfg.local_lr),
            cfg.batch_size,
            derive_seed(self.seed, Role::Local, round as u64, client as u64),
            client,
            round,
        );
        wrap_update(result)
    }

    fn absorb(&mut self, update: ClientUpdate<T>, t: usize) -> Result<std::result::Result<bool, Divergence>> {
        let cfg = self.sim.config;
        match self.queue.enqueue(update) {
            Flush::Pending => Ok(Ok(false)),
            Flush::Ready(batch) => {
                let eta = T::lit(cfg.server_lr.at(t));
                match aggregate(&self.w, &batch, eta, cfg.weighting) {
                    Ok(w) => {
                        self.w = w;
                        Ok(Ok(true))
                    }
                    Err(Error::NonFinite(_)) => Ok(Err(Divergence {
                        round: t,
                        client: None,
                        reason: "non-finite global model after aggregation".into(),
                    })),
                    Err(e) => Err(e),
                }
            }
        }
    }

    fn sync_round(&mut self, t: usize, deploy: &[usize], report: &[usize]) -> Result<RoundStep> {
        let sim = self.sim;
        let cfg = sim.config;
        let lr = T::lit(cfg.local_lr);
        let w = &self.w;
        let shards = &self.shards;
        let seed = self.seed;
        let results: Vec<_> = report
            .par_iter()
            .map(|&k| {
                local_train(
                    w,
                    sim.spec,
                    &shards[k],
                    cfg.local_epochs,
                    lr,
                    cfg.batch_size,
                    derive_seed(seed, Role::Local, t as u64, k as u64),
                    k,
                    t,
                )
            })
            .collect();
        self.reads.private_epochs += report.len() * cfg.local_epochs;
        let mut updates = Vec::with_capacity(results.len());
        for r in results {
            match wrap_update(r)? {
                Ok(u) => updates.push(u),
                Err(d) => return Ok(Err(d)),
            }
        }

        self.now = (t - 1) as f64;
        for &k in deploy {
            self.net.send(SERVER, client_node(k), PayloadTag::Deploy, self.message_bytes, self.now)?;
        }
        let mut by_seq = HashMap::with_capacity(updates.len());
        for u in updates {
            let ev = self.net.send(client_node(u.client_id()), SERVER, PayloadTag::Update, self.message_bytes, self.now)?;
            by_seq.insert(ev.seq, u);
        }
        let mut aggregations = 0;
        while self.net.pending() > 0 {
            let ev = self.net.next_event()?;
            if let Some(u) = by_seq.remove(&ev.seq) {
                match self.absorb(u, t)? {
                    Ok(flushed) => aggregations += usize::from(flushed),
                    Err(d) => return Ok(Err(d)),
                }
            }
        }
        Ok(Ok(aggregations))
    }

    fn async_round(&mut self, t: usize, deploy: &[usize], report: &[usize]) -> Result<RoundStep> {
        let model = Arc::new(self.w.clone());
        for &k in deploy {
            if self.busy[k] {
                continue;
            }
            let ev = self.net.send(SERVER, client_node(k), PayloadTag::Deploy, self.message_bytes, self.now)?;
            self.payloads.insert(
                ev.seq,
                Payload::Deploy {
                    model: Arc::clone(&model),
                    round: t,
                    reports: report.binary_search(&k).is_ok(),
                },
            );
            self.busy[k] = true;
        }
        let mut aggregations = 0;
        while aggregations == 0 {
            let ev = match self.net.next_event() {
                Ok(ev) => ev,
                Err(Error::NetworkExhausted) => break,
                Err(e) => return Err(e),
            };
            self.now = ev.deliver_at;
            match self.payloads.remove(&ev.seq).expect("every message carries a payload") {
                Payload::Deploy { model, round, reports } => {
                    let k = ev.dst - 1;
                    if !reports {
                        self.busy[k] = false;
                        continue;
                    }
                    let update = match self.train(&model, k, round)? {
                        Ok(u) => u,
                        Err(d) => return Ok(Err(d)),
                    };
                    let up = self.net.send(ev.dst, SERVER, PayloadTag::Update, self.message_bytes, self.now)?;
                    self.payloads.insert(up.seq, Payload::Update(update));
                }
                Payload::Update(update) => {
                    self.busy[update.client_id()] = false;
                    match self.absorb(update, t)? {
                        Ok(flushed) => aggregations += usize::from(flushed),
                        Err(d) => return Ok(Err(d)),
                    }
                }
            }
        }
        Ok(Ok(aggregations))
    }
}

fn wrap_update<T>(r: Result<ClientUpdate<T>>) -> Result<std::result::Result<ClientUpdate<T>, Divergence>> {
    match r {
        Ok(u) => Ok(Ok(u)),
        Err(Error::NonFiniteUpdate { round, client }) => Ok(Err(Divergence {
            round,
            client: Some(client),
            reason: format!("non-finite local update from client {client}"),
        })),
        Err(e) => Err(e),
    }
}

fn require_mode(cfg: &FedConfig, mode: Mode) -> Result<()> {
    if cfg.mode != mode {
        return Err(Error::config(
            "mode",
            format!("expected {}, got {}", mode.name(), cfg.mode.name()),
        ));
    }
    Ok(())
}

/// FedAvg rounds on private shards only; the public shard is never read.
pub fn run_fedavg<T: Scalar>(
    config: &FedConfig,
    plan: &PartitionPlan<T>,
    spec: &ModelSpec,
    test: &Shard<T>,
    seed: u64,
) -> Result<RunOutcome<T>> {
    require_mode(config, Mode::FlOnly)?;
    Simulation::new(config, spec, plan, test).run(seed)
}

/// Public-data server phase, then a FedAvg round, every round.
pub fn run_ffm<T: Scalar>(
    config: &FedConfig,
    plan: &PartitionPlan<T>,
    spec: &ModelSpec,
    test: &Shard<T>,
    seed: u64,
) -> Result<RunOutcome<T>> {
    require_mode(config, Mode::Ffm)?;
    Simulation::new(config, spec, plan, test).run(seed)
}

/// SGD on the public shard only, evaluated once per `server_epochs` epochs.
pub fn run_centralized<T: Scalar>(
    config: &FedConfig,
    plan: &PartitionPlan<T>,
    spec: &ModelSpec,
    test: &Shard<T>,
    seed: u64,
) -> Result<RunOutcome<T>> {
    require_mode(config, Mode::Centralized)?;
    Simulation::new(config, spec, plan, test).run(seed)
}
