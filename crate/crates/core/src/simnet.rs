//! Deterministic discrete-event message layer.
//!
//! Node 0 is the server; client `k` is node `k + 1`. A message sent at
//! virtual time `now` from `src` is delivered at
//! `now + max(0, base(src) + U(-jitter(src), +jitter(src)))`, the uniform
//! draw keyed by `(seed, seq)`. Delivery order is `(deliver_at, seq)`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub type NodeId = usize;

pub const SERVER: NodeId = 0;

pub fn client_node(client: usize) -> NodeId {
    client + 1
}

/// Header bytes carried by every model message.
pub const HEADER_BYTES: u64 = 64;

/// Wire size of a message carrying `param_count` 64-bit parameters.
pub fn model_payload_bytes(param_count: usize) -> u64 {
    8 * param_count as u64 + HEADER_BYTES
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadTag {
    /// Server sends the global model to a client.
    Deploy,
    /// Client returns its model update.
    Update,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub deliver_at: f64,
    pub seq: u64,
    pub src: NodeId,
    pub dst: NodeId,
    pub tag: PayloadTag,
    pub size_bytes: u64,
    #[serde(skip)]
    pub sent_at: f64,
}

/// Per-node base delay and jitter half-width, in virtual seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyModel {
    base: Vec<f64>,
    jitter: Vec<f64>,
    seed: u64,
}

impl LatencyModel {
    pub fn new(base: Vec<f64>, jitter: Vec<f64>, seed: u64) -> Result<Self> {
        if base.len() != jitter.len() || base.is_empty() {
            return Err(Error::arg("latency", "base and jitter need one entry per node"));
        }
        if base.iter().chain(&jitter).any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::arg("latency", "delays must be finite and >= 0"));
        }
        Ok(Self { base, jitter, seed })
    }

    /// Same delay and jitter on every one of `nodes` nodes.
    pub fn uniform(nodes: usize, base: f64, jitter: f64, seed: u64) -> Result<Self> {
        Self::new(vec![base; nodes], vec![jitter; nodes], seed)
    }

    /// Zero delay everywhere: delivery order equals send order.
    pub fn instant(nodes: usize) -> Self {
        Self {
            base: vec![0.0; nodes],
            jitter: vec![0.0; nodes],
            seed: 0,
        }
    }

    pub fn nodes(&self) -> usize {
        self.base.len()
    }

    fn delay(&self, src: NodeId, seq: u64) -> f64 {
        let j = self.jitter[src];
        let u = if j > 0.0 {
            seed::rng(seed::sub_seed(self.seed, seq)).random_range(-j..=j)
        } else {
            0.0
        };
        (self.base[src] + u).max(0.0)
    }
}

struct Pending(Event);

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .deliver_at
            .total_cmp(&self.0.deliver_at)
            .then_with(|| other.0.seq.cmp(&self.0.seq))
    }
}

/// Delivered events in delivery order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NetTrace {
    pub events: Vec<Event>,
}

impl NetTrace {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// One JSON object per line, fields in declaration order.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("event serializes"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io = |source| Error::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut f = std::fs::File::create(path).map_err(io)?;
        f.write_all(self.to_jsonl().as_bytes()).map_err(io)
    }

    pub fn extend(&mut self, other: NetTrace) {
        self.events.extend(other.events);
    }
}

/// Pending messages plus the trace of everything delivered so far.
pub struct SimNet {
    latency: LatencyModel,
    queue: BinaryHeap<Pending>,
    next_seq: u64,
    trace: NetTrace,
}

impl SimNet {
    pub fn new(latency: LatencyModel) -> Self {
        Self {
            latency,
            queue: BinaryHeap::new(),
            next_seq: 0,
            trace: NetTrace::default(),
        }
    }

    /// Schedules a message; returns the event as enqueued.
    pub fn send(&mut self, src: NodeId, dst: NodeId, tag: PayloadTag, size_bytes: u64, now: f64) -> Result<Event> {
        for node in [src, dst] {
            if node >= self.latency.nodes() {
                return Err(Error::UnknownNode(node));
            }
        }
        if !(now >= 0.0) || !now.is_finite() {
            return Err(Error::arg("now", format!("must be finite and >= 0, got {now}")));
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        let event = Event {
            deliver_at: now + self.latency.delay(src, seq),
            seq,
            src,
            dst,
            tag,
            size_bytes,
            sent_at: now,
        };
        self.queue.push(Pending(event.clone()));
        Ok(event)
    }

    /// Removes and returns the earliest pending event.
    pub fn next_event(&mut self) -> Result<Event> {
        let Pending(event) = self.queue.pop().ok_or(Error::NetworkExhausted)?;
        self.trace.events.push(event.clone());
        Ok(event)
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn trace(&self) -> &NetTrace {
        &self.trace
    }

    pub fn into_trace(self) -> NetTrace {
        self.trace
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommTotals {
    pub messages: u64,
    pub bytes: u64,
}

impl std::ops::AddAssign for CommTotals {
    fn add_assign(&mut self, rhs: Self) {
        self.messages += rhs.messages;
        self.bytes += rhs.bytes;
    }
}

/// Message count and bytes of a trace; every model message is sized
/// `8 * param_count + 64`.
pub fn comm_totals(trace: &NetTrace, param_count: usize) -> CommTotals {
    let per = model_payload_bytes(param_count);
    let messages = trace.events.len() as u64;
    let bytes = trace
        .events
        .iter()
        .map(|e| match e.tag {
            PayloadTag::Deploy | PayloadTag::Update => per,
        })
        .sum();
    CommTotals { messages, bytes }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_jitter_delay_is_forced() {
        let mut net = SimNet::new(LatencyModel::uniform(3, 2.0, 0.0, 1).unwrap());
        let e = net.send(SERVER, 1, PayloadTag::Deploy, 10, 1.0).unwrap();
        assert_eq!(e.deliver_at, 3.0);
    }

    #[test]
    fn same_instant_sends_keep_order() {
        let mut net = SimNet::new(LatencyModel::instant(3));
        let a = net.send(SERVER, 1, PayloadTag::Deploy, 0, 0.0).unwrap();
        let b = net.send(SERVER, 2, PayloadTag::Deploy, 0, 0.0).unwrap();
        assert!(a.seq < b.seq);
        assert_eq!(net.next_event().unwrap().seq, a.seq);
        assert_eq!(net.next_event().unwrap().seq, b.seq);
        assert!(matches!(net.next_event(), Err(Error::NetworkExhausted)));
    }

    #[test]
    fn earlier_delivery_first() {
        let lat = LatencyModel::new(vec![0.0, 3.0, 1.0], vec![0.0; 3], 0).unwrap();
        let mut net = SimNet::new(lat);
        net.send(1, SERVER, PayloadTag::Update, 0, 0.0).unwrap();
        net.send(2, SERVER, PayloadTag::Update, 0, 0.0).unwrap();
        assert_eq!(net.next_event().unwrap().deliver_at, 1.0);
        assert_eq!(net.next_event().unwrap().deliver_at, 3.0);
    }

    #[test]
    fn unknown_node_rejected() {
        let mut net = SimNet::new(LatencyModel::instant(2));
        assert!(matches!(
            net.send(SERVER, 2, PayloadTag::Deploy, 0, 0.0),
            Err(Error::UnknownNode(2))
        ));
    }

    #[test]
    fn totals() {
        assert_eq!(comm_totals(&NetTrace::default(), 10), CommTotals::default());
        let mut net = SimNet::new(LatencyModel::instant(2));
        net.send(SERVER, 1, PayloadTag::Deploy, model_payload_bytes(10), 0.0).unwrap();
        net.next_event().unwrap();
        assert_eq!(
            comm_totals(net.trace(), 10),
            CommTotals {
                messages: 1,
                bytes: 144
            }
        );
    }

    #[test]
    fn jsonl_field_order() {
        let mut net = SimNet::new(LatencyModel::instant(2));
        net.send(1, SERVER, PayloadTag::Update, 144, 0.5).unwrap();
        net.next_event().unwrap();
        assert_eq!(
            net.trace().to_jsonl(),
            "{\"deliver_at\":0.5,\"seq\":0,\"src\":1,\"dst\":0,\"tag\":\"update\",\"size_bytes\":144}\n"
        );
    }
}
