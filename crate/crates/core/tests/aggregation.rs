use std::sync::Arc;

use fedsim_core::federation::{aggregate, ClientUpdate, Flush, UpdateQueue, Weighting};
use fedsim_core::model::{Layout, ParameterVector};
use fedsim_core::simnet::{comm_totals, LatencyModel, PayloadTag, SimNet};
use proptest::prelude::*;

fn layout(n: usize) -> Arc<Layout> {
    let mut l = Layout::new();
    l.push("w", vec![n], true);
    Arc::new(l)
}

fn pv(l: &Arc<Layout>, v: Vec<f64>) -> ParameterVector<f64> {
    ParameterVector::from_values(Arc::clone(l), v).unwrap()
}

/// Plain weighted mean, accumulated in input order.
fn oracle(w: &[f64], updates: &[(Vec<f64>, usize)], eta: f64) -> Vec<f64> {
    let total: f64 = updates.iter().map(|u| u.1 as f64).sum();
    (0..w.len())
        .map(|i| w[i] + eta * updates.iter().map(|(d, n)| *n as f64 / total * d[i]).sum::<f64>())
        .collect()
}

fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<(Vec<f64>, usize)>, f64)> {
    (1usize..8, 1usize..8).prop_flat_map(|(dim, k)| {
        (
            prop::collection::vec(-10.0f64..10.0, dim),
            prop::collection::vec((prop::collection::vec(-1.0f64..1.0, dim), 1usize..500), k),
            0.01f64..2.0,
        )
    })
}

fn build(l: &Arc<Layout>, raw: &[(Vec<f64>, usize)]) -> Vec<ClientUpdate<f64>> {
    raw.iter()
        .enumerate()
        .map(|(k, (d, n))| ClientUpdate::new(k, 1, *n, pv(l, d.clone())).unwrap())
        .collect()
}

proptest! {
    #[test]
    fn matches_weighted_mean((w, raw, eta) in instance()) {
        let l = layout(w.len());
        let got = aggregate(&pv(&l, w.clone()), &build(&l, &raw), eta, Weighting::Normalized).unwrap();
        for (g, o) in got.values().iter().zip(oracle(&w, &raw, eta)) {
            prop_assert!((g - o).abs() <= 1e-12, "{} vs {}", g, o);
        }
    }

    #[test]
    fn permutation_invariant((w, raw, eta) in instance(), rot in 0usize..8) {
        let l = layout(w.len());
        let prev = pv(&l, w);
        let ups = build(&l, &raw);
        let mut shuffled = ups.clone();
        shuffled.reverse();
        let len = shuffled.len();
        shuffled.rotate_left(rot % len);
        let a = aggregate(&prev, &ups, eta, Weighting::Normalized).unwrap();
        let b = aggregate(&prev, &shuffled, eta, Weighting::Normalized).unwrap();
        prop_assert_eq!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn identical_deltas_scale_to_one((w, raw, _eta) in instance()) {
        let l = layout(w.len());
        let delta = raw[0].0.clone();
        let same: Vec<(Vec<f64>, usize)> = raw.iter().map(|(_, n)| (delta.clone(), *n)).collect();
        let got = aggregate(&pv(&l, w.clone()), &build(&l, &same), 1.0, Weighting::Normalized).unwrap();
        for i in 0..w.len() {
            prop_assert!((got.values()[i] - (w[i] + delta[i])).abs() <= 1e-12);
        }
    }

    #[test]
    fn normalized_weights_sum_to_one(ns in prop::collection::vec(1usize..10_000, 1..20)) {
        // a unit delta on one coordinate exposes each weight
        let l = layout(1);
        let ups: Vec<_> = ns
            .iter()
            .enumerate()
            .map(|(k, &n)| ClientUpdate::new(k, 1, n, pv(&l, vec![1.0])).unwrap())
            .collect();
        let got = aggregate(&pv(&l, vec![0.0]), &ups, 1.0, Weighting::Normalized).unwrap();
        prop_assert!((got.values()[0] - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn queue_flush_counts(tau in 1usize..=10, count in 0usize..=100) {
        let l = layout(1);
        let mut q = UpdateQueue::new(tau).unwrap();
        let mut flushes = 0;
        let mut flushed = Vec::new();
        for k in 0..count {
            match q.enqueue(ClientUpdate::new(k, 1, 1, pv(&l, vec![0.0])).unwrap()) {
                Flush::Pending => {}
                Flush::Ready(batch) => {
                    prop_assert_eq!(batch.len(), tau);
                    flushed.extend(batch.iter().map(|u| u.client_id()));
                    flushes += 1;
                }
            }
            prop_assert!(q.len() < tau);
        }
        prop_assert_eq!(flushes, count / tau);
        prop_assert_eq!(q.len(), count % tau);
        prop_assert_eq!(flushed, (0..flushes * tau).collect::<Vec<_>>());
    }

    #[test]
    fn delivery_follows_sort_oracle(
        sends in prop::collection::vec((0usize..4, 0.0f64..10.0), 1..60),
        base in prop::collection::vec(0.0f64..3.0, 4),
        jitter in 0.0f64..2.0,
        seed in any::<u64>(),
    ) {
        let latency = LatencyModel::new(base, vec![jitter; 4], seed).unwrap();
        let mut net = SimNet::new(latency.clone());
        let mut scheduled = Vec::new();
        for &(src, now) in &sends {
            let ev = net.send(src, (src + 1) % 4, PayloadTag::Update, 100, now).unwrap();
            prop_assert!(ev.deliver_at >= now);
            scheduled.push(ev);
        }
        let mut want = scheduled.clone();
        want.sort_by(|a, b| a.deliver_at.total_cmp(&b.deliver_at).then(a.seq.cmp(&b.seq)));
        let mut got = Vec::new();
        while net.pending() > 0 {
            got.push(net.next_event().unwrap());
        }
        prop_assert!(net.next_event().is_err());
        prop_assert_eq!(&got, &want);
        prop_assert_eq!(&net.trace().events, &want);

        let mut replay = SimNet::new(latency);
        for &(src, now) in &sends {
            replay.send(src, (src + 1) % 4, PayloadTag::Update, 100, now).unwrap();
        }
        while replay.pending() > 0 {
            replay.next_event().unwrap();
        }
        prop_assert_eq!(replay.trace(), net.trace());
    }
}

#[test]
fn worked_example_is_exact() {
    let l = layout(2);
    let ups = [
        ClientUpdate::new(0, 1, 1, pv(&l, vec![1.0, 0.0])).unwrap(),
        ClientUpdate::new(1, 1, 3, pv(&l, vec![0.0, 1.0])).unwrap(),
    ];
    let got = aggregate(&pv(&l, vec![0.0, 0.0]), &ups, 1.0, Weighting::Normalized).unwrap();
    assert_eq!(got.values(), &[0.25, 0.75]);
}

#[test]
fn sample_count_weighting_uses_raw_counts() {
    let l = layout(2);
    let ups = [
        ClientUpdate::new(0, 1, 1, pv(&l, vec![1.0, 0.0])).unwrap(),
        ClientUpdate::new(1, 1, 3, pv(&l, vec![0.0, 1.0])).unwrap(),
    ];
    let got = aggregate(&pv(&l, vec![0.0, 0.0]), &ups, 0.5, Weighting::SampleCount).unwrap();
    assert_eq!(got.values(), &[0.5, 1.5]);
}

#[test]
fn synchronous_round_traffic() {
    let clients = 10;
    let mut net = SimNet::new(LatencyModel::instant(clients + 1));
    for k in 0..clients {
        net.send(0, k + 1, PayloadTag::Deploy, 144, 0.0).unwrap();
    }
    for k in 0..clients {
        net.send(k + 1, 0, PayloadTag::Update, 144, 0.0).unwrap();
    }
    while net.pending() > 0 {
        net.next_event().unwrap();
    }
    let totals = comm_totals(net.trace(), 10);
    assert_eq!(totals.messages, 20);
    assert_eq!(totals.bytes, 20 * 144);
}

#[test]
fn fixed_delay_arithmetic() {
    let mut net = SimNet::new(LatencyModel::uniform(2, 2.0, 0.0, 9).unwrap());
    let ev = net.send(0, 1, PayloadTag::Deploy, 0, 1.0).unwrap();
    assert_eq!(ev.deliver_at, 3.0);
    assert!(net.send(0, 5, PayloadTag::Deploy, 0, 1.0).is_err());
}
