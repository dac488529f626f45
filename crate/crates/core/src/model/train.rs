use rand::seq::SliceRandom;

use super::net::loss_and_grad;
use super::params::ParameterVector;
use super::spec::ModelSpec;
use crate::data::Shard;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed;

/// One pass of minibatch SGD over `shard` in a seeded shuffled order.
///
/// The final minibatch may be short. Only trainable segments move. A zero
/// learning rate is accepted and leaves the parameters untouched.
pub fn sgd_epoch<T: Scalar>(
    spec: &ModelSpec,
    params: &ParameterVector<T>,
    shard: &Shard<T>,
    lr: T,
    batch_size: usize,
    seed: u64,
) -> Result<ParameterVector<T>> {
    if shard.is_empty() {
        return Err(Error::Empty("training shard"));
    }
    if !(lr >= T::zero()) || !lr.is_finite() {
        return Err(Error::arg("lr", format!("must be finite and non-negative, got {lr}")));
    }
    if batch_size == 0 {
        return Err(Error::arg("batch_size", "must be >= 1"));
    }
    spec.check_params(params)?;

    let mut order = shard.indices().to_vec();
    order.shuffle(&mut seed::rng(seed));

    let trainable: Vec<_> = spec
        .layout()
        .segments()
        .iter()
        .filter(|s| s.trainable)
        .map(|s| s.range())
        .collect();
    let mut w = params.clone();
    for chunk in order.chunks(batch_size) {
        let batch = shard.dataset().batch(chunk)?;
        let (_, grad) = loss_and_grad(spec, &w, &batch)?;
        let g = grad.values();
        let values = w.values_mut();
        for range in &trainable {
            for i in range.clone() {
                values[i] -= lr * g[i];
            }
        }
    }
    if !w.is_finite() {
        return Err(Error::NonFinite("sgd_epoch"));
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::data::Dataset;
    use crate::model::{init_params, predict, ModelKind};

    fn shard(rows: Vec<f64>, width: usize, labels: Vec<usize>, classes: usize) -> Shard<f64> {
        Shard::all(Arc::new(Dataset::new(rows, width, labels, classes).unwrap()))
    }

    #[test]
    fn single_example_is_one_gradient_step() {
        let spec = ModelSpec::mlp(2, 3, 2).unwrap();
        let p = init_params::<f64>(&spec, 9);
        let s = shard(vec![0.7, -1.2], 2, vec![1], 2);
        let lr = 0.37;
        let out = sgd_epoch(&spec, &p, &s, lr, 1, 123).unwrap();
        let (_, g) = loss_and_grad(&spec, &p, &s.batch().unwrap()).unwrap();
        let expect: Vec<f64> = p.values().iter().zip(g.values()).map(|(w, g)| w - lr * g).collect();
        assert_eq!(out.values(), &expect[..]);
    }

    #[test]
    fn deterministic_in_seed() {
        let spec = ModelSpec::logistic(2, 3).unwrap();
        let p = init_params::<f64>(&spec, 1);
        let s = shard(
            vec![1.0, 0.0, 0.0, 1.0, -1.0, 0.5, 0.2, 0.2, 3.0, -1.0],
            2,
            vec![0, 1, 2, 0, 1],
            3,
        );
        let a = sgd_epoch(&spec, &p, &s, 0.1, 2, 5).unwrap();
        assert_eq!(a, sgd_epoch(&spec, &p, &s, 0.1, 2, 5).unwrap());
        assert_ne!(a, sgd_epoch(&spec, &p, &s, 0.1, 2, 6).unwrap());
    }

    #[test]
    fn separable_pair_reaches_full_accuracy() {
        let spec = ModelSpec::logistic(2, 2).unwrap();
        let s = shard(vec![1.0, 1.0, -1.0, -1.0], 2, vec![1, 0], 2);
        let mut p = init_params::<f64>(&spec, 3);
        for e in 0..500 {
            p = sgd_epoch(&spec, &p, &s, 0.5, 2, e).unwrap();
        }
        let ds = s.dataset();
        let hits = (0..2).filter(|&i| predict(&spec, &p, ds.row(i)).unwrap() == ds.label(i)).count();
        assert_eq!(hits, 2);
    }

    #[test]
    fn frozen_segments_do_not_move() {
        let spec = ModelSpec::adapter(ModelKind::Mlp { inputs: 2, hidden: 4, classes: 2 }, 2).unwrap();
        let p0 = init_params::<f64>(&spec, 11);
        let s = shard(vec![1.0, 2.0, -1.0, 0.5, 0.0, -2.0], 2, vec![0, 1, 1], 2);
        let mut p = p0.clone();
        for e in 0..20 {
            p = sgd_epoch(&spec, &p, &s, 0.3, 2, e).unwrap();
        }
        for seg in spec.layout().segments() {
            let before = &p0.values()[seg.range()];
            let after = &p.values()[seg.range()];
            if seg.trainable {
                assert_ne!(before, after);
            } else {
                assert!(before.iter().zip(after).all(|(a, b)| a.to_bits() == b.to_bits()));
            }
        }
    }

    #[test]
    fn argument_errors() {
        let spec = ModelSpec::logistic(1, 2).unwrap();
        let p = init_params::<f64>(&spec, 0);
        let s = shard(vec![1.0], 1, vec![0], 2);
        assert!(sgd_epoch(&spec, &p, &Shard::empty(Arc::clone(s.dataset())), 0.1, 1, 0).is_err());
        assert!(sgd_epoch(&spec, &p, &s, -0.1, 1, 0).is_err());
        assert!(sgd_epoch(&spec, &p, &s, 0.1, 0, 0).is_err());
        assert_eq!(sgd_epoch(&spec, &p, &s, 0.0, 1, 0).unwrap(), p);
    }

    #[test]
    fn divergence_is_reported() {
        let spec = ModelSpec::logistic(1, 2).unwrap();
        let p = init_params::<f64>(&spec, 0);
        let s = shard(vec![1e300], 1, vec![1], 2);
        let r = sgd_epoch(&spec, &p, &s, 1e300, 1, 0);
        assert!(matches!(r, Err(Error::NonFinite(_))), "{r:?}");
    }
}
