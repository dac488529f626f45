use rand::seq::SliceRandom;

use crate::data::Shard;
use crate::error::{Error, Result};
use crate::federation::{ClientUpdate, Metrics};
use crate::model::{argmax, row_loss, sgd_epoch, ModelSpec, ParameterVector};
use crate::scalar::Scalar;
use crate::seed::{self, sub_seed};

/// Client `client_id` runs `epochs` SGD epochs from `global` on its shard.
/// Epoch `e` shuffles with `sub_seed(seed, e)`.
#[allow(clippy::too_many_arguments)]
pub fn local_train<T: Scalar>(
    global: &ParameterVector<T>,
    spec: &ModelSpec,
    shard: &Shard<T>,
    epochs: usize,
    lr: T,
    batch_size: usize,
    seed: u64,
    client_id: usize,
    round: usize,
) -> Result<ClientUpdate<T>> {
    if shard.is_empty() {
        return Err(Error::Empty("client shard"));
    }
    if epochs == 0 {
        return Err(Error::arg("epochs", "must be >= 1"));
    }
    let mut w = global.clone();
    for e in 0..epochs {
        w = sgd_epoch(spec, &w, shard, lr, batch_size, sub_seed(seed, e as u64)).map_err(|err| match err {
            Error::NonFinite(_) => Error::NonFiniteUpdate { round, client: client_id },
            other => other,
        })?;
    }
    ClientUpdate::from_local(client_id, round, shard.len(), global, w)
}

/// `ceil(fraction * |ids|)` ids drawn uniformly without replacement,
/// returned ascending. Deterministic in `(seed, round)`.
pub fn select_clients(ids: &[usize], fraction: f64, round: usize, seed: u64) -> Result<Vec<usize>> {
    if ids.is_empty() {
        return Err(Error::Empty("client list"));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::arg("fraction", format!("must lie in (0, 1], got {fraction}")));
    }
    let count = super::config::selection_size(ids.len(), fraction);
    let mut pool = ids.to_vec();
    if count < pool.len() {
        pool.shuffle(&mut seed::rng(sub_seed(seed, round as u64)));
        pool.truncate(count);
    }
    pool.sort_unstable();
    Ok(pool)
}

/// Server-side SGD on the public shard; identity when the shard is empty or
/// `epochs` is zero.
pub fn central_optimize<T: Scalar>(
    w: &ParameterVector<T>,
    spec: &ModelSpec,
    public: &Shard<T>,
    epochs: usize,
    lr: T,
    batch_size: usize,
    seed: u64,
) -> Result<ParameterVector<T>> {
    let mut out = w.clone();
    if public.is_empty() {
        return Ok(out);
    }
    for e in 0..epochs {
        out = sgd_epoch(spec, &out, public, lr, batch_size, sub_seed(seed, e as u64))?;
    }
    Ok(out)
}

/// Accuracy (ties to the lowest class) and mean cross-entropy.
pub fn evaluate<T: Scalar>(spec: &ModelSpec, params: &ParameterVector<T>, test: &Shard<T>) -> Result<Metrics> {
    if test.is_empty() {
        return Err(Error::Empty("test shard"));
    }
    let batch = test.batch()?;
    let mut hits = 0usize;
    let mut total = 0.0f64;
    for i in 0..batch.rows() {
        let scores = crate::model::forward(spec, params, batch.row(i))?;
        let label = batch.labels()[i];
        if label >= scores.len() {
            return Err(Error::LabelOutOfRange {
                label,
                classes: scores.len(),
            });
        }
        if argmax(&scores) == label {
            hits += 1;
        }
        total += row_loss(&scores, label).as_f64();
    }
    let n = batch.rows() as f64;
    Ok(Metrics {
        accuracy: hits as f64 / n,
        loss: total / n,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::data::Dataset;
    use crate::model::{init_params, loss_and_grad};

    fn shard() -> Shard<f64> {
        Shard::all(Arc::new(
            Dataset::new(vec![1.0, 0.0, 0.0, 1.0, -1.0, -1.0, 2.0, 0.5], 2, vec![0, 1, 1, 0], 2).unwrap(),
        ))
    }

    #[test]
    fn zero_lr_gives_zero_delta() {
        let spec = ModelSpec::mlp(2, 3, 2).unwrap();
        let w = init_params::<f64>(&spec, 1);
        let up = local_train(&w, &spec, &shard(), 3, 0.0, 2, 9, 0, 1).unwrap();
        assert!(up.delta().values().iter().all(|&d| d == 0.0));
        assert_eq!(up.n_k(), 4);
    }

    #[test]
    fn single_step_delta() {
        let spec = ModelSpec::logistic(2, 2).unwrap();
        let w = init_params::<f64>(&spec, 2);
        let s = Shard::new(Arc::clone(shard().dataset()), vec![2]).unwrap();
        let up = local_train(&w, &spec, &s, 1, 0.5, 1, 3, 7, 2).unwrap();
        let (_, g) = loss_and_grad(&spec, &w, &s.batch().unwrap()).unwrap();
        for ((d, g), w0) in up.delta().values().iter().zip(g.values()).zip(w.values()) {
            assert_eq!(*d, (w0 - 0.5 * g) - w0);
        }
        assert_eq!((up.client_id(), up.round(), up.n_k()), (7, 2, 1));
    }

    #[test]
    fn selection_rules() {
        let ids: Vec<usize> = (0..10).collect();
        assert_eq!(select_clients(&ids, 1.0, 3, 0).unwrap(), ids);
        let half = select_clients(&ids, 0.5, 1, 0).unwrap();
        assert_eq!(half.len(), 5);
        assert!(half.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(half, select_clients(&ids, 0.5, 1, 0).unwrap());
        assert!(select_clients(&[], 0.5, 1, 0).is_err());
        assert!(select_clients(&ids, 0.0, 1, 0).is_err());
    }

    #[test]
    fn central_identity_cases() {
        let spec = ModelSpec::logistic(2, 2).unwrap();
        let w = init_params::<f64>(&spec, 2);
        let s = shard();
        assert_eq!(central_optimize(&w, &spec, &s, 0, 0.1, 2, 0).unwrap(), w);
        let empty = Shard::empty(Arc::clone(s.dataset()));
        assert_eq!(central_optimize(&w, &spec, &empty, 4, 0.1, 2, 0).unwrap(), w);
        let one = central_optimize(&w, &spec, &s, 1, 0.1, 2, 5).unwrap();
        assert_eq!(one, sgd_epoch(&spec, &w, &s, 0.1, 2, sub_seed(5, 0)).unwrap());
    }

    #[test]
    fn evaluate_zero_model_on_balanced_set() {
        let spec = ModelSpec::logistic(2, 2).unwrap();
        let w = ParameterVector::zeros(Arc::clone(spec.layout()));
        let m = evaluate(&spec, &w, &shard()).unwrap();
        assert_eq!(m.accuracy, 0.5);
        assert_eq!(m.loss, 2f64.ln());
        let empty = Shard::empty(Arc::clone(shard().dataset()));
        assert!(evaluate(&spec, &w, &empty).is_err());
    }
}
