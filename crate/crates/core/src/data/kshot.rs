use std::sync::Arc;

use rand::seq::SliceRandom;

use crate::data::Shard;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed::{self, sub_seed};

/// `k` rows per class drawn without replacement (every row of a class that
/// has fewer than `k`). The result is sorted ascending.
pub fn sample_kshot<T: Scalar>(shard: &Shard<T>, k: usize, seed: u64) -> Result<Shard<T>> {
    if shard.is_empty() {
        return Err(Error::Empty("k-shot source shard"));
    }
    if k == 0 {
        return Err(Error::arg("k", "must be >= 1"));
    }
    let mut groups = vec![Vec::new(); shard.classes()];
    for &i in shard.indices() {
        groups[shard.dataset().label(i)].push(i);
    }
    let mut picked = Vec::new();
    for (c, mut rows) in groups.into_iter().enumerate() {
        if rows.len() > k {
            rows.shuffle(&mut seed::rng(sub_seed(seed, c as u64)));
            rows.truncate(k);
        }
        picked.extend(rows);
    }
    picked.sort_unstable();
    Ok(Shard::from_trusted(Arc::clone(shard.dataset()), picked))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{label_histogram, Dataset};

    fn shard(per_class: &[usize]) -> Shard<f64> {
        let labels: Vec<usize> = per_class
            .iter()
            .enumerate()
            .flat_map(|(c, &n)| std::iter::repeat_n(c, n))
            .collect();
        let features = (0..labels.len()).map(|i| i as f64).collect();
        let classes = per_class.len().max(2);
        Shard::all(Arc::new(Dataset::new(features, 1, labels, classes).unwrap()))
    }

    #[test]
    fn thirty_two_shot_two_classes() {
        let s = shard(&[40, 50]);
        let k = sample_kshot(&s, 32, 1).unwrap();
        assert_eq!(k.len(), 64);
        assert_eq!(label_histogram(&k), vec![32, 32]);
    }

    #[test]
    fn saturation_returns_whole_shard_sorted() {
        let s = shard(&[3, 5]);
        let rev = Shard::new(Arc::clone(s.dataset()), s.indices().iter().rev().copied().collect()).unwrap();
        let k = sample_kshot(&rev, 5, 9).unwrap();
        assert_eq!(k.indices(), s.indices());
    }

    #[test]
    fn deterministic_and_idempotent() {
        let s = shard(&[20, 7, 13]);
        let a = sample_kshot(&s, 8, 4).unwrap();
        assert_eq!(a, sample_kshot(&s, 8, 4).unwrap());
        assert_eq!(label_histogram(&a), vec![8, 7, 8]);
        assert_eq!(sample_kshot(&a, 8, 4).unwrap(), a);
    }

    #[test]
    fn empty_and_zero_k_rejected() {
        let s = shard(&[2, 2]);
        assert!(sample_kshot(&Shard::empty(Arc::clone(s.dataset())), 2, 0).is_err());
        assert!(sample_kshot(&s, 0, 0).is_err());
    }
}
