//! Public/private splitting and non-IID client partitioners.
//!
//! Every partitioner returns shards whose indices are sorted ascending,
//! pairwise disjoint and jointly cover the input rows.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Shard};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed::{self, sub_seed};

/// How the private remainder is split across clients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case", deny_unknown_fields)]
pub enum Scheme {
    Iid,
    /// Sort by label, cut into `clients * shards_per_client` chunks and deal
    /// `shards_per_client` chunks to each client.
    LabelShard { shards_per_client: usize },
    /// Per-label Dirichlet(`alpha`) client proportions.
    Dirichlet { alpha: f64 },
}

/// The public shard held by the server plus one private shard per client.
#[derive(Debug, Clone)]
pub struct PartitionPlan<T> {
    pub public: Shard<T>,
    pub private: Vec<Shard<T>>,
    pub scheme: Scheme,
    pub seed: u64,
}

impl<T: Scalar> PartitionPlan<T> {
    pub fn clients(&self) -> usize {
        self.private.len()
    }

    /// Same plan with the public shard emptied (the FL-only view).
    pub fn without_public(&self) -> Self {
        Self {
            public: Shard::empty(Arc::clone(self.public.dataset())),
            ..self.clone()
        }
    }
}

fn sorted_shard<T: Scalar>(src: &Shard<T>, mut rows: Vec<usize>) -> Shard<T> {
    rows.sort_unstable();
    Shard::from_trusted(Arc::clone(src.dataset()), rows)
}

/// Rows of `shard` grouped by class, each group in shard order.
fn rows_by_class<T: Scalar>(shard: &Shard<T>) -> Vec<Vec<usize>> {
    let mut groups = vec![Vec::new(); shard.classes()];
    for &i in shard.indices() {
        groups[shard.dataset().label(i)].push(i);
    }
    groups
}

/// Splits off `size` rows of `shard`, stratified by label (largest-remainder
/// quotas, ties to the lowest class). Returns `(taken, rest)`.
pub fn take_stratified<T: Scalar>(shard: &Shard<T>, size: usize, seed: u64) -> Result<(Shard<T>, Shard<T>)> {
    let n = shard.len();
    if size > n {
        return Err(Error::Partition(format!("cannot take {size} of {n} rows")));
    }
    let groups = rows_by_class(shard);
    let mut quota: Vec<usize> = groups.iter().map(|g| g.len() * size / n.max(1)).collect();
    let mut short = size - quota.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.sort_by_key(|&c| (std::cmp::Reverse(groups[c].len() * size % n.max(1)), c));
    for &c in order.iter().cycle().take(groups.len() * 2) {
        if short == 0 {
            break;
        }
        if quota[c] < groups[c].len() {
            quota[c] += 1;
            short -= 1;
        }
    }
    let mut taken = Vec::with_capacity(size);
    let mut rest = Vec::with_capacity(n - size);
    for (c, mut rows) in groups.into_iter().enumerate() {
        rows.shuffle(&mut seed::rng(sub_seed(seed, c as u64)));
        let (a, b) = rows.split_at(quota[c]);
        taken.extend_from_slice(a);
        rest.extend_from_slice(b);
    }
    Ok((sorted_shard(shard, taken), sorted_shard(shard, rest)))
}

/// Seeded shuffle cut into `parts` contiguous slices whose sizes differ by
/// at most one.
pub fn partition_iid<T: Scalar>(shard: &Shard<T>, parts: usize, seed: u64) -> Result<Vec<Shard<T>>> {
    if parts == 0 {
        return Err(Error::arg("parts", "must be >= 1"));
    }
    if shard.len() < parts {
        return Err(Error::Partition(format!("{} rows cannot fill {parts} parts", shard.len())));
    }
    let mut rows = shard.indices().to_vec();
    rows.shuffle(&mut seed::rng(seed));
    let (base, extra) = (rows.len() / parts, rows.len() % parts);
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for p in 0..parts {
        let len = base + usize::from(p < extra);
        out.push(sorted_shard(shard, rows[start..start + len].to_vec()));
        start += len;
    }
    Ok(out)
}

/// Classic sort-by-label shard assignment.
pub fn partition_label_shards<T: Scalar>(
    shard: &Shard<T>,
    parts: usize,
    shards_per_part: usize,
    seed: u64,
) -> Result<Vec<Shard<T>>> {
    if parts == 0 || shards_per_part == 0 {
        return Err(Error::arg("parts/shards_per_part", "must be >= 1"));
    }
    let chunks = parts * shards_per_part;
    if chunks > shard.len() {
        return Err(Error::Partition(format!(
            "{chunks} label shards requested from {} rows",
            shard.len()
        )));
    }
    let mut sorted = Vec::with_capacity(shard.len());
    for (c, mut rows) in rows_by_class(shard).into_iter().enumerate() {
        rows.shuffle(&mut seed::rng(sub_seed(seed, c as u64)));
        sorted.extend(rows);
    }
    let (base, extra) = (sorted.len() / chunks, sorted.len() % chunks);
    let mut bounds = Vec::with_capacity(chunks);
    let mut start = 0;
    for k in 0..chunks {
        let len = base + usize::from(k < extra);
        bounds.push(start..start + len);
        start += len;
    }
    let mut perm: Vec<usize> = (0..chunks).collect();
    perm.shuffle(&mut seed::rng(sub_seed(seed, u64::MAX)));
    Ok(perm
        .chunks(shards_per_part)
        .map(|ids| {
            let rows = ids.iter().flat_map(|&k| sorted[bounds[k].clone()].iter().copied()).collect();
            sorted_shard(shard, rows)
        })
        .collect())
}

/// Label-skewed split: for every label, client proportions are drawn from
/// Dirichlet(`alpha`) and the label's shuffled rows are cut at the rounded
/// cumulative proportions. An empty part afterwards receives one row from
/// the largest part (ties to the lowest part index).
pub fn partition_dirichlet<T: Scalar>(
    shard: &Shard<T>,
    parts: usize,
    alpha: f64,
    seed: u64,
) -> Result<Vec<Shard<T>>> {
    if parts == 0 {
        return Err(Error::arg("parts", "must be >= 1"));
    }
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::arg("alpha", format!("must be finite and > 0, got {alpha}")));
    }
    if shard.len() < parts {
        return Err(Error::Partition(format!("{} rows cannot fill {parts} parts", shard.len())));
    }
    let gamma = Gamma::new(alpha, 1.0).map_err(|e| Error::arg("alpha", e.to_string()))?;
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); parts];
    for (c, mut rows) in rows_by_class(shard).into_iter().enumerate() {
        if rows.is_empty() {
            continue;
        }
        let mut rng = seed::rng(sub_seed(seed, c as u64));
        rows.shuffle(&mut rng);
        let mut props: Vec<f64> = (0..parts).map(|_| gamma.sample(&mut rng)).collect();
        let total: f64 = props.iter().sum();
        if total > 0.0 && total.is_finite() {
            props.iter_mut().for_each(|p| *p /= total);
        } else {
            // every draw underflowed; the whole label goes to one part
            let pick = rng.random_range(0..parts);
            props = (0..parts).map(|p| if p == pick { 1.0 } else { 0.0 }).collect();
        }
        let n = rows.len();
        let mut cum = 0.0;
        let mut start = 0;
        for (p, prop) in props.iter().enumerate() {
            cum += prop;
            let end = if p + 1 == parts {
                n
            } else {
                ((cum * n as f64).round() as usize).clamp(start, n)
            };
            out[p].extend_from_slice(&rows[start..end]);
            start = end;
        }
    }
    for p in 0..parts {
        if out[p].is_empty() {
            let donor = (0..parts)
                .max_by_key(|&q| (out[q].len(), std::cmp::Reverse(q)))
                .expect("parts >= 1");
            out[donor].sort_unstable();
            let row = out[donor].pop().expect("donor holds >= 2 rows");
            out[p].push(row);
        }
    }
    Ok(out.into_iter().map(|rows| sorted_shard(shard, rows)).collect())
}

/// Splits `dataset` into a stratified-IID public shard of
/// `N / (clients + 1)` rows and `clients` private shards built from the
/// remainder by `scheme`.
pub fn split_public_private<T: Scalar>(
    dataset: Arc<Dataset<T>>,
    clients: usize,
    scheme: Scheme,
    seed: u64,
) -> Result<PartitionPlan<T>> {
    if clients == 0 {
        return Err(Error::arg("clients", "must be >= 1"));
    }
    let n = dataset.len();
    if n < clients + 1 {
        return Err(Error::Partition(format!(
            "{n} rows cannot supply {} shards",
            clients + 1
        )));
    }
    let all = Shard::all(dataset);
    let (public, rest) = take_stratified(&all, n / (clients + 1), sub_seed(seed, 0))?;
    let private_seed = sub_seed(seed, 1);
    let private = match scheme {
        Scheme::Iid => partition_iid(&rest, clients, private_seed)?,
        Scheme::LabelShard { shards_per_client } => {
            partition_label_shards(&rest, clients, shards_per_client, private_seed)?
        }
        Scheme::Dirichlet { alpha } => partition_dirichlet(&rest, clients, alpha, private_seed)?,
    };
    Ok(PartitionPlan {
        public,
        private,
        scheme,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::label_histogram;

    fn ds(labels: Vec<usize>, classes: usize) -> Arc<Dataset<f64>> {
        let features = (0..labels.len()).map(|i| i as f64).collect();
        Arc::new(Dataset::new(features, 1, labels, classes).unwrap())
    }

    #[test]
    fn iid_sizes_are_forced() {
        let s = Shard::all(ds((0..10).map(|i| i % 2).collect(), 2));
        let sizes: Vec<usize> = partition_iid(&s, 3, 1).unwrap().iter().map(Shard::len).collect();
        assert_eq!(sizes, vec![4, 3, 3]);
        let one = partition_iid(&s, 1, 1).unwrap();
        assert_eq!(one[0].indices(), s.indices());
        assert!(partition_iid(&s, 11, 1).is_err());
    }

    #[test]
    fn label_shards_single_label_parts() {
        let s = Shard::all(ds((0..20).map(|i| i % 2).collect(), 2));
        for seed in 0..5 {
            for part in partition_label_shards(&s, 2, 1, seed).unwrap() {
                let h = label_histogram(&part);
                assert_eq!(h.iter().filter(|&&c| c > 0).count(), 1);
            }
        }
        let one = partition_label_shards(&s, 1, 3, 0).unwrap();
        assert_eq!(one[0].indices(), s.indices());
        assert!(partition_label_shards(&s, 7, 3, 0).is_err());
    }

    #[test]
    fn split_equal_sizing() {
        let d = ds((0..1100).map(|i| i % 4).collect(), 4);
        let plan = split_public_private(d, 10, Scheme::Iid, 3).unwrap();
        assert_eq!(plan.public.len(), 100);
        assert_eq!(label_histogram(&plan.public), vec![25; 4]);
        assert!(plan.private.iter().all(|s| s.len() == 100));
    }

    #[test]
    fn split_single_client_covers() {
        let d = ds((0..7).map(|i| i % 2).collect(), 2);
        let plan = split_public_private(Arc::clone(&d), 1, Scheme::Iid, 0).unwrap();
        let mut all: Vec<usize> = plan.public.indices().to_vec();
        all.extend(plan.private[0].indices());
        all.sort_unstable();
        assert_eq!(all, (0..7).collect::<Vec<_>>());
        assert!(split_public_private(ds(vec![0, 1], 2), 2, Scheme::Iid, 0).is_err());
    }

    #[test]
    fn dirichlet_repairs_empty_parts() {
        // 5 rows, 5 parts with tiny alpha: most parts start empty
        let s = Shard::all(ds(vec![0, 0, 0, 0, 0], 2));
        for seed in 0..20 {
            let parts = partition_dirichlet(&s, 5, 0.01, seed).unwrap();
            assert!(parts.iter().all(|p| p.len() == 1));
        }
    }

    #[test]
    fn dirichlet_rejects_bad_alpha() {
        let s = Shard::all(ds(vec![0, 1], 2));
        assert!(partition_dirichlet(&s, 1, 0.0, 0).is_err());
        assert!(partition_dirichlet(&s, 1, f64::NAN, 0).is_err());
    }

    #[test]
    fn scheme_serde_shape() {
        let s: Scheme = serde_json::from_str(r#"{"scheme":"dirichlet","alpha":0.5}"#).unwrap();
        assert_eq!(s, Scheme::Dirichlet { alpha: 0.5 });
        assert!(serde_json::from_str::<Scheme>(r#"{"scheme":"dirichlet","alpha":1,"x":1}"#).is_err());
    }
}
