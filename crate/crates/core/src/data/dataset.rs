use std::collections::HashSet;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::Batch;
use crate::scalar::Scalar;

/// Labelled feature matrix, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    features: Vec<T>,
    width: usize,
    labels: Vec<usize>,
    classes: usize,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(features: Vec<T>, width: usize, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        if width == 0 || features.len() != width * labels.len() {
            return Err(Error::Dimension {
                context: "dataset features",
                expected: width * labels.len(),
                actual: features.len(),
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset features"));
        }
        Ok(Self {
            features,
            width,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.features[i * self.width..(i + 1) * self.width]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[T] {
        &self.features
    }

    /// Copies the given rows into a batch.
    pub fn batch(&self, rows: &[usize]) -> Result<Batch<T>> {
        let mut features = Vec::with_capacity(rows.len() * self.width);
        for &r in rows {
            features.extend_from_slice(self.row(r));
        }
        Batch::new(features, self.width, rows.iter().map(|&r| self.labels[r]).collect())
    }
}

/// An index view into a shared dataset: the public shard, one client's
/// private shard, a k-shot subset or a test split.
#[derive(Debug, Clone)]
pub struct Shard<T> {
    dataset: Arc<Dataset<T>>,
    indices: Vec<usize>,
}

impl<T> PartialEq for Shard<T> {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.dataset, &other.dataset) && self.indices == other.indices
    }
}

impl<T: Scalar> Shard<T> {
    /// Rejects duplicate or out-of-range indices.
    pub fn new(dataset: Arc<Dataset<T>>, indices: Vec<usize>) -> Result<Self> {
        let n = dataset.len();
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::arg("indices", format!("row {bad} out of range for {n} rows")));
        }
        let unique: HashSet<usize> = indices.iter().copied().collect();
        if unique.len() != indices.len() {
            return Err(Error::arg("indices", "duplicate row index"));
        }
        Ok(Self { dataset, indices })
    }

    pub(crate) fn from_trusted(dataset: Arc<Dataset<T>>, indices: Vec<usize>) -> Self {
        debug_assert!(indices.iter().all(|&i| i < dataset.len()));
        Self { dataset, indices }
    }

    /// Every row of `dataset`, in order.
    pub fn all(dataset: Arc<Dataset<T>>) -> Self {
        let indices = (0..dataset.len()).collect();
        Self { dataset, indices }
    }

    pub fn empty(dataset: Arc<Dataset<T>>) -> Self {
        Self {
            dataset,
            indices: Vec::new(),
        }
    }

    pub fn dataset(&self) -> &Arc<Dataset<T>> {
        &self.dataset
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.dataset.classes()
    }

    pub fn label_of(&self, pos: usize) -> usize {
        self.dataset.label(self.indices[pos])
    }

    /// Whole shard as one batch.
    pub fn batch(&self) -> Result<Batch<T>> {
        self.dataset.batch(&self.indices)
    }

    /// A shard over the same dataset with additional rows appended; rows
    /// already present are skipped.
    pub fn extended(&self, extra: &[usize]) -> Self {
        let have: HashSet<usize> = self.indices.iter().copied().collect();
        let mut indices = self.indices.clone();
        indices.extend(extra.iter().copied().filter(|i| !have.contains(i)));
        indices.sort_unstable();
        indices.dedup();
        Self::from_trusted(Arc::clone(&self.dataset), indices)
    }
}

/// Exact per-class counts; sums to `shard.len()`.
pub fn label_histogram<T: Scalar>(shard: &Shard<T>) -> Vec<usize> {
    let mut counts = vec![0; shard.classes()];
    for &i in shard.indices() {
        counts[shard.dataset().label(i)] += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds() -> Arc<Dataset<f64>> {
        Arc::new(Dataset::new(vec![0.0, 1.0, 2.0, 3.0, 4.0], 1, vec![0, 2, 2, 1, 2], 3).unwrap())
    }

    #[test]
    fn histogram_cases() {
        let d = ds();
        assert_eq!(label_histogram(&Shard::empty(Arc::clone(&d))), vec![0, 0, 0]);
        assert_eq!(label_histogram(&Shard::new(Arc::clone(&d), vec![1, 4]).unwrap()), vec![0, 0, 2]);
        assert_eq!(label_histogram(&Shard::all(d)), vec![1, 1, 3]);
    }

    #[test]
    fn shard_rejects_bad_indices() {
        assert!(Shard::new(ds(), vec![0, 5]).is_err());
        assert!(Shard::new(ds(), vec![1, 1]).is_err());
    }

    #[test]
    fn dataset_validation() {
        assert!(Dataset::<f64>::new(vec![], 1, vec![], 2).is_err());
        assert!(Dataset::new(vec![1.0], 1, vec![2], 2).is_err());
        assert!(Dataset::new(vec![f64::INFINITY], 1, vec![0], 2).is_err());
        assert!(Dataset::new(vec![1.0, 2.0], 1, vec![0], 2).is_err());
    }
}
