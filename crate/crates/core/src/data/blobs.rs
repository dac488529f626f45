use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed;

const DIRECTION_SEED: u64 = 0x5EED_B10B;

/// Unit direction of class `class` in `dim` dimensions. Independent of any
/// data seed, so train and test draws share centers.
///
/// Uses the standard basis while `classes <= dim`; otherwise fixed
/// pseudo-random Gaussian directions.
pub fn class_direction(class: usize, classes: usize, dim: usize) -> Vec<f64> {
    if classes <= dim {
        let mut u = vec![0.0; dim];
        u[class] = 1.0;
        return u;
    }
    let mut rng = seed::rng(seed::sub_seed(DIRECTION_SEED, class as u64));
    let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

/// Isotropic Gaussian blobs: class `c` centered at `separation * u_c`.
/// Rows interleave classes (`row i` has label `i % classes`).
pub fn gen_blobs<T: Scalar>(
    classes: usize,
    per_class: usize,
    dim: usize,
    separation: f64,
    noise_sd: f64,
    seed: u64,
) -> Result<Dataset<T>> {
    if classes < 2 {
        return Err(Error::arg("classes", "must be >= 2"));
    }
    if per_class < 1 || dim < 1 {
        return Err(Error::arg("per_class/dim", "must be >= 1"));
    }
    if !(noise_sd >= 0.0) || !noise_sd.is_finite() || !separation.is_finite() {
        return Err(Error::arg("noise_sd", "must be finite and >= 0"));
    }
    let centers: Vec<Vec<f64>> = (0..classes)
        .map(|c| {
            class_direction(c, classes, dim)
                .into_iter()
                .map(|u| separation * u)
                .collect()
        })
        .collect();
    let mut rng = seed::rng(seed);
    let n = classes * per_class;
    let mut features = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % classes;
        for &mu in &centers[c] {
            let z: f64 = rng.sample(StandardNormal);
            features.push(T::lit(mu + noise_sd * z));
        }
        labels.push(c);
    }
    Dataset::new(features, dim, labels, classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_rows_sit_on_centers() {
        let ds = gen_blobs::<f64>(3, 4, 5, 2.5, 0.0, 1).unwrap();
        for i in 0..ds.len() {
            let c = ds.label(i);
            let center: Vec<f64> = class_direction(c, 3, 5).iter().map(|u| 2.5 * u).collect();
            assert_eq!(ds.row(i), &center[..]);
        }
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let a = gen_blobs::<f64>(2, 10, 3, 1.0, 1.0, 4).unwrap();
        assert_eq!(a, gen_blobs::<f64>(2, 10, 3, 1.0, 1.0, 4).unwrap());
        assert_ne!(a, gen_blobs::<f64>(2, 10, 3, 1.0, 1.0, 5).unwrap());
    }

    #[test]
    fn directions_are_unit_when_classes_exceed_dim() {
        for c in 0..5 {
            let u = class_direction(c, 5, 2);
            assert!((u.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_arguments() {
        assert!(gen_blobs::<f64>(1, 1, 1, 1.0, 0.0, 0).is_err());
        assert!(gen_blobs::<f64>(2, 0, 1, 1.0, 0.0, 0).is_err());
        assert!(gen_blobs::<f64>(2, 1, 1, 1.0, -1.0, 0).is_err());
    }
}
