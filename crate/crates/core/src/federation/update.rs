use crate::error::{Error, Result};
use crate::federation::Weighting;
use crate::model::ParameterVector;
use crate::scalar::Scalar;

/// A client's report: `delta = w_t^k - w_{t-1}` and its sample count.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate<T> {
    client_id: usize,
    round: usize,
    n_k: usize,
    delta: ParameterVector<T>,
    origin: Option<Origin<T>>,
}

/// The model a delta was computed from and the resulting local model.
#[derive(Debug, Clone, PartialEq)]
struct Origin<T> {
    base: u64,
    local: ParameterVector<T>,
}

impl<T: Scalar> ClientUpdate<T> {
    pub fn new(client_id: usize, round: usize, n_k: usize, delta: ParameterVector<T>) -> Result<Self> {
        if n_k == 0 {
            return Err(Error::arg("n_k", "must be >= 1"));
        }
        if round == 0 {
            return Err(Error::arg("round", "rounds are numbered from 1"));
        }
        if !delta.is_finite() {
            return Err(Error::NonFiniteUpdate { round, client: client_id });
        }
        Ok(Self {
            client_id,
            round,
            n_k,
            delta,
            origin: None,
        })
    }

    /// Update from a finished local model trained starting at `base`.
    pub fn from_local(
        client_id: usize,
        round: usize,
        n_k: usize,
        base: &ParameterVector<T>,
        local: ParameterVector<T>,
    ) -> Result<Self> {
        let delta = local.delta_from(base)?;
        let mut update = Self::new(client_id, round, n_k, delta)?;
        update.origin = Some(Origin {
            base: base.fingerprint(),
            local,
        });
        Ok(update)
    }

    pub fn client_id(&self) -> usize {
        self.client_id
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn n_k(&self) -> usize {
        self.n_k
    }

    pub fn delta(&self) -> &ParameterVector<T> {
        &self.delta
    }
}

/// `w_t = w_{t-1} + eta * sum_k p_k * delta_k`, with `p_k = n_k / sum n_j`
/// (normalized) or `p_k = n_k` (sample count).
///
/// Terms are summed in ascending `(client_id, round)` order, so the result
/// does not depend on the order of `updates`. A coordinate whose weighted
/// delta sum is zero keeps `w_{t-1}` bit for bit. A single normalized update
/// at `eta = 1` trained from `w_prev` itself yields the client's model
/// exactly, without re-adding its delta.
pub fn aggregate<T: Scalar>(
    w_prev: &ParameterVector<T>,
    updates: &[ClientUpdate<T>],
    eta: T,
    weighting: Weighting,
) -> Result<ParameterVector<T>> {
    if updates.is_empty() {
        return Err(Error::Empty("update list"));
    }
    if updates.iter().any(|u| !u.delta.same_layout(w_prev)) {
        return Err(Error::LayoutMismatch("aggregate delta"));
    }
    if !eta.is_finite() {
        return Err(Error::arg("eta", "must be finite"));
    }

    if let [only] = updates {
        if weighting == Weighting::Normalized && eta == T::one() {
            if let Some(origin) = &only.origin {
                if origin.base == w_prev.fingerprint() {
                    return Ok(origin.local.clone());
                }
            }
        }
    }

    let mut ordered: Vec<&ClientUpdate<T>> = updates.iter().collect();
    ordered.sort_by_key(|u| (u.client_id, u.round));
    let total: usize = ordered.iter().map(|u| u.n_k).sum();
    let weights: Vec<T> = ordered
        .iter()
        .map(|u| match weighting {
            Weighting::Normalized => T::from_count(u.n_k) / T::from_count(total),
            Weighting::SampleCount => T::from_count(u.n_k),
        })
        .collect();

    let mut next = w_prev.clone();
    let values = next.values_mut();
    for (i, w) in values.iter_mut().enumerate() {
        let mut acc = T::zero();
        for (u, &p) in ordered.iter().zip(&weights) {
            acc += p * u.delta.values()[i];
        }
        if acc != T::zero() {
            *w += eta * acc;
        }
    }
    if !next.is_finite() {
        return Err(Error::NonFinite("aggregate"));
    }
    Ok(next)
}
