use serde::{Deserialize, Serialize};

/// Serializes non-finite values as `null` and reads `null` back as NaN, so
/// diverged runs survive a JSON round trip.
pub mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    #[serde(with = "nan_as_null")]
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    /// Fingerprint of the global parameters after the round, as 16 hex digits.
    pub params_hash: String,
    #[serde(with = "nan_as_null")]
    pub train_loss: f64,
    pub test_accuracy: f64,
    #[serde(with = "nan_as_null")]
    pub test_loss: f64,
    /// Clients that reported this round (`S_t`), ascending.
    pub participants: Vec<usize>,
    /// Aggregations performed this round.
    pub aggregations: usize,
    pub messages: u64,
    pub bytes: u64,
}

/// Why a run stopped early.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    pub round: usize,
    pub client: Option<usize>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundHistory {
    /// Test metrics of the initial global model.
    pub initial: Metrics,
    pub rounds: Vec<RoundRecord>,
    pub diverged: Option<Divergence>,
}

impl RoundHistory {
    /// Metrics of the last recorded round, or the initial ones.
    pub fn final_metrics(&self) -> Metrics {
        self.rounds.last().map_or(self.initial, |r| Metrics {
            accuracy: r.test_accuracy,
            loss: r.test_loss,
        })
    }

    pub fn accuracies(&self) -> Vec<f64> {
        self.rounds.iter().map(|r| r.test_accuracy).collect()
    }
}
