//! Deterministic simulator for federated foundation-model optimization.
//!
//! A server holding a public shard and `C` clients holding non-IID private
//! shards train small differentiable classifiers under three regimes:
//! centralized (public data only), FedAvg (private data only) and FFM
//! (public-data server optimization interleaved with FedAvg rounds).
//!
//! Numeric code is generic over [`Scalar`]; the aliases below fix the
//! precision used by the harness.

pub mod data;
pub mod error;
pub mod federation;
pub mod model;
pub mod scalar;
pub mod seed;
pub mod simnet;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Params = model::ParameterVector<f64>;
pub type Params32 = model::ParameterVector<f32>;
pub type Data = data::Dataset<f64>;
pub type Data32 = data::Dataset<f32>;
pub type DataShard = data::Shard<f64>;
pub type Plan = data::PartitionPlan<f64>;
pub type Update = federation::ClientUpdate<f64>;
pub type Outcome = federation::RunOutcome<f64>;
