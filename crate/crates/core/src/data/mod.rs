//! Datasets, shards, the public/private split, non-IID partitioners and the
//! k-shot sampler.

mod blobs;
mod csv_io;
mod dataset;
mod kshot;
mod partition;

pub use blobs::{class_direction, gen_blobs};
pub use csv_io::{load_csv, write_csv};
pub use dataset::{label_histogram, Dataset, Shard};
pub use kshot::sample_kshot;
pub use partition::{
    partition_dirichlet, partition_iid, partition_label_shards, split_public_private, take_stratified,
    PartitionPlan, Scheme,
};
