//! Supervised clustering with Dirichlet process mixtures.
//!
//! Training items come with gold partitions; the sampler learns shared
//! reference types from them and clusters the test items. Evaluation
//! metrics, baselines and dataset I/O live alongside.

pub mod baselines;
pub mod data;
pub mod dp;
pub mod error;
pub mod gaussian;
pub mod metrics;
pub mod partition;
pub mod sampler;

pub use data::{Dataset, Item, Split};
pub use dp::GammaPrior;
pub use error::{Error, Result};
pub use gaussian::{Publication, ReferenceType};
pub use metrics::MetricReport;
pub use partition::Partition;
pub use sampler::{SampleRecord, SamplerConfig, Variant};
