//! Nucleus-size-series fingerprinting of text.
//!
//! While a language model auto-completes a text, top-p sampling computes a
//! nucleus at every position; the series of nucleus sizes identifies the
//! text. The vulnerable top-p filter removes tokens in a loop whose trip
//! count is `vocab - nucleus size`, which a cache side channel can count.
//!
//! Modules, bottom up:
//! - [`model`]: vocabulary, interpolated n-gram model, distribution and
//!   nucleus-size interchange files
//! - [`sampler`]: top-p filtering (vulnerable and constant-iteration) and
//!   the overhead benchmark
//! - [`fingerprint`]: NSS generation, variability, similarity, distances
//! - [`stats`]: log-normal and normal fits, `U(N)`, `d(N)`, `tau`
//! - [`sidechannel`]: simulated Flush+Reload traces, reconstruction, noise
//!   filtering
//! - [`matcher`]: open-world matching and the evaluation harness
//! - [`corpus`]: post corpora, per-author aggregation, synthetic language
//! - [`config`]: pipeline configuration
//!
//! Numeric kernels are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below name the common instantiations.

pub mod config;
pub mod corpus;
pub mod error;
pub mod fingerprint;
pub mod matcher;
pub mod model;
pub mod sampler;
pub mod scalar;
pub mod sidechannel;
pub mod stats;

pub use config::PipelineConfig;
pub use error::{Error, Result};
pub use fingerprint::{Nss, VariabilityReport};
pub use matcher::{EvaluationReport, MatchModels, MatchResult, Verdict};
pub use model::{Distribution, NgramModel, Sequence, Vocabulary};
pub use sampler::{FilterOutcome, Variant};
pub use scalar::Scalar;
pub use sidechannel::{ChannelConfig, RawTrace, Trace};
pub use stats::{ErrorModel, UniquenessModel};

pub type UniquenessModelF32 = stats::UniquenessModel<f32>;
pub type UniquenessModelF64 = stats::UniquenessModel<f64>;
pub type ErrorModelF32 = stats::ErrorModel<f32>;
pub type ErrorModelF64 = stats::ErrorModel<f64>;
pub type VariabilityReportF32 = fingerprint::VariabilityReport<f32>;
pub type VariabilityReportF64 = fingerprint::VariabilityReport<f64>;
pub type FilterPlanF32 = sampler::FilterPlan<f32>;
pub type FilterPlanF64 = sampler::FilterPlan<f64>;
