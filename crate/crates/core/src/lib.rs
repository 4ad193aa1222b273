//! Decoding-algorithm laboratory.
//!
//! Local decoders (temperature, top-k, top-p), selective sampling from the
//! globally tempered sequence distribution, and quality–diversity
//! measurements, all runnable against small enumerable language models so
//! that every sampler can be checked against an exact table.
//!
//! Probability math is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`, which is what the sweep and verification drivers use.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod decoders;
pub mod error;
pub mod frontier;
pub mod lm;
pub mod oracle;
pub mod ratings;
pub mod rng;
pub mod scalar;
pub mod selective;

pub use decoders::DecoderConfig;
pub use error::{Error, Result};
pub use lm::{Context, LanguageModel, TokenId, TokenSequence, Vocabulary};
pub use scalar::Scalar;
pub use selective::SelectiveConfig;

pub type Distribution = lm::ConditionalDistribution<f64>;
pub type Distribution32 = lm::ConditionalDistribution<f32>;
pub type Table = oracle::DistributionTable<f64>;
pub type Table32 = oracle::DistributionTable<f32>;
pub type Tree = lm::TreeModel<f64>;
pub type Tree32 = lm::TreeModel<f32>;
pub type NGram = lm::NGramModel<f64>;
pub type NGram32 = lm::NGramModel<f32>;
pub type FileModel = lm::FileModel<f64>;
pub type Remote = lm::RemoteModel<f64>;
pub type Sample = decoders::DecodedSample<f64>;
