//! Turns multi-speaker conversation transcripts into an instruction
//! pre-training dataset built from reading-comprehension tasks.
//!
//! The pipeline runs in stages:
//!
//! 1. [`corpus`]: ingest transcripts, apply quality gates, render them in
//!    diversified textual formats.
//! 2. [`selection`]: score transcripts by token-type entropy and keep a subset.
//! 3. [`anonymize`]: detect sensitive spans and mask or noise them.
//! 4. [`promptgen`]: render category-tagged meta prompts around a transcript.
//! 5. [`llmclient`]: send prompts to a completion provider (HTTP or mock).
//! 6. [`parsing`]: pull task/answer pairs out of raw JSON outputs.
//! 7. [`mixer`]: assemble single- and multi-task pre-training records.
//!
//! [`evalkit`] scores downstream model outputs and [`pipeline`] wires the
//! stages into resumable, sharded batch runs.
//!
//! Numeric kernels (entropy, ROUGE, F1, dataset statistics) are generic over
//! [`Real`]; the aliases below fix them to `f64` for everyday use.

pub mod anonymize;
pub mod corpus;
pub mod evalkit;
pub mod llmclient;
pub mod mixer;
pub mod parsing;
pub mod pipeline;
pub mod promptgen;
pub mod scalar;
pub mod selection;
pub mod text;

pub use scalar::Real;

/// Precision / recall / F1 triple in `f64`.
pub type Metric = evalkit::MetricScore<f64>;
/// Precision / recall / F1 triple in `f32`.
pub type Metric32 = evalkit::MetricScore<f32>;
/// Token-type entropy measurement in `f64`.
pub type Entropy = selection::TokenEntropy<f64>;
/// Per-class and averaged classification scores in `f64`.
pub type ClassScores = evalkit::ClassificationReport<f64>;
/// Dataset statistics in `f64`.
pub type Stats = mixer::DatasetStats<f64>;
