//! Task automatability classification at desk scale.
//!
//! A from-scratch miniature bidirectional transformer encoder classifies
//! occupational task statements into three automatability classes
//! (substitution, complementarity, negligibility); task-level predictions
//! roll up into occupation- and industry-level automation-risk reports.
//!
//! The crate is organized along the pipeline:
//!
//! - [`corpus`]: ingestion, expert-vote resolution, stratified splits
//! - [`augment`]: paraphrase-based corpus expansion with validation
//! - [`tokenizer`]: subword vocabulary and sequence encoding
//! - [`model`]: the encoder, classification head, and attention extraction
//! - [`train`]: backprop, optimizers, gradient checking, sweeps
//! - [`baselines`]: TF-IDF logistic regression and majority floor
//! - [`eval`]: precision/recall/F1 and confusion matrices
//! - [`aggregate`]: occupation/industry profiles, rankings, term weights
//! - [`config`] + [`pipeline`]: the staged, reproducible CLI pipeline
//!
//! Everything numeric is `f64`, seeded, and deterministic: one config and
//! seed reproduce every artifact byte for byte.

pub mod aggregate;
pub mod augment;
pub mod baselines;
pub mod config;
pub mod corpus;
pub mod eval;
pub mod model;
pub mod pipeline;
pub mod synth;
pub mod tensor;
pub mod text;
pub mod tokenizer;
pub mod train;

pub use corpus::{ClassLabel, Source};
pub use model::{ModelConfig, ModelParams};
pub use tensor::Tensor2D;
