//! Disentanglement toolkit for vector embeddings.
//!
//! Trains beta-VAE / TC-VAE models on vector observations (speaker-embedding
//! style data, real or synthetic), quantifies disentanglement with
//! unsupervised (EER on reconstructions, WSEPIN) and supervised (DCI)
//! metrics, and ranks candidate proxy factors of variation by
//! linear-discriminant importance.
//!
//! The `examples/` directory has one runnable example per capability; the
//! `dvae` binary exposes the same pipeline as `synth`, `train`, `sweep`,
//! `eval`, and `rank` subcommands.

pub mod data;
pub mod error;
pub mod lda;
pub mod linalg;
pub mod metrics;
pub mod nn;
pub mod vae;

pub use error::{Error, Result};
