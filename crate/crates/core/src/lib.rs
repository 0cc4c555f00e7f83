//! Desk-scale dataset distillation.
//!
//! The pipeline learns a compact latent space with an autoencoder, clusters
//! per-category latents into prototypes with streaming k-means, synthesizes a
//! small dataset by partial label-conditioned diffusion from those
//! prototypes, and trains student classifiers on it against a teacher's soft
//! labels. Everything runs on a minimal f64 tensor engine with reverse-mode
//! differentiation; every stage is deterministic under a fixed seed.

pub mod autoencoder;
pub mod dataio;
pub mod diffusion;
pub mod distiller;
pub mod error;
pub mod evalkit;
pub mod gradcheck;
pub mod numerics;
pub mod prototypes;
pub mod reference;
pub mod ttm;

pub use error::{Error, Result};
