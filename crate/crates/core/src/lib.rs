//! Autoencoded variational inference for topic models.
//!
//! The crate provides the pieces needed to fit LDA and ProdLDA with an
//! inference network: corpus ingestion, a small neural-network kernel,
//! the logistic-normal prior, the model and its ELBO, a training loop, a
//! collapsed Gibbs baseline, and evaluation metrics.

pub mod avitm;
pub mod corpus;
pub mod eval;
pub mod gibbs;
pub mod nn;
pub mod prior;
pub mod rng;
pub mod trainer;
