//! The autoencoded topic model.
//!
//! An encoder maps a document's word counts to the mean and log-variance of
//! a diagonal Gaussian over topic logits. A sample from it, pushed through a
//! softmax, gives the document's topic proportions θ. The decoder turns θ
//! into a distribution over words, either as a mixture of per-topic
//! multinomials (LDA) or as a product of experts (ProdLDA). Per-token topic
//! assignments are integrated out and never represented.
//!
//! Training maximizes the evidence lower bound
//! `Σ_w n_w log p(w | θ) − KL(q(θ | w) ‖ p(θ))`, where the prior is the
//! Laplace approximation of a Dirichlet in the softmax basis.

mod io;
mod model;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::NnError;
use crate::prior::{laplace_approximation, DirichletPrior, LogisticNormalParams, PriorError};

pub use io::{read_blocks, write_blocks, BlockFile, MODEL_MAGIC, MODEL_VERSION};
pub use model::{
    sample_theta, Decoder, ElboOutput, EncoderNet, Gradients, LossOptions, LossOutput, Noise,
    RunningUpdate, TopicModel,
};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Prior(#[from] PriorError),
    #[error("non-finite {term} (document {doc} of the batch)")]
    NonFinite { term: &'static str, doc: usize },
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecoderKind {
    /// `p = θᵀ softmax(β)`: a mixture of topic multinomials.
    Lda,
    /// `p = softmax(θᵀ β)`: a weighted product of experts.
    ProdLda,
}

impl DecoderKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DecoderKind::Lda => "lda",
            DecoderKind::ProdLda => "prodlda",
        }
    }

    fn code(self) -> u8 {
        match self {
            DecoderKind::Lda => 0,
            DecoderKind::ProdLda => 1,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DecoderKind::Lda),
            1 => Some(DecoderKind::ProdLda),
            _ => None,
        }
    }
}

impl std::str::FromStr for DecoderKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "lda" => Ok(DecoderKind::Lda),
            "prodlda" => Ok(DecoderKind::ProdLda),
            other => Err(format!("unknown decoder `{other}` (expected lda or prodlda)")),
        }
    }
}

impl std::fmt::Display for DecoderKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PriorKind {
    /// Laplace approximation of a symmetric Dirichlet.
    Dirichlet { alpha: f64 },
    /// Zero mean, unit variance.
    Gaussian,
}

impl PriorKind {
    pub fn params(&self, topics: usize) -> Result<LogisticNormalParams, PriorError> {
        match *self {
            PriorKind::Dirichlet { alpha } => Ok(laplace_approximation(
                &DirichletPrior::symmetric(topics, alpha)?,
            )),
            PriorKind::Gaussian => Ok(LogisticNormalParams::standard(topics)),
        }
    }
}

impl Default for PriorKind {
    fn default() -> Self {
        PriorKind::Dirichlet { alpha: 0.02 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub topics: usize,
    pub vocab_size: usize,
    /// Widths of the softplus trunk layers.
    pub hidden: Vec<usize>,
    pub decoder: DecoderKind,
    pub prior: PriorKind,
    /// Batch normalization on both encoder heads and on the decoder.
    pub batch_norm: bool,
    /// Dropout rate applied to θ during training.
    pub dropout: f64,
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

impl ModelConfig {
    pub fn new(topics: usize, vocab_size: usize, decoder: DecoderKind) -> Self {
        Self {
            topics,
            vocab_size,
            hidden: vec![100, 100],
            decoder,
            prior: PriorKind::default(),
            batch_norm: true,
            dropout: 0.2,
            bn_momentum: crate::nn::DEFAULT_MOMENTUM,
            bn_eps: crate::nn::DEFAULT_EPS,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |m: String| Err(ModelError::Config(m));
        if self.topics < 2 {
            return fail(format!("need at least 2 topics, got {}", self.topics));
        }
        if self.vocab_size < 2 {
            return fail(format!("need a vocabulary of at least 2, got {}", self.vocab_size));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return fail(format!("hidden widths must be positive, got {:?}", self.hidden));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if !(0.0..1.0).contains(&self.bn_momentum) || !(self.bn_eps.is_finite() && self.bn_eps > 0.0) {
            return fail("batch-norm momentum must be in [0, 1) and eps positive".into());
        }
        self.prior.params(self.topics)?;
        Ok(())
    }
}
