//! Collapsed Gibbs sampling for LDA.
//!
//! θ and β are integrated out; the chain state is one topic per token plus
//! the count tables those assignments imply.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::nn::Tensor2;
use crate::rng::{self, StreamRng};

pub const DEFAULT_ALPHA: f64 = 0.02;
pub const DEFAULT_ETA: f64 = 0.01;

#[derive(Debug, Error, PartialEq)]
pub enum GibbsError {
    #[error("need at least 2 topics, got {0}")]
    TooFewTopics(usize),
    #[error("hyperparameters must be positive and finite (alpha {alpha}, eta {eta})")]
    Hyperparameters { alpha: f64, eta: f64 },
    #[error("assignments do not match the corpus: {0}")]
    Assignments(String),
    #[error("count tables disagree with assignments: {0}")]
    Audit(String),
    #[error("need at least one retained sample")]
    NoSamples,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GibbsConfig {
    pub topics: usize,
    pub alpha: f64,
    pub eta: f64,
    pub seed: u64,
}

impl GibbsConfig {
    pub fn new(topics: usize) -> Self {
        Self {
            topics,
            alpha: DEFAULT_ALPHA,
            eta: DEFAULT_ETA,
            seed: 0,
        }
    }
}

/// Chain state. `n_dk`, `n_kw` and `n_k` are always the exact marginals of
/// `z`.
#[derive(Debug, Clone)]
pub struct GibbsState {
    topics: usize,
    vocab_size: usize,
    alpha: f64,
    eta: f64,
    words: Vec<Vec<usize>>,
    z: Vec<Vec<usize>>,
    n_dk: Vec<Vec<u32>>,
    n_kw: Vec<Vec<u32>>,
    n_k: Vec<u32>,
    rng: StreamRng,
    sweeps: u64,
}

impl GibbsState {
    /// Uniformly random initial assignments.
    pub fn init(corpus: &Corpus, config: &GibbsConfig) -> Result<Self, GibbsError> {
        let mut rng = rng::stream(config.seed, "gibbs.chain");
        let k = config.topics;
        let z = corpus
            .docs()
            .iter()
            .map(|d| (0..d.len()).map(|_| rng.random_range(0..k.max(1))).collect())
            .collect();
        Self::build(corpus, config, z, rng)
    }

    pub fn from_assignments(
        corpus: &Corpus,
        config: &GibbsConfig,
        z: Vec<Vec<usize>>,
    ) -> Result<Self, GibbsError> {
        Self::build(corpus, config, z, rng::stream(config.seed, "gibbs.chain"))
    }

    fn build(
        corpus: &Corpus,
        config: &GibbsConfig,
        z: Vec<Vec<usize>>,
        rng: StreamRng,
    ) -> Result<Self, GibbsError> {
        let k = config.topics;
        if k < 2 {
            return Err(GibbsError::TooFewTopics(k));
        }
        let (alpha, eta) = (config.alpha, config.eta);
        if !(alpha > 0.0 && alpha.is_finite() && eta > 0.0 && eta.is_finite()) {
            return Err(GibbsError::Hyperparameters { alpha, eta });
        }
        let words: Vec<Vec<usize>> = corpus.docs().iter().map(|d| d.tokens()).collect();
        if z.len() != words.len() {
            return Err(GibbsError::Assignments(format!(
                "{} documents, {} assignment rows",
                words.len(),
                z.len()
            )));
        }
        let v = corpus.vocab_size();
        let mut n_dk = vec![vec![0u32; k]; words.len()];
        let mut n_kw = vec![vec![0u32; v]; k];
        let mut n_k = vec![0u32; k];
        for (d, (ws, zs)) in words.iter().zip(&z).enumerate() {
            if ws.len() != zs.len() {
                return Err(GibbsError::Assignments(format!(
                    "document {d} has {} tokens, {} assignments",
                    ws.len(),
                    zs.len()
                )));
            }
            for (&w, &t) in ws.iter().zip(zs) {
                if t >= k {
                    return Err(GibbsError::Assignments(format!("topic {t} out of range in document {d}")));
                }
                n_dk[d][t] += 1;
                n_kw[t][w] += 1;
                n_k[t] += 1;
            }
        }
        Ok(Self {
            topics: k,
            vocab_size: v,
            alpha,
            eta,
            words,
            z,
            n_dk,
            n_kw,
            n_k,
            rng,
            sweeps: 0,
        })
    }

    pub fn topics(&self) -> usize {
        self.topics
    }

    pub fn assignments(&self) -> &[Vec<usize>] {
        &self.z
    }

    pub fn sweeps(&self) -> u64 {
        self.sweeps
    }

    pub fn doc_topic_counts(&self) -> &[Vec<u32>] {
        &self.n_dk
    }

    pub fn topic_word_counts(&self) -> &[Vec<u32>] {
        &self.n_kw
    }

    pub fn topic_totals(&self) -> &[u32] {
        &self.n_k
    }

    /// Unnormalized conditional weights for token `(doc, pos)`, its own
    /// assignment removed from the counts.
    fn weights_into(&self, doc: usize, pos: usize, out: &mut [f64]) {
        let w = self.words[doc][pos];
        let own = self.z[doc][pos];
        let v_eta = self.vocab_size as f64 * self.eta;
        for (k, o) in out.iter_mut().enumerate() {
            let minus = u32::from(k == own);
            let nkw = (self.n_kw[k][w] - minus) as f64;
            let nk = (self.n_k[k] - minus) as f64;
            let ndk = (self.n_dk[doc][k] - minus) as f64;
            *o = (nkw + self.eta) / (nk + v_eta) * (ndk + self.alpha);
        }
    }

    /// Full conditional of the topic of token `pos` in document `doc`.
    pub fn conditional(&self, doc: usize, pos: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.topics];
        self.weights_into(doc, pos, &mut p);
        let total: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= total);
        p
    }

    /// Resamples every token once, in document then position order.
    pub fn sweep(&mut self) {
        let mut weights = vec![0.0; self.topics];
        for d in 0..self.words.len() {
            for i in 0..self.words[d].len() {
                self.weights_into(d, i, &mut weights);
                let total: f64 = weights.iter().sum();
                let mut u = self.rng.random::<f64>() * total;
                let mut new = self.topics - 1;
                for (k, &wk) in weights.iter().enumerate() {
                    if u < wk {
                        new = k;
                        break;
                    }
                    u -= wk;
                }
                let old = self.z[d][i];
                if new != old {
                    let w = self.words[d][i];
                    self.n_dk[d][old] -= 1;
                    self.n_kw[old][w] -= 1;
                    self.n_k[old] -= 1;
                    self.n_dk[d][new] += 1;
                    self.n_kw[new][w] += 1;
                    self.n_k[new] += 1;
                    self.z[d][i] = new;
                }
            }
        }
        self.sweeps += 1;
    }

    /// Recounts the tables from `z` and compares.
    pub fn audit(&self) -> Result<(), GibbsError> {
        let mut n_dk = vec![vec![0u32; self.topics]; self.words.len()];
        let mut n_kw = vec![vec![0u32; self.vocab_size]; self.topics];
        let mut n_k = vec![0u32; self.topics];
        for (d, (ws, zs)) in self.words.iter().zip(&self.z).enumerate() {
            for (&w, &t) in ws.iter().zip(zs) {
                n_dk[d][t] += 1;
                n_kw[t][w] += 1;
                n_k[t] += 1;
            }
        }
        if n_dk != self.n_dk {
            return Err(GibbsError::Audit("document-topic table".into()));
        }
        if n_kw != self.n_kw {
            return Err(GibbsError::Audit("topic-word table".into()));
        }
        if n_k != self.n_k {
            return Err(GibbsError::Audit("topic totals".into()));
        }
        for (d, row) in self.n_dk.iter().enumerate() {
            if row.iter().map(|&c| c as usize).sum::<usize>() != self.words[d].len() {
                return Err(GibbsError::Audit(format!("document {d} length")));
            }
        }
        Ok(())
    }

    /// Smoothed point estimates from the current counts.
    pub fn point_estimate(&self) -> GibbsEstimate {
        let v_eta = self.vocab_size as f64 * self.eta;
        let k_alpha = self.topics as f64 * self.alpha;
        let beta = self
            .n_kw
            .iter()
            .zip(&self.n_k)
            .map(|(row, &nk)| row.iter().map(|&c| (c as f64 + self.eta) / (nk as f64 + v_eta)).collect())
            .collect();
        let theta = self
            .n_dk
            .iter()
            .zip(&self.words)
            .map(|(row, ws)| {
                row.iter()
                    .map(|&c| (c as f64 + self.alpha) / (ws.len() as f64 + k_alpha))
                    .collect()
            })
            .collect();
        GibbsEstimate { beta, theta }
    }

    /// Runs `burn_in` sweeps, then averages the smoothed estimates of
    /// `samples` states taken every `thinning` sweeps.
    pub fn estimate(&mut self, burn_in: usize, samples: usize, thinning: usize) -> Result<GibbsEstimate, GibbsError> {
        if samples == 0 {
            return Err(GibbsError::NoSamples);
        }
        for _ in 0..burn_in {
            self.sweep();
        }
        let mut acc = self.zero_estimate();
        for _ in 0..samples {
            for _ in 0..thinning.max(1) {
                self.sweep();
            }
            acc.add(&self.point_estimate());
        }
        acc.scale(1.0 / samples as f64);
        Ok(acc)
    }

    fn zero_estimate(&self) -> GibbsEstimate {
        GibbsEstimate {
            beta: vec![vec![0.0; self.vocab_size]; self.topics],
            theta: vec![vec![0.0; self.topics]; self.words.len()],
        }
    }
}

/// β̂ is K×V and θ̂ is D×K, both row-stochastic.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsEstimate {
    pub beta: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
}

impl GibbsEstimate {
    fn add(&mut self, other: &GibbsEstimate) {
        for (a, b) in self.beta.iter_mut().flatten().zip(other.beta.iter().flatten()) {
            *a += b;
        }
        for (a, b) in self.theta.iter_mut().flatten().zip(other.theta.iter().flatten()) {
            *a += b;
        }
    }

    fn scale(&mut self, s: f64) {
        self.beta.iter_mut().flatten().for_each(|x| *x *= s);
        self.theta.iter_mut().flatten().for_each(|x| *x *= s);
    }

    /// β̂ in the layout read by the topic-matrix text format.
    pub fn beta_matrix(&self) -> Tensor2 {
        Tensor2::from_rows(&self.beta).expect("rectangular")
    }
}

/// Document-completion perplexity for a fixed β̂: each held-out document's
/// even-position tokens fold in θ over `sweeps` Gibbs sweeps with β̂ held
/// fixed; the odd-position tokens are scored under the averaged θ̂.
/// A diagnostic, not comparable with the ELBO bound.
pub fn completion_perplexity(
    beta: &[Vec<f64>],
    corpus: &Corpus,
    alpha: f64,
    sweeps: usize,
    seed: u64,
) -> f64 {
    let k = beta.len();
    let mut rng = rng::stream(seed, "gibbs.completion");
    let (mut log_lik, mut scored) = (0.0, 0u64);
    let mut weights = vec![0.0; k];
    for doc in corpus.docs() {
        let tokens = doc.tokens();
        let observed: Vec<usize> = tokens.iter().step_by(2).copied().collect();
        let held: Vec<usize> = tokens.iter().skip(1).step_by(2).copied().collect();
        if held.is_empty() {
            continue;
        }
        let mut z: Vec<usize> = observed.iter().map(|_| rng.random_range(0..k)).collect();
        let mut n_k = vec![0u32; k];
        z.iter().for_each(|&t| n_k[t] += 1);
        let mut theta = vec![0.0; k];
        let denom = observed.len() as f64 + k as f64 * alpha;
        for s in 0..sweeps.max(1) {
            for (i, &w) in observed.iter().enumerate() {
                n_k[z[i]] -= 1;
                for t in 0..k {
                    weights[t] = (n_k[t] as f64 + alpha) * beta[t][w];
                }
                let total: f64 = weights.iter().sum();
                let mut u = rng.random::<f64>() * total;
                let mut new = k - 1;
                for (t, &wt) in weights.iter().enumerate() {
                    if u < wt {
                        new = t;
                        break;
                    }
                    u -= wt;
                }
                z[i] = new;
                n_k[new] += 1;
            }
            if s * 2 >= sweeps {
                for t in 0..k {
                    theta[t] += (n_k[t] as f64 + alpha) / denom;
                }
            }
        }
        let norm: f64 = theta.iter().sum();
        for &w in &held {
            let p: f64 = (0..k).map(|t| theta[t] / norm * beta[t][w]).sum();
            log_lik += p.ln();
        }
        scored += held.len() as u64;
    }
    (-log_lik / scored.max(1) as f64).exp()
}
