//! Evaluation: topic listings, NPMI coherence, ELBO perplexity, sparsity of
//! topic proportions, and the network-only versus refined inference
//! comparison.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::io::{self, BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::avitm::{ModelError, TopicModel};
use crate::corpus::{Corpus, Vocabulary};
use crate::nn::{entropy, AdamConfig, AdamState, Mode, ParamBlock, Tensor2};
use crate::prior::{sample_logistic_normal, LogisticNormalParams};
use crate::rng;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{0}")]
    InvalidArgument(String),
    #[error("topic matrix line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Documents per forward pass when scoring a whole corpus.
const CHUNK: usize = 256;

// ---------------------------------------------------------------------------
// Topic listings

/// Indices of the `n` largest entries of each row, ties broken by the
/// lexicographic order of the corresponding tokens.
pub fn top_word_ids(matrix: &Tensor2, vocab: &Vocabulary, n: usize) -> Result<Vec<Vec<usize>>, EvalError> {
    if matrix.cols() != vocab.len() {
        return Err(EvalError::InvalidArgument(format!(
            "matrix has {} columns but the vocabulary has {} tokens",
            matrix.cols(),
            vocab.len()
        )));
    }
    if n > vocab.len() {
        return Err(EvalError::InvalidArgument(format!(
            "asked for {n} words from a vocabulary of {}",
            vocab.len()
        )));
    }
    Ok(matrix
        .row_iter()
        .map(|row| {
            let mut ids: Vec<usize> = (0..row.len()).collect();
            ids.sort_by(|&a, &b| {
                row[b]
                    .total_cmp(&row[a])
                    .then_with(|| vocab.token(a).cmp(vocab.token(b)))
            });
            ids.truncate(n);
            ids
        })
        .collect())
}

pub fn top_words(matrix: &Tensor2, vocab: &Vocabulary, n: usize) -> Result<Vec<Vec<String>>, EvalError> {
    Ok(top_word_ids(matrix, vocab, n)?
        .into_iter()
        .map(|ids| ids.into_iter().map(|i| vocab.token(i).to_string()).collect())
        .collect())
}

/// Mean over topic pairs of `1 − |A ∩ B| / n` for the top-word sets; 0 when
/// every topic lists the same words, 1 when all lists are disjoint.
pub fn topic_diversity(lists: &[Vec<String>]) -> f64 {
    let sets: Vec<BTreeSet<&str>> = lists
        .iter()
        .map(|l| l.iter().map(String::as_str).collect())
        .collect();
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..sets.len() {
        for j in i + 1..sets.len() {
            let n = lists[i].len().max(lists[j].len()).max(1);
            total += 1.0 - sets[i].intersection(&sets[j]).count() as f64 / n as f64;
            pairs += 1;
        }
    }
    if pairs == 0 {
        1.0
    } else {
        total / pairs as f64
    }
}

// ---------------------------------------------------------------------------
// NPMI

/// Additive smoothing inside the joint probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Smoothing {
    Fixed(f64),
    /// `1 / (D + 1)` for a reference corpus of `D` documents.
    InverseDocs,
}

impl Default for Smoothing {
    fn default() -> Self {
        Smoothing::Fixed(1e-12)
    }
}

impl Smoothing {
    pub fn value(self, docs: usize) -> f64 {
        match self {
            Smoothing::Fixed(e) => e,
            Smoothing::InverseDocs => 1.0 / (docs as f64 + 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coherence {
    pub mean: f64,
    pub per_topic: Vec<f64>,
}

/// NPMI from document-level probabilities. A pair involving a word that
/// never occurs scores −1; a pair present in every document scores 1.
pub fn npmi(p_i: f64, p_j: f64, p_ij: f64, eps: f64) -> f64 {
    if p_i == 0.0 || p_j == 0.0 {
        return -1.0;
    }
    if p_ij >= 1.0 {
        return 1.0;
    }
    let joint = p_ij + eps;
    (joint / (p_i * p_j)).ln() / -joint.ln()
}

/// Average pairwise NPMI per topic, with document co-occurrence counted in
/// `reference`. Tokens missing from the reference vocabulary never occur.
pub fn npmi_coherence(
    topics: &[Vec<String>],
    reference: &Corpus,
    smoothing: Smoothing,
) -> Result<Coherence, EvalError> {
    if reference.is_empty() {
        return Err(EvalError::InvalidArgument("reference corpus is empty".into()));
    }
    if topics.is_empty() {
        return Err(EvalError::InvalidArgument("no topics to score".into()));
    }
    if let Some(t) = topics.iter().find(|t| t.len() < 2) {
        return Err(EvalError::InvalidArgument(format!(
            "coherence needs at least 2 words per topic, got {}",
            t.len()
        )));
    }
    let vocab = reference.vocab();
    let wanted: BTreeSet<usize> = topics
        .iter()
        .flatten()
        .filter_map(|t| vocab.id(t))
        .collect();
    // Sorted document-id lists for each word of interest.
    let mut postings: HashMap<usize, Vec<u32>> = wanted.iter().map(|&w| (w, Vec::new())).collect();
    for (d, doc) in reference.docs().iter().enumerate() {
        for (w, _) in doc.entries() {
            if let Some(p) = postings.get_mut(&w) {
                p.push(d as u32);
            }
        }
    }
    let d = reference.len() as f64;
    let eps = smoothing.value(reference.len());
    let empty = Vec::new();
    let docs_of = |t: &str| vocab.id(t).map_or(&empty, |w| &postings[&w]);

    let per_topic: Vec<f64> = topics
        .iter()
        .map(|words| {
            let mut sum = 0.0;
            let mut pairs = 0usize;
            for i in 0..words.len() {
                for j in i + 1..words.len() {
                    let (a, b) = (docs_of(&words[i]), docs_of(&words[j]));
                    let joint = sorted_intersection(a, b);
                    sum += npmi(a.len() as f64 / d, b.len() as f64 / d, joint as f64 / d, eps);
                    pairs += 1;
                }
            }
            sum / pairs as f64
        })
        .collect();
    let mean = per_topic.iter().sum::<f64>() / per_topic.len() as f64;
    Ok(Coherence { mean, per_topic })
}

fn sorted_intersection(a: &[u32], b: &[u32]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

// ---------------------------------------------------------------------------
// Perplexity

/// Per-document ELBO in inference mode, averaged over `samples` noise draws.
pub fn corpus_elbo<R: Rng + ?Sized>(
    model: &TopicModel,
    corpus: &Corpus,
    samples: usize,
    rng: &mut R,
) -> Result<Vec<f64>, EvalError> {
    let mut out = Vec::with_capacity(corpus.len());
    let ids: Vec<usize> = (0..corpus.len()).collect();
    for chunk in ids.chunks(CHUNK) {
        let x = corpus.dense_batch(chunk);
        out.extend(model.elbo_mc(&x, samples, rng, Mode::Infer)?.per_doc);
    }
    Ok(out)
}

/// `exp(−Σ_d ELBO_d / N)` over all `N` tokens.
pub fn perplexity_from_elbo(per_doc: &[f64], total_tokens: u64) -> f64 {
    (-per_doc.iter().sum::<f64>() / total_tokens as f64).exp()
}

pub fn perplexity(model: &TopicModel, corpus: &Corpus, samples: usize, seed: u64) -> Result<f64, EvalError> {
    if corpus.is_empty() {
        return Err(EvalError::InvalidArgument("perplexity of an empty corpus".into()));
    }
    let mut r = rng::stream(seed, "eval.perplexity");
    let elbo = corpus_elbo(model, corpus, samples, &mut r)?;
    Ok(perplexity_from_elbo(&elbo, corpus.total_tokens()))
}

// ---------------------------------------------------------------------------
// Sparsity

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparsityProfile {
    /// Mean Shannon entropy of θ, in nats.
    pub mean_entropy: f64,
    /// Mean total probability of the five largest components.
    pub mean_top5_mass: f64,
    pub samples: usize,
}

fn top_mass(theta: &[f64], n: usize) -> f64 {
    let mut sorted = theta.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    sorted.iter().take(n).sum()
}

pub fn profile_of<'a>(thetas: impl IntoIterator<Item = &'a [f64]>) -> SparsityProfile {
    let (mut h, mut m, mut n) = (0.0, 0.0, 0usize);
    for t in thetas {
        h += entropy(t);
        m += top_mass(t, 5);
        n += 1;
    }
    let n_f = n.max(1) as f64;
    SparsityProfile {
        mean_entropy: h / n_f,
        mean_top5_mass: m / n_f,
        samples: n,
    }
}

pub fn sparsity_profile<R: Rng + ?Sized>(
    params: &LogisticNormalParams,
    samples: usize,
    rng: &mut R,
) -> SparsityProfile {
    let draws = sample_logistic_normal(params, rng, samples);
    profile_of(draws.iter().map(Vec::as_slice))
}

/// Sparsity of posterior samples: `per_doc` draws of θ from each document's
/// variational posterior, pooled.
pub fn posterior_sparsity<R: Rng + ?Sized>(
    model: &TopicModel,
    corpus: &Corpus,
    per_doc: usize,
    rng: &mut R,
) -> Result<SparsityProfile, EvalError> {
    let ids: Vec<usize> = (0..corpus.len()).collect();
    let mut thetas: Vec<Vec<f64>> = Vec::new();
    for chunk in ids.chunks(CHUNK) {
        let (mu, lv) = model.encode(&corpus.dense_batch(chunk), Mode::Infer)?;
        for _ in 0..per_doc.max(1) {
            let eps = Tensor2::standard_normal(mu.rows(), mu.cols(), rng);
            thetas.extend(crate::avitm::sample_theta(&mu, &lv, &eps, None).to_rows());
        }
    }
    Ok(profile_of(thetas.iter().map(Vec::as_slice)))
}

// ---------------------------------------------------------------------------
// Network-only versus refined inference

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefineOptions {
    pub steps: usize,
    pub learning_rate: f64,
    /// Fixed noise draws per document defining the optimized objective.
    pub samples: usize,
    /// Fresh noise draws per document, shared by both arms, for scoring.
    pub eval_samples: usize,
    pub seed: u64,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self {
            steps: 100,
            learning_rate: 0.01,
            samples: 16,
            eval_samples: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceComparison {
    pub network_perplexity: f64,
    pub refined_perplexity: f64,
    pub network_elbo: Vec<f64>,
    pub refined_elbo: Vec<f64>,
}

impl InferenceComparison {
    pub fn relative_gap(&self) -> f64 {
        (self.network_perplexity - self.refined_perplexity).abs() / self.network_perplexity
    }
}

/// Mean per-document ELBO and its gradient in (μ, log σ²) over fixed draws.
fn latent_objective(
    model: &TopicModel,
    x: &Tensor2,
    mu: &Tensor2,
    lv: &Tensor2,
    eps: &[Tensor2],
) -> Result<(Vec<f64>, Tensor2, Tensor2), EvalError> {
    let (rows, k) = mu.shape();
    let w = 1.0 / eps.len() as f64;
    let mut value = vec![0.0; rows];
    let mut dmu = Tensor2::zeros(rows, k);
    let mut dlv = Tensor2::zeros(rows, k);
    for e in eps {
        let (out, gm, gl) = model.latent_loss_and_grad(x, mu, lv, e, Mode::Infer)?;
        for (v, p) in value.iter_mut().zip(&out.per_doc) {
            *v += p * w;
        }
        for (d, g) in dmu.as_mut_slice().iter_mut().zip(gm.as_slice()) {
            *d += g * w;
        }
        for (d, g) in dlv.as_mut_slice().iter_mut().zip(gl.as_slice()) {
            *d += g * w;
        }
    }
    Ok((value, dmu, dlv))
}

/// Scores a corpus twice with the network weights frozen: once with the
/// encoder's variational parameters as they are, once after optimizing
/// each document's mean and log-variance directly against its ELBO.
///
/// Optimization runs on `samples` fixed draws and keeps each document's
/// best iterate under that objective. Both arms are then scored on the same
/// `eval_samples` fresh draws, so the refined arm gets no credit for fitting
/// its own noise.
pub fn compare_inference(
    model: &TopicModel,
    corpus: &Corpus,
    opts: &RefineOptions,
) -> Result<InferenceComparison, EvalError> {
    if corpus.is_empty() {
        return Err(EvalError::InvalidArgument("comparison on an empty corpus".into()));
    }
    let adam_cfg = AdamConfig {
        learning_rate: opts.learning_rate,
        ..AdamConfig::default()
    };
    adam_cfg
        .validate()
        .map_err(|e| EvalError::InvalidArgument(e.to_string()))?;
    let k = model.topics();
    let mut fit_rng = rng::stream(opts.seed, "eval.refine");
    let mut score_rng = rng::stream(opts.seed, "eval.refine.score");
    let ids: Vec<usize> = (0..corpus.len()).collect();
    let mut network_elbo = Vec::with_capacity(corpus.len());
    let mut refined_elbo = Vec::with_capacity(corpus.len());

    for chunk in ids.chunks(CHUNK) {
        let x = corpus.dense_batch(chunk);
        let rows = chunk.len();
        let draws = |n: usize, r: &mut crate::rng::StreamRng| -> Vec<Tensor2> {
            (0..n.max(1)).map(|_| Tensor2::standard_normal(rows, k, r)).collect()
        };
        let fit_eps = draws(opts.samples, &mut fit_rng);
        let score_eps = draws(opts.eval_samples, &mut score_rng);

        let (mu0, lv0) = model.encode(&x, Mode::Infer)?;
        let (mut mu, mut lv) = (mu0.clone(), lv0.clone());
        let (start, mut dmu, mut dlv) = latent_objective(model, &x, &mu, &lv, &fit_eps)?;
        let (mut best, mut best_mu, mut best_lv) = (start, mu0.clone(), lv0.clone());
        let mut adam = AdamState::new(adam_cfg).map_err(|e| EvalError::InvalidArgument(e.to_string()))?;
        for _ in 0..opts.steps {
            let update = adam.update(&mut [
                ParamBlock {
                    name: "mu",
                    params: mu.as_mut_slice(),
                    grads: dmu.as_slice(),
                },
                ParamBlock {
                    name: "logvar",
                    params: lv.as_mut_slice(),
                    grads: dlv.as_slice(),
                },
            ]);
            if update.is_err() {
                break;
            }
            let Ok((value, gm, gl)) = latent_objective(model, &x, &mu, &lv, &fit_eps) else {
                break;
            };
            for (d, v) in value.iter().enumerate() {
                if *v > best[d] {
                    best[d] = *v;
                    best_mu.row_mut(d).copy_from_slice(mu.row(d));
                    best_lv.row_mut(d).copy_from_slice(lv.row(d));
                }
            }
            dmu = gm;
            dlv = gl;
        }
        network_elbo.extend(latent_objective(model, &x, &mu0, &lv0, &score_eps)?.0);
        refined_elbo.extend(latent_objective(model, &x, &best_mu, &best_lv, &score_eps)?.0);
    }
    let n = corpus.total_tokens();
    Ok(InferenceComparison {
        network_perplexity: perplexity_from_elbo(&network_elbo, n),
        refined_perplexity: perplexity_from_elbo(&refined_elbo, n),
        network_elbo,
        refined_elbo,
    })
}

// ---------------------------------------------------------------------------
// Topic recovery

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Greedy one-to-one matching of estimated to true topics by cosine
/// similarity (largest remaining pair first). Returns the matched cosine
/// for each true topic.
pub fn best_match_cosine(estimated: &[Vec<f64>], truth: &[Vec<f64>]) -> Vec<f64> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(estimated.len() * truth.len());
    for (i, e) in estimated.iter().enumerate() {
        for (j, t) in truth.iter().enumerate() {
            pairs.push((cosine(e, t), i, j));
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_e = vec![false; estimated.len()];
    let mut out = vec![0.0; truth.len()];
    let mut done = vec![false; truth.len()];
    for (c, i, j) in pairs {
        if !used_e[i] && !done[j] {
            used_e[i] = true;
            done[j] = true;
            out[j] = c;
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Topic-matrix text format: one topic per line, V whitespace-separated
// probabilities. Lines starting with `#` are comments.

pub fn write_topic_matrix<W: Write>(mut w: W, matrix: &Tensor2) -> io::Result<()> {
    writeln!(w, "# {} topics x {} words", matrix.rows(), matrix.cols())?;
    for row in matrix.row_iter() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    w.flush()
}

pub fn read_topic_matrix<R: BufRead>(r: R) -> Result<Tensor2, EvalError> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>().map_err(|_| EvalError::Parse {
                    line: i + 1,
                    message: format!("`{t}` is not a number"),
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(EvalError::Parse {
                    line: i + 1,
                    message: format!("expected {} values, found {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(EvalError::Parse {
            line: 0,
            message: "no topics".into(),
        });
    }
    Tensor2::from_rows(&rows).map_err(|e| EvalError::InvalidArgument(e.to_string()))
}

// ---------------------------------------------------------------------------
// Reports

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub topics: usize,
    pub top_n: usize,
    pub coherence: Option<f64>,
    pub per_topic_coherence: Vec<f64>,
    pub perplexity: Option<f64>,
    pub sparsity: Option<SparsityProfile>,
    pub diversity: f64,
    pub inference: Option<InferenceSummary>,
    pub top_words: Vec<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferenceSummary {
    pub network_perplexity: f64,
    pub refined_perplexity: f64,
    pub relative_gap: f64,
}

impl From<&InferenceComparison> for InferenceSummary {
    fn from(c: &InferenceComparison) -> Self {
        Self {
            network_perplexity: c.network_perplexity,
            refined_perplexity: c.refined_perplexity,
            relative_gap: c.relative_gap(),
        }
    }
}

impl EvalReport {
    pub fn new(top_words: Vec<Vec<String>>) -> Self {
        Self {
            topics: top_words.len(),
            top_n: top_words.first().map_or(0, Vec::len),
            coherence: None,
            per_topic_coherence: Vec::new(),
            perplexity: None,
            sparsity: None,
            diversity: topic_diversity(&top_words),
            inference: None,
            top_words,
        }
    }

    pub fn with_coherence(mut self, c: Coherence) -> Self {
        self.coherence = Some(c.mean);
        self.per_topic_coherence = c.per_topic;
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned plain-text table.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
        let _ = writeln!(s, "{:<22}{}", "topics", self.topics);
        let _ = writeln!(s, "{:<22}{}", "coherence (NPMI)", fmt(self.coherence));
        let _ = writeln!(s, "{:<22}{}", "perplexity", fmt(self.perplexity));
        let _ = writeln!(s, "{:<22}{:.4}", "diversity", self.diversity);
        if let Some(sp) = &self.sparsity {
            let _ = writeln!(s, "{:<22}{:.4}", "mean entropy (nats)", sp.mean_entropy);
            let _ = writeln!(s, "{:<22}{:.4}", "mean top-5 mass", sp.mean_top5_mass);
        }
        if let Some(inf) = &self.inference {
            let _ = writeln!(s, "{:<22}{:.4}", "network perplexity", inf.network_perplexity);
            let _ = writeln!(s, "{:<22}{:.4}", "refined perplexity", inf.refined_perplexity);
            let _ = writeln!(s, "{:<22}{:.4}", "relative gap", inf.relative_gap);
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "{:>5}  {:>8}  words", "topic", "npmi");
        for (k, words) in self.top_words.iter().enumerate() {
            let c = self.per_topic_coherence.get(k).copied();
            let _ = writeln!(s, "{k:>5}  {:>8}  {}", fmt(c), words.join(" "));
        }
        s
    }
}
