//! Minibatch training with Adam, checkpoint/resume, and the prior and
//! optimizer ablations.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::avitm::{
    read_blocks, write_blocks, BlockFile, DecoderKind, LossOptions, ModelConfig, ModelError,
    Noise, PriorKind, TopicModel,
};
use crate::corpus::Corpus;
use crate::eval::{self, EvalError, Smoothing};
use crate::nn::{AdamConfig, AdamState, Moments, NnError, ParamBlock};
use crate::rng::{self, StreamRng, StreamState};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("unknown preset `{0}` (expected high-lr-bn, low-lr-no-bn, gaussian-high or gaussian-low)")]
    UnknownPreset(String),
    #[error("training diverged at epoch {epoch}, step {step}: {source}{}", last_checkpoint_note(.last_checkpoint))]
    Diverged {
        epoch: usize,
        step: u64,
        last_checkpoint: Option<PathBuf>,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn last_checkpoint_note(path: &Option<PathBuf>) -> String {
    match path {
        Some(p) => format!(" (last good checkpoint: {})", p.display()),
        None => " (no checkpoint written yet)".into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub topics: usize,
    pub hidden: Vec<usize>,
    pub decoder: DecoderKind,
    pub prior: PriorKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_norm: bool,
    pub dropout: f64,
    pub seed: u64,
    /// Held-out evaluation and checkpoint period in epochs; 0 disables both.
    pub eval_every: usize,
    /// Linear KL-weight warm-up from 0 to 1 over this many steps; 0 is off.
    pub kl_warmup_steps: u64,
    /// Rescale the global gradient norm down to this value when exceeded.
    pub clip_norm: Option<f64>,
    /// Noise draws per document for held-out perplexity.
    pub eval_samples: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            topics: 50,
            hidden: vec![100, 100],
            decoder: DecoderKind::ProdLda,
            prior: PriorKind::default(),
            epochs: 100,
            batch_size: 256,
            learning_rate: 0.002,
            beta1: 0.99,
            beta2: 0.999,
            batch_norm: true,
            dropout: 0.2,
            seed: 0,
            eval_every: 0,
            kl_warmup_steps: 0,
            clip_norm: None,
            eval_samples: 1,
        }
    }
}

pub const PRESETS: [&str; 4] = ["high-lr-bn", "low-lr-no-bn", "gaussian-high", "gaussian-low"];

/// Optimizer and prior settings of the four ablation cells. Everything
/// else keeps its default.
pub fn preset(name: &str) -> Result<TrainConfig, TrainError> {
    let base = TrainConfig::default();
    let high = TrainConfig {
        learning_rate: 0.002,
        beta1: 0.99,
        batch_norm: true,
        ..base.clone()
    };
    let low = TrainConfig {
        learning_rate: 0.0002,
        beta1: 0.99,
        batch_norm: false,
        ..base
    };
    match name {
        "high-lr-bn" => Ok(high),
        "low-lr-no-bn" => Ok(low),
        "gaussian-high" => Ok(TrainConfig {
            prior: PriorKind::Gaussian,
            ..high
        }),
        "gaussian-low" => Ok(TrainConfig {
            prior: PriorKind::Gaussian,
            ..low
        }),
        other => Err(TrainError::UnknownPreset(other.to_string())),
    }
}

impl TrainConfig {
    /// Low momentum, small step, no batch norm: prone to all topics
    /// converging to the same words.
    pub fn collapse_inducing() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.5,
            batch_norm: false,
            ..Self::default()
        }
    }

    /// Copies optimizer, prior and regularizer settings from `other`.
    pub fn with_regime(&self, other: &TrainConfig) -> Self {
        Self {
            prior: other.prior,
            learning_rate: other.learning_rate,
            beta1: other.beta1,
            beta2: other.beta2,
            batch_norm: other.batch_norm,
            dropout: other.dropout,
            ..self.clone()
        }
    }

    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            hidden: self.hidden.clone(),
            prior: self.prior,
            batch_norm: self.batch_norm,
            dropout: self.dropout,
            ..ModelConfig::new(self.topics, vocab_size, self.decoder)
        }
    }

    pub fn adam_config(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            ..AdamConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |m: String| Err(TrainError::Config(m));
        if self.batch_size < 1 {
            return fail("batch size must be positive".into());
        }
        if self.batch_norm && self.batch_size < 2 {
            return fail("batch normalization needs a batch size of at least 2".into());
        }
        if let Some(c) = self.clip_norm {
            if !(c.is_finite() && c > 0.0) {
                return fail(format!("clip norm must be positive, got {c}"));
            }
        }
        self.adam_config()
            .validate()
            .map_err(|e| TrainError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub steps: u64,
    /// Mean per-document ELBO over the epoch's minibatches (train mode).
    pub train_elbo: f64,
    pub heldout_perplexity: Option<f64>,
    pub diversity: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub epochs: Vec<EpochRecord>,
}

impl TrainTrace {
    /// One JSON object per line.
    pub fn to_json_lines(&self) -> String {
        let mut s = String::new();
        for e in &self.epochs {
            let _ = writeln!(s, "{}", serde_json::to_string(e).expect("record serializes"));
        }
        s
    }

    pub fn train_elbo(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_elbo).collect()
    }
}

/// Diversity of the model's top-`n` word lists; see
/// [`eval::topic_diversity`].
pub fn detect_collapse(model: &TopicModel, top_n: usize) -> Result<f64, TrainError> {
    let topics = model.effective_topics()?;
    let n = top_n.min(model.vocab_size());
    let ids = top_word_ids_plain(&topics, n);
    let lists: Vec<Vec<String>> = ids
        .into_iter()
        .map(|l| l.into_iter().map(|i| i.to_string()).collect())
        .collect();
    Ok(eval::topic_diversity(&lists))
}

/// Top-n indices per row, ties broken by index.
fn top_word_ids_plain(m: &crate::nn::Tensor2, n: usize) -> Vec<Vec<usize>> {
    m.row_iter()
        .map(|row| {
            let mut ids: Vec<usize> = (0..row.len()).collect();
            ids.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
            ids.truncate(n);
            ids
        })
        .collect()
}

/// Shuffled minibatches. With batch norm on, a trailing batch of one
/// document is merged into the previous batch.
fn minibatches(order: &[usize], batch_size: usize, merge_singleton: bool) -> Vec<Vec<usize>> {
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    if merge_singleton && batches.len() > 1 && batches.last().is_some_and(|b| b.len() == 1) {
        let last = batches.pop().expect("non-empty");
        batches.last_mut().expect("at least one").extend(last);
    }
    batches
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointHeader {
    train: TrainConfig,
    model: ModelConfig,
    epoch: usize,
    step: u64,
    adam: AdamConfig,
    adam_step: u64,
    shuffle: StreamState,
    noise: StreamState,
    trace: TrainTrace,
}

/// Resumable training state.
#[derive(Debug, Clone)]
pub struct Trainer {
    config: TrainConfig,
    model: TopicModel,
    adam: AdamState,
    shuffle: StreamRng,
    noise: StreamRng,
    epoch: usize,
    step: u64,
    trace: TrainTrace,
    last_checkpoint: Option<PathBuf>,
}

impl Trainer {
    pub fn new(config: TrainConfig, vocab_size: usize) -> Result<Self, TrainError> {
        config.validate()?;
        let model = TopicModel::new(config.model_config(vocab_size), config.seed)?;
        let adam = AdamState::new(config.adam_config()).map_err(|e| TrainError::Config(e.to_string()))?;
        Ok(Self {
            shuffle: rng::stream(config.seed, "train.shuffle"),
            noise: rng::stream(config.seed, "train.noise"),
            config,
            model,
            adam,
            epoch: 0,
            step: 0,
            trace: TrainTrace::default(),
            last_checkpoint: None,
        })
    }

    pub fn model(&self) -> &TopicModel {
        &self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn trace(&self) -> &TrainTrace {
        &self.trace
    }

    pub fn into_parts(self) -> (TopicModel, TrainTrace) {
        (self.model, self.trace)
    }

    fn kl_weight(&self) -> f64 {
        match self.config.kl_warmup_steps {
            0 => 1.0,
            n => ((self.step + 1) as f64 / n as f64).min(1.0),
        }
    }

    fn diverged(&self, source: impl std::error::Error + Send + Sync + 'static) -> TrainError {
        TrainError::Diverged {
            epoch: self.epoch,
            step: self.step,
            last_checkpoint: self.last_checkpoint.clone(),
            source: Box::new(source),
        }
    }

    /// One pass over `corpus`. Returns the epoch's trace record.
    pub fn run_epoch(&mut self, corpus: &Corpus, heldout: Option<&Corpus>) -> Result<EpochRecord, TrainError> {
        if corpus.is_empty() {
            return Err(TrainError::Config("training corpus is empty".into()));
        }
        if corpus.vocab_size() != self.model.vocab_size() {
            return Err(TrainError::Config(format!(
                "corpus vocabulary has {} words, model expects {}",
                corpus.vocab_size(),
                self.model.vocab_size()
            )));
        }
        if self.config.batch_norm && corpus.len() < 2 {
            return Err(TrainError::Config(
                "batch normalization needs at least 2 training documents".into(),
            ));
        }
        let start = Instant::now();
        let mut order: Vec<usize> = (0..corpus.len()).collect();
        order.shuffle(&mut self.shuffle);
        let k = self.model.topics();
        let mut elbo_sum = 0.0;

        for batch in minibatches(&order, self.config.batch_size, self.config.batch_norm) {
            let x = corpus.dense_batch(&batch);
            let noise = Noise::sample(batch.len(), k, self.config.dropout, &mut self.noise);
            let opts = LossOptions {
                scale: 1.0 / batch.len() as f64,
                kl_weight: self.kl_weight(),
            };
            let mut out = match self.model.loss_and_grad(&x, &noise, opts) {
                Ok(out) => out,
                Err(e) => return Err(self.diverged(e)),
            };
            if !out.loss.is_finite() {
                return Err(self.diverged(NnError::NonFinite { what: "loss".into() }));
            }
            if let Some(c) = self.config.clip_norm {
                let norm = out.grads.norm();
                if norm > c {
                    out.grads.scale(c / norm);
                }
            }
            let grads = out.grads.blocks();
            let mut params = self.model.params_mut();
            let mut blocks: Vec<ParamBlock<'_>> = params
                .iter_mut()
                .zip(&grads)
                .map(|((name, p), (gname, g))| {
                    debug_assert_eq!(name, gname);
                    ParamBlock {
                        name: name.as_str(),
                        params: p,
                        grads: g,
                    }
                })
                .collect();
            if let Err(e) = self.adam.update(&mut blocks) {
                drop(blocks);
                return Err(self.diverged(e));
            }
            drop(blocks);
            self.model.apply_running(&out.running);
            self.step += 1;
            elbo_sum += out.elbo.total;
        }

        let heldout_perplexity = match heldout {
            Some(h) if self.config.eval_every > 0 && (self.epoch + 1).is_multiple_of(self.config.eval_every) => {
                Some(eval::perplexity(
                    &self.model,
                    h,
                    self.config.eval_samples,
                    self.config.seed.wrapping_add(self.epoch as u64),
                )?)
            }
            _ => None,
        };
        let record = EpochRecord {
            epoch: self.epoch,
            steps: self.step,
            train_elbo: elbo_sum / corpus.len() as f64,
            heldout_perplexity,
            diversity: detect_collapse(&self.model, 10)?,
            seconds: start.elapsed().as_secs_f64(),
        };
        self.epoch += 1;
        self.trace.epochs.push(record.clone());
        Ok(record)
    }

    /// Runs the remaining epochs. With `checkpoint_dir`, a checkpoint is
    /// written every `eval_every` epochs.
    pub fn run(
        &mut self,
        corpus: &Corpus,
        heldout: Option<&Corpus>,
        checkpoint_dir: Option<&Path>,
    ) -> Result<(), TrainError> {
        while self.epoch < self.config.epochs {
            self.run_epoch(corpus, heldout)?;
            if let Some(dir) = checkpoint_dir {
                if self.config.eval_every > 0 && self.epoch.is_multiple_of(self.config.eval_every) {
                    std::fs::create_dir_all(dir)?;
                    let path = dir.join(format!("checkpoint-{:05}.bin", self.epoch));
                    self.save_checkpoint(&path)?;
                    self.last_checkpoint = Some(path);
                }
            }
        }
        Ok(())
    }

    fn to_block_file(&self) -> BlockFile {
        let header = CheckpointHeader {
            train: self.config.clone(),
            model: self.model.config().clone(),
            epoch: self.epoch,
            step: self.step,
            adam: self.adam.config,
            adam_step: self.adam.step,
            shuffle: StreamState::capture(&self.shuffle),
            noise: StreamState::capture(&self.noise),
            trace: self.trace.clone(),
        };
        let mut file = self.model.to_block_file();
        file.header = serde_json::to_string(&header).expect("header serializes");
        for (name, m) in &self.adam.moments {
            file.blocks.push((format!("adam.m.{name}"), m.first.clone()));
            file.blocks.push((format!("adam.v.{name}"), m.second.clone()));
        }
        file
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<(), TrainError> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        write_blocks(f, &self.to_block_file())?;
        Ok(())
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self, TrainError> {
        let file = read_blocks(std::io::BufReader::new(std::fs::File::open(path)?))?;
        let header: CheckpointHeader = serde_json::from_str(&file.header)
            .map_err(|e| TrainError::Checkpoint(format!("bad header: {e}")))?;
        let model_file = BlockFile {
            header: serde_json::to_string(&header.model).expect("config serializes"),
            ..file.clone()
        };
        let model = TopicModel::from_block_file(&model_file)?;
        let blocks = file.block_map();
        let mut adam = AdamState::new(header.adam).map_err(|e| TrainError::Checkpoint(e.to_string()))?;
        adam.step = header.adam_step;
        for (name, params) in model.params() {
            let m = blocks.get(format!("adam.m.{name}").as_str());
            let v = blocks.get(format!("adam.v.{name}").as_str());
            match (m, v) {
                (Some(m), Some(v)) if m.len() == params.len() && v.len() == params.len() => {
                    adam.moments.insert(
                        name,
                        Moments {
                            first: m.to_vec(),
                            second: v.to_vec(),
                        },
                    );
                }
                (None, None) if header.adam_step == 0 => {}
                _ => {
                    return Err(TrainError::Checkpoint(format!(
                        "optimizer state for `{name}` is missing or malformed"
                    )))
                }
            }
        }
        Ok(Self {
            config: header.train,
            model,
            adam,
            shuffle: header.shuffle.restore(),
            noise: header.noise.restore(),
            epoch: header.epoch,
            step: header.step,
            trace: header.trace,
            last_checkpoint: Some(path.to_path_buf()),
        })
    }
}

/// Trains a model on `corpus` from scratch.
pub fn train(corpus: &Corpus, config: &TrainConfig) -> Result<(TopicModel, TrainTrace), TrainError> {
    let mut t = Trainer::new(config.clone(), corpus.vocab_size())?;
    t.run(corpus, None, None)?;
    Ok(t.into_parts())
}

/// Trains under `base` and under the collapse-inducing regime with the same
/// seed, returning `(diversity_base, diversity_collapse)`.
pub fn collapse_pair(corpus: &Corpus, base: &TrainConfig, top_n: usize) -> Result<(f64, f64), TrainError> {
    let (good, _) = train(corpus, base)?;
    let bad_cfg = base.with_regime(&TrainConfig::collapse_inducing());
    let (bad, _) = train(corpus, &bad_cfg)?;
    Ok((detect_collapse(&good, top_n)?, detect_collapse(&bad, top_n)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub preset: String,
    pub decoder: DecoderKind,
    pub coherence: f64,
    pub perplexity: f64,
    pub diversity: f64,
}

/// Trains every preset on `train` (with `base` supplying sizes, epochs and
/// seed) and scores it: NPMI against `train`, perplexity on `test`.
pub fn ablate(
    train_corpus: &Corpus,
    test_corpus: &Corpus,
    base: &TrainConfig,
    presets: &[&str],
    top_n: usize,
) -> Result<Vec<AblationRow>, TrainError> {
    let mut rows = Vec::with_capacity(presets.len());
    for &name in presets {
        let cfg = base.with_regime(&preset(name)?);
        let (model, _) = train(train_corpus, &cfg)?;
        let topics = model.effective_topics()?;
        let n = top_n.min(model.vocab_size());
        let words = eval::top_words(&topics, train_corpus.vocab(), n)?;
        let coherence = eval::npmi_coherence(&words, train_corpus, Smoothing::default())?.mean;
        let perplexity = eval::perplexity(&model, test_corpus, cfg.eval_samples, cfg.seed)?;
        rows.push(AblationRow {
            preset: name.to_string(),
            decoder: cfg.decoder,
            coherence,
            perplexity,
            diversity: eval::topic_diversity(&words),
        });
    }
    Ok(rows)
}

pub fn ablation_table(rows: &[AblationRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<16}{:<10}{:>12}{:>14}{:>12}",
        "preset", "decoder", "coherence", "perplexity", "diversity"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:<16}{:<10}{:>12.4}{:>14.2}{:>12.4}",
            r.preset, r.decoder, r.coherence, r.perplexity, r.diversity
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Document, Vocabulary};
    use std::sync::Arc;

    fn tiny(docs: usize) -> Corpus {
        let v = Arc::new(Vocabulary::new((0..6).map(|i| format!("t{i}")).collect()).unwrap());
        let docs = (0..docs)
            .map(|d| Document::from_counts([(d % 6, 2), ((d + 1) % 6, 1)]))
            .collect();
        Corpus::new(v, docs).unwrap()
    }

    fn small(epochs: usize) -> TrainConfig {
        TrainConfig {
            topics: 3,
            hidden: vec![8, 8],
            epochs,
            batch_size: 4,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn presets_match_stated_ranges() {
        assert!(preset("high-lr-bn").unwrap().batch_norm);
        let low = preset("low-lr-no-bn").unwrap();
        assert!(!low.batch_norm);
        assert!(low.learning_rate > 0.00009 && low.learning_rate < 0.0009);
        let high = preset("high-lr-bn").unwrap();
        assert!(high.learning_rate > 0.001 && high.learning_rate < 0.1);
        for name in PRESETS {
            assert!(preset(name).unwrap().beta1 > 0.8, "{name}");
        }
        assert_eq!(preset("gaussian-low").unwrap().prior, PriorKind::Gaussian);
        assert!(matches!(preset("nope"), Err(TrainError::UnknownPreset(_))));
    }

    #[test]
    fn two_docs_one_epoch_is_one_step() {
        let mut cfg = small(1);
        cfg.batch_size = 2;
        let mut t = Trainer::new(cfg, 6).unwrap();
        t.run(&tiny(2), None, None).unwrap();
        assert_eq!(t.step(), 1);
        assert_eq!(t.adam.step, 1);
        assert_eq!(t.trace().epochs.len(), 1);
    }

    #[test]
    fn singleton_tail_batch_is_merged() {
        let b = minibatches(&[0, 1, 2, 3, 4], 2, true);
        assert_eq!(b, vec![vec![0, 1], vec![2, 3, 4]]);
        let b = minibatches(&[0, 1, 2, 3, 4], 2, false);
        assert_eq!(b.len(), 3);
    }

    #[test]
    fn same_seed_same_model() {
        let c = tiny(10);
        let (a, _) = train(&c, &small(3)).unwrap();
        let (b, _) = train(&c, &small(3)).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        let mut other = small(3);
        other.seed = 1;
        let (d, _) = train(&c, &other).unwrap();
        assert_ne!(a.to_bytes(), d.to_bytes());
    }

    #[test]
    fn resume_equals_uninterrupted_run() {
        let c = tiny(11);
        let mut cfg = small(4);
        cfg.kl_warmup_steps = 5;
        let mut full = Trainer::new(cfg.clone(), 6).unwrap();
        full.run(&c, None, None).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let mut first = Trainer::new(cfg, 6).unwrap();
        first.run_epoch(&c, None).unwrap();
        first.run_epoch(&c, None).unwrap();
        let path = dir.path().join("ck.bin");
        first.save_checkpoint(&path).unwrap();
        let mut resumed = Trainer::load_checkpoint(&path).unwrap();
        assert_eq!(resumed.adam, first.adam);
        resumed.run(&c, None, None).unwrap();
        assert_eq!(resumed.model().to_bytes(), full.model().to_bytes());
        assert_eq!(resumed.adam, full.adam);
        assert_eq!(resumed.step(), full.step());
    }

    #[test]
    fn periodic_checkpoints_are_written() {
        let c = tiny(8);
        let mut cfg = small(4);
        cfg.eval_every = 2;
        let dir = tempfile::tempdir().unwrap();
        let mut t = Trainer::new(cfg, 6).unwrap();
        t.run(&c, Some(&c), Some(dir.path())).unwrap();
        assert!(dir.path().join("checkpoint-00002.bin").exists());
        assert!(dir.path().join("checkpoint-00004.bin").exists());
        let ppl: Vec<bool> = t.trace().epochs.iter().map(|e| e.heldout_perplexity.is_some()).collect();
        assert_eq!(ppl, vec![false, true, false, true]);
        let lines = t.trace().to_json_lines();
        assert_eq!(lines.lines().count(), 4);
    }

    #[test]
    fn divergence_is_reported_with_checkpoint_reference() {
        let c = tiny(8);
        let mut cfg = small(1);
        cfg.batch_norm = false;
        let mut t = Trainer::new(cfg, 6).unwrap();
        t.model.decoder_mut().beta.as_mut_slice()[0] = f64::NAN;
        let err = t.run(&c, None, None).unwrap_err();
        assert!(matches!(err, TrainError::Diverged { epoch: 0, .. }), "{err}");
        assert!(err.to_string().contains("no checkpoint"));
    }

    #[test]
    fn collapse_scores() {
        let mut cfg = ModelConfig::new(3, 12, DecoderKind::ProdLda);
        cfg.batch_norm = false;
        cfg.hidden = vec![4];
        let mut m = TopicModel::new(cfg, 0).unwrap();
        let row: Vec<f64> = (0..12).map(|i| i as f64).collect();
        m.decoder_mut().beta = crate::nn::Tensor2::from_rows(&[row.clone(), row.clone(), row]).unwrap();
        assert_eq!(detect_collapse(&m, 3).unwrap(), 0.0);
        let mut eye = crate::nn::Tensor2::zeros(3, 12);
        for k in 0..3 {
            for w in 0..4 {
                eye.row_mut(k)[4 * k + w] = 5.0;
            }
        }
        m.decoder_mut().beta = eye;
        assert_eq!(detect_collapse(&m, 4).unwrap(), 1.0);
    }

    #[test]
    fn config_validation() {
        let mut c = small(1);
        c.batch_size = 1;
        assert!(Trainer::new(c.clone(), 6).is_err());
        c.batch_norm = false;
        assert!(Trainer::new(c, 6).is_ok());
        let mut c = small(1);
        c.learning_rate = 0.0;
        assert!(Trainer::new(c, 6).is_err());
    }
}
