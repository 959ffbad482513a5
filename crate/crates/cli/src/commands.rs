use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use avitm::avitm::{PriorKind, TopicModel};
use avitm::corpus::{
    self, english_stopwords, generate_synthetic, ingest_plaintext, ingest_uci_bow, load_corpus_dir, load_stopwords,
    save_corpus_dir, Corpus, PlaintextOptions, SyntheticSpec, TopicShape, Tokenizer,
};
use avitm::eval::{self, EvalReport, InferenceSummary, RefineOptions, Smoothing};
use avitm::gibbs::{self, GibbsConfig, GibbsState};
use avitm::nn::Tensor2;
use avitm::rng;
use avitm::trainer::{self, TrainConfig, Trainer};

use crate::manifest::Manifest;
use crate::{
    AblateArgs, CollapseArgs, Command, EvalArgs, GibbsArgs, IngestArgs, ModelArgs, PriorArg, ShapeArg, SmoothingArg,
    SynthArgs, TopicsArgs, TrainArgs,
};

pub const MODEL_FILE: &str = "model.bin";
pub const REPORT_FILE: &str = "report.txt";
pub const REPORT_JSON_FILE: &str = "report.json";
pub const TRACE_FILE: &str = "trace.log";
pub const TOPICS_FILE: &str = "topics.txt";
pub const THETA_FILE: &str = "theta.txt";

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Ingest(a) => ingest(&a),
        Command::Synth(a) => synth(&a),
        Command::Train(a) => train(&a),
        Command::Gibbs(a) => gibbs_cmd(&a),
        Command::Eval(a) => evaluate(&a),
        Command::Topics(a) => topics(&a),
        Command::CollapseDemo(a) => collapse_demo(&a),
        Command::Ablate(a) => ablate(&a),
    }
}

fn prepare_out(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

fn write_text(out: &Path, name: &str, text: &str) -> Result<()> {
    let path = out.join(name);
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_matrix(out: &Path, name: &str, m: &Tensor2) -> Result<()> {
    let path = out.join(name);
    let f = fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?;
    eval::write_topic_matrix(BufWriter::new(f), m)?;
    Ok(())
}

fn load_corpus(dir: &Path) -> Result<Corpus> {
    load_corpus_dir(dir).with_context(|| format!("loading corpus from {}", dir.display()))
}

fn load_model(path: &Path, corpus: &Corpus) -> Result<TopicModel> {
    let model = TopicModel::load(path).with_context(|| format!("loading model {}", path.display()))?;
    ensure!(
        model.vocab_size() == corpus.vocab_size(),
        "model has a vocabulary of {} words but the corpus has {}",
        model.vocab_size(),
        corpus.vocab_size()
    );
    Ok(model)
}

/// Train/test split, or the whole corpus for training when the fraction is
/// zero or the corpus is too small to split.
fn split_corpus(corpus: &Corpus, test_fraction: f64, seed: u64) -> Result<(Corpus, Option<Corpus>)> {
    ensure!((0.0..1.0).contains(&test_fraction), "test fraction must be in [0, 1)");
    if test_fraction == 0.0 || corpus.len() < 2 {
        return Ok((corpus.clone(), None));
    }
    let (train, test) = corpus::split(corpus, test_fraction, seed)?;
    Ok((train, Some(test)))
}

pub fn train_config(a: &ModelArgs) -> Result<TrainConfig> {
    let mut c = trainer::preset(&a.preset)?;
    c.decoder = a.decoder;
    c.topics = a.topics;
    c.hidden = a.hidden.clone();
    c.epochs = a.epochs;
    c.batch_size = a.batch_size;
    c.seed = a.seed;
    c.kl_warmup_steps = a.kl_warmup;
    c.clip_norm = a.clip_norm;
    match (a.prior, a.alpha) {
        (Some(PriorArg::Gaussian), Some(_)) => bail!("--alpha applies only to the Dirichlet prior"),
        (Some(PriorArg::Gaussian), None) => c.prior = PriorKind::Gaussian,
        (Some(PriorArg::Dirichlet), alpha) => {
            c.prior = PriorKind::Dirichlet {
                alpha: alpha.unwrap_or(0.02),
            }
        }
        (None, Some(alpha)) => match c.prior {
            PriorKind::Dirichlet { .. } => c.prior = PriorKind::Dirichlet { alpha },
            PriorKind::Gaussian => bail!("--alpha given but preset `{}` uses the Gaussian prior", a.preset),
        },
        (None, None) => {}
    }
    if let Some(v) = a.learning_rate {
        c.learning_rate = v;
    }
    if let Some(v) = a.beta1 {
        c.beta1 = v;
    }
    if let Some(v) = a.beta2 {
        c.beta2 = v;
    }
    if let Some(v) = a.batch_norm {
        c.batch_norm = v;
    }
    if let Some(v) = a.dropout {
        c.dropout = v;
    }
    c.validate()?;
    Ok(c)
}

fn smoothing(a: SmoothingArg) -> Smoothing {
    match a {
        SmoothingArg::Fixed => Smoothing::default(),
        SmoothingArg::InverseDocs => Smoothing::InverseDocs,
    }
}

fn ingest(a: &IngestArgs) -> Result<()> {
    prepare_out(&a.out)?;
    let mut manifest = Manifest::new("ingest");
    let mut report = String::new();
    let corpus = match (&a.text_dir, &a.docword, &a.vocab) {
        (Some(dir), None, _) => {
            let stop = match &a.stopwords {
                Some(p) => {
                    manifest.input(p)?;
                    load_stopwords(p)?
                }
                None => english_stopwords(),
            };
            let opts = PlaintextOptions {
                tokenizer: Tokenizer {
                    min_token_len: a.min_token_len,
                },
                min_doc_freq: a.min_doc_freq,
                max_vocab: a.max_vocab,
            };
            let ing = ingest_plaintext(dir, &stop, &opts)?;
            manifest.input(dir)?;
            manifest
                .setting("max_vocab", a.max_vocab)
                .setting("min_doc_freq", a.min_doc_freq)
                .setting("min_token_len", a.min_token_len);
            let _ = writeln!(report, "{:<18}{}", "files read", ing.files_read);
            let _ = writeln!(report, "{:<18}{}", "empty dropped", ing.dropped);
            ing.corpus
        }
        (None, Some(docword), Some(vocab)) => {
            manifest.input(docword)?.input(vocab)?;
            ingest_uci_bow(docword, vocab)?
        }
        _ => bail!("give either --text-dir or --docword with --vocab"),
    };
    save_corpus_dir(&corpus, &a.out)?;
    let _ = writeln!(report, "{:<18}{}", "documents", corpus.len());
    let _ = writeln!(report, "{:<18}{}", "vocabulary", corpus.vocab_size());
    let _ = writeln!(report, "{:<18}{}", "tokens", corpus.total_tokens());
    write_text(&a.out, REPORT_FILE, &report)?;
    manifest
        .output(&a.out, corpus::DOCWORD_FILE)?
        .output(&a.out, corpus::VOCAB_FILE)?
        .write(&a.out)?;
    print!("{report}");
    Ok(())
}

fn synth(a: &SynthArgs) -> Result<()> {
    prepare_out(&a.out)?;
    let spec = SyntheticSpec {
        topics: a.topics,
        vocab_size: a.vocab_size,
        alpha: a.alpha,
        doc_count: a.docs,
        doc_length: a.doc_length,
        seed: a.seed,
        shape: match a.shape {
            ShapeArg::Bars => TopicShape::Bars,
            ShapeArg::Dirichlet => TopicShape::Dirichlet {
                concentration: a.concentration,
            },
        },
    };
    let syn = generate_synthetic(&spec)?;
    save_corpus_dir(&syn.corpus, &a.out)?;
    write_matrix(&a.out, TOPICS_FILE, &Tensor2::from_rows(&syn.topics)?)?;
    write_matrix(&a.out, THETA_FILE, &Tensor2::from_rows(&syn.theta)?)?;
    let report = format!(
        "{:<12}{}\n{:<12}{}\n{:<12}{}\n",
        "documents",
        syn.corpus.len(),
        "vocabulary",
        syn.corpus.vocab_size(),
        "tokens",
        syn.corpus.total_tokens()
    );
    write_text(&a.out, REPORT_FILE, &report)?;
    Manifest::new("synth")
        .setting("spec", format!("{spec:?}"))
        .output(&a.out, corpus::DOCWORD_FILE)?
        .output(&a.out, corpus::VOCAB_FILE)?
        .output(&a.out, TOPICS_FILE)?
        .write(&a.out)?;
    Ok(())
}

/// Top words, coherence on `reference` and, given a model and held-out
/// corpus, perplexity.
fn model_report(
    model: &TopicModel,
    reference: &Corpus,
    heldout: Option<&Corpus>,
    top_n: usize,
    seed: u64,
) -> Result<EvalReport> {
    let n = top_n.min(reference.vocab_size());
    let words = eval::top_words(&model.effective_topics()?, reference.vocab(), n)?;
    let coherence = eval::npmi_coherence(&words, reference, Smoothing::default())?;
    let mut report = EvalReport::new(words).with_coherence(coherence);
    if let Some(h) = heldout {
        report.perplexity = Some(eval::perplexity(model, h, 1, seed)?);
    }
    Ok(report)
}

fn train(a: &TrainArgs) -> Result<()> {
    prepare_out(&a.out)?;
    let corpus = load_corpus(&a.corpus)?;
    let mut trainer = match &a.resume {
        Some(path) => {
            let t = Trainer::load_checkpoint(path).with_context(|| format!("resuming from {}", path.display()))?;
            eprintln!(
                "resuming at epoch {} of {}; the checkpoint's settings take precedence",
                t.epoch(),
                t.config().epochs
            );
            t
        }
        None => {
            let config = TrainConfig {
                eval_every: a.eval_every,
                ..train_config(&a.model)?
            };
            Trainer::new(config, corpus.vocab_size())?
        }
    };
    let config = trainer.config().clone();
    let (train_split, test_split) = split_corpus(&corpus, a.test_fraction, config.seed)?;
    trainer.run(&train_split, test_split.as_ref(), Some(&a.out.join("checkpoints")))?;

    let (model, trace) = trainer.into_parts();
    model.save(&a.out.join(MODEL_FILE))?;
    write_text(&a.out, TRACE_FILE, &trace.to_json_lines())?;
    let report = model_report(&model, &train_split, test_split.as_ref(), a.top_n, config.seed)?;
    write_text(&a.out, REPORT_FILE, &report.to_table())?;
    write_text(&a.out, REPORT_JSON_FILE, &report.to_json())?;
    Manifest::new("train")
        .setting("train_config", serde_json::to_string(&config)?)
        .setting("test_fraction", a.test_fraction)
        .input(&a.corpus)?
        .output(&a.out, MODEL_FILE)?
        .output(&a.out, REPORT_FILE)?
        .write(&a.out)?;
    print!("{}", report.to_table());
    Ok(())
}

fn gibbs_cmd(a: &GibbsArgs) -> Result<()> {
    prepare_out(&a.out)?;
    let corpus = load_corpus(&a.corpus)?;
    let cfg = GibbsConfig {
        topics: a.topics,
        alpha: a.alpha,
        eta: a.eta,
        seed: a.seed,
    };
    let mut chain = GibbsState::init(&corpus, &cfg)?;
    let est = chain.estimate(a.burn_in, a.samples, a.thinning)?;
    let beta = est.beta_matrix();
    write_matrix(&a.out, TOPICS_FILE, &beta)?;
    write_matrix(&a.out, THETA_FILE, &Tensor2::from_rows(&est.theta)?)?;

    let n = a.top_n.min(corpus.vocab_size());
    let words = eval::top_words(&beta, corpus.vocab(), n)?;
    let coherence = eval::npmi_coherence(&words, &corpus, Smoothing::default())?;
    let report = EvalReport::new(words).with_coherence(coherence);
    let mut text = report.to_table();
    let mut manifest = Manifest::new("gibbs");
    manifest
        .setting("config", serde_json::to_string(&cfg)?)
        .setting("burn_in", a.burn_in)
        .setting("samples", a.samples)
        .setting("thinning", a.thinning)
        .input(&a.corpus)?;
    if let Some(dir) = &a.heldout {
        let held = load_corpus(dir)?;
        ensure!(held.vocab_size() == corpus.vocab_size(), "held-out corpus uses a different vocabulary");
        let ppl = gibbs::completion_perplexity(&est.beta, &held, a.alpha, 50, a.seed);
        let _ = writeln!(text, "\ncompletion perplexity (diagnostic)  {ppl:.4}");
        manifest.input(dir)?;
    }
    write_text(&a.out, REPORT_FILE, &text)?;
    write_text(&a.out, REPORT_JSON_FILE, &report.to_json())?;
    manifest
        .output(&a.out, TOPICS_FILE)?
        .output(&a.out, REPORT_FILE)?
        .write(&a.out)?;
    print!("{text}");
    Ok(())
}

fn evaluate(a: &EvalArgs) -> Result<()> {
    prepare_out(&a.out)?;
    let corpus = load_corpus(&a.corpus)?;
    let mut manifest = Manifest::new("eval");
    manifest.input(&a.corpus)?;
    let none_chosen = !(a.perplexity || a.coherence || a.sparsity || a.compare_inference);
    let (model, matrix) = match (&a.model, &a.topic_matrix) {
        (Some(path), _) => {
            manifest.input(path)?;
            let m = load_model(path, &corpus)?;
            let t = m.effective_topics()?;
            (Some(m), t)
        }
        (None, Some(path)) => {
            manifest.input(path)?;
            let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
            let t = eval::read_topic_matrix(std::io::BufReader::new(f))?;
            ensure!(
                t.cols() == corpus.vocab_size(),
                "topic matrix has {} columns but the corpus vocabulary has {} words",
                t.cols(),
                corpus.vocab_size()
            );
            (None, t)
        }
        (None, None) => bail!("give --model or --topic-matrix"),
    };
    let n = a.top_n.min(corpus.vocab_size());
    let words = eval::top_words(&matrix, corpus.vocab(), n)?;
    let mut report = EvalReport::new(words.clone());
    if a.coherence || none_chosen {
        report = report.with_coherence(eval::npmi_coherence(&words, &corpus, smoothing(a.smoothing))?);
    }
    if let Some(model) = &model {
        if a.perplexity || none_chosen {
            report.perplexity = Some(eval::perplexity(model, &corpus, a.samples, a.seed)?);
        }
        if a.sparsity {
            let mut r = rng::stream(a.seed, "eval.sparsity");
            report.sparsity = Some(eval::posterior_sparsity(model, &corpus, a.samples, &mut r)?);
        }
        if a.compare_inference {
            let opts = RefineOptions {
                seed: a.seed,
                ..RefineOptions::default()
            };
            let cmp = eval::compare_inference(model, &corpus, &opts)?;
            report.inference = Some(InferenceSummary::from(&cmp));
        }
    }
    write_text(&a.out, REPORT_FILE, &report.to_table())?;
    write_text(&a.out, REPORT_JSON_FILE, &report.to_json())?;
    manifest
        .setting("samples", a.samples)
        .setting("seed", a.seed)
        .output(&a.out, REPORT_FILE)?
        .write(&a.out)?;
    print!("{}", report.to_table());
    Ok(())
}

fn topics(a: &TopicsArgs) -> Result<()> {
    let corpus = load_corpus(&a.corpus)?;
    let matrix = match (&a.model, &a.topic_matrix) {
        (Some(path), _) => load_model(path, &corpus)?.effective_topics()?,
        (None, Some(path)) => {
            let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
            eval::read_topic_matrix(std::io::BufReader::new(f))?
        }
        (None, None) => bail!("give --model or --topic-matrix"),
    };
    let n = a.top_n.min(corpus.vocab_size());
    for (k, words) in eval::top_words(&matrix, corpus.vocab(), n)?.iter().enumerate() {
        println!("topic {k:>3}: {}", words.join(" "));
    }
    Ok(())
}

fn collapse_demo(a: &CollapseArgs) -> Result<()> {
    prepare_out(&a.out)?;
    let mut manifest = Manifest::new("collapse-demo");
    let corpus = match &a.corpus {
        Some(dir) => {
            manifest.input(dir)?;
            load_corpus(dir)?
        }
        None => generate_synthetic(&SyntheticSpec::bars_benchmark(a.seed))?.corpus,
    };
    let base = TrainConfig {
        topics: a.topics,
        epochs: a.epochs,
        batch_size: a.batch_size,
        seed: a.seed,
        ..trainer::preset("high-lr-bn")?
    };
    let collapse = base.with_regime(&TrainConfig::collapse_inducing());
    let mut text = String::new();
    let mut scores = Vec::new();
    for (label, cfg) in [("high-lr-bn", &base), ("collapse-prone", &collapse)] {
        let (model, _) = trainer::train(&corpus, cfg)?;
        let n = a.top_n.min(corpus.vocab_size());
        let words = eval::top_words(&model.effective_topics()?, corpus.vocab(), n)?;
        let diversity = eval::topic_diversity(&words);
        scores.push(diversity);
        let _ = writeln!(
            text,
            "{label}  (lr {}, beta1 {}, batch norm {})  diversity {diversity:.4}",
            cfg.learning_rate, cfg.beta1, cfg.batch_norm
        );
        for (k, w) in words.iter().enumerate() {
            let _ = writeln!(text, "  topic {k:>3}: {}", w.join(" "));
        }
        let _ = writeln!(text);
    }
    let verdict = if scores[1] < scores[0] { "yes" } else { "no" };
    let _ = writeln!(text, "collapse reproduced: {verdict}");
    write_text(&a.out, REPORT_FILE, &text)?;
    manifest
        .setting("base", serde_json::to_string(&base)?)
        .output(&a.out, REPORT_FILE)?
        .write(&a.out)?;
    print!("{text}");
    Ok(())
}

fn ablate(a: &AblateArgs) -> Result<()> {
    prepare_out(&a.out)?;
    let corpus = load_corpus(&a.corpus)?;
    let (train_split, test_split) = split_corpus(&corpus, a.test_fraction, a.seed)?;
    let test_split = test_split.context("ablation needs a held-out split; use a positive --test-fraction")?;
    let decoders = match a.decoder {
        Some(d) => vec![d],
        None => vec![avitm::avitm::DecoderKind::ProdLda, avitm::avitm::DecoderKind::Lda],
    };
    let mut rows = Vec::new();
    for decoder in decoders {
        let base = TrainConfig {
            decoder,
            topics: a.topics,
            hidden: a.hidden.clone(),
            epochs: a.epochs,
            batch_size: a.batch_size,
            seed: a.seed,
            ..TrainConfig::default()
        };
        rows.extend(trainer::ablate(&train_split, &test_split, &base, &trainer::PRESETS, a.top_n)?);
    }
    let table = trainer::ablation_table(&rows);
    write_text(&a.out, REPORT_FILE, &table)?;
    write_text(&a.out, REPORT_JSON_FILE, &serde_json::to_string_pretty(&rows)?)?;
    Manifest::new("ablate")
        .setting("topics", a.topics)
        .setting("epochs", a.epochs)
        .setting("seed", a.seed)
        .input(&a.corpus)?
        .output(&a.out, REPORT_FILE)?
        .write(&a.out)?;
    print!("{table}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Cli;
    use clap::Parser;

    fn model_args(extra: &[&str]) -> ModelArgs {
        let mut argv = vec!["avitm", "train", "--corpus", "c", "--out", "o"];
        argv.extend_from_slice(extra);
        match Cli::try_parse_from(argv).unwrap().command {
            Command::Train(t) => t.model,
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn explicit_flags_override_preset() {
        let c = train_config(&model_args(&["--preset", "low-lr-no-bn", "--learning-rate", "0.01", "--batch-norm", "on"]))
            .unwrap();
        assert_eq!(c.learning_rate, 0.01);
        assert!(c.batch_norm);
        assert_eq!(c.beta1, 0.99);
    }

    #[test]
    fn prior_flags() {
        let g = train_config(&model_args(&["--prior", "gaussian"])).unwrap();
        assert_eq!(g.prior, PriorKind::Gaussian);
        let d = train_config(&model_args(&["--alpha", "0.5"])).unwrap();
        assert_eq!(d.prior, PriorKind::Dirichlet { alpha: 0.5 });
        assert!(train_config(&model_args(&["--prior", "gaussian", "--alpha", "1"])).is_err());
        assert!(train_config(&model_args(&["--preset", "gaussian-high", "--alpha", "1"])).is_err());
        assert!(train_config(&model_args(&["--preset", "nope"])).is_err());
    }

    #[test]
    fn hidden_list_parses() {
        assert_eq!(model_args(&["--hidden", "7,3"]).hidden, vec![7, 3]);
    }
}
