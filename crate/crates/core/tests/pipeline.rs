//! End-to-end use of the library: generate, split, train, persist, score.

use avitm::avitm::{DecoderKind, TopicModel};
use avitm::corpus::{generate_synthetic, load_corpus_dir, save_corpus_dir, split, SyntheticSpec};
use avitm::eval::{self, Smoothing};
use avitm::gibbs::{GibbsConfig, GibbsState};
use avitm::trainer::{self, TrainConfig};

fn config(decoder: DecoderKind, epochs: usize) -> TrainConfig {
    TrainConfig {
        topics: 5,
        hidden: vec![32, 32],
        decoder,
        epochs,
        batch_size: 64,
        ..trainer::preset("high-lr-bn").unwrap()
    }
}

#[test]
fn train_persist_and_score() {
    let syn = generate_synthetic(&SyntheticSpec::bars_benchmark(0)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_corpus_dir(&syn.corpus, dir.path()).unwrap();
    let corpus = load_corpus_dir(dir.path()).unwrap();
    assert_eq!(corpus.docs(), syn.corpus.docs());

    let (train, test) = split(&corpus, 0.2, 0).unwrap();
    for decoder in [DecoderKind::ProdLda, DecoderKind::Lda] {
        let (model, trace) = trainer::train(&train, &config(decoder, 40)).unwrap();
        // Three-epoch means smooth out minibatch noise.
        let elbo = trace.train_elbo();
        let head = elbo[..3].iter().sum::<f64>() / 3.0;
        let tail = elbo[elbo.len() - 3..].iter().sum::<f64>() / 3.0;
        assert!(tail > head, "{decoder}: {elbo:?}");

        let path = dir.path().join(format!("{decoder}.bin"));
        model.save(&path).unwrap();
        let back = TopicModel::load(&path).unwrap();
        let a = eval::perplexity(&model, &test, 2, 7).unwrap();
        let b = eval::perplexity(&back, &test, 2, 7).unwrap();
        assert_eq!(a, b);
        // A uniform word distribution scores exactly the vocabulary size.
        assert!(a < 25.0, "{decoder} held-out perplexity {a}");

        let words = eval::top_words(&model.effective_topics().unwrap(), train.vocab(), 5).unwrap();
        let c = eval::npmi_coherence(&words, &train, Smoothing::default()).unwrap();
        assert!(c.per_topic.iter().all(|v| (-1.0..=1.0).contains(v)));
    }
}

#[test]
fn gibbs_matrix_round_trips_through_text() {
    let syn = generate_synthetic(&SyntheticSpec::bars_benchmark(2)).unwrap();
    let mut chain = GibbsState::init(&syn.corpus, &GibbsConfig::new(5)).unwrap();
    let est = chain.estimate(50, 5, 2).unwrap();
    chain.audit().unwrap();
    let mut buf = Vec::new();
    eval::write_topic_matrix(&mut buf, &est.beta_matrix()).unwrap();
    let back = eval::read_topic_matrix(buf.as_slice()).unwrap();
    assert_eq!(back.to_rows(), est.beta);
    let cos = eval::best_match_cosine(&est.beta, &syn.topics);
    assert!(cos.iter().all(|&c| c > 0.8), "{cos:?}");
}
