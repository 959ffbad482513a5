//! Vocabulary-indexed sparse bag-of-words corpora.
//!
//! Corpora come from three places: a directory of plain-text files, the UCI
//! bag-of-words layout (`docword` + `vocab` files), or the synthetic LDA
//! generator. Documents with no tokens are never stored.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{softmax_in_place, Tensor2};
use crate::rng;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },
    #[error("invalid vocabulary: {0}")]
    Vocabulary(String),
    #[error("ingestion produced an empty vocabulary")]
    EmptyVocabulary,
    #[error("word id {word} is out of range for a vocabulary of {vocab_size}")]
    WordOutOfRange { word: usize, vocab_size: usize },
    #[error("{0}")]
    InvalidArgument(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Ordered list of distinct tokens; a token's id is its position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    pub fn new(tokens: Vec<String>) -> Result<Self, CorpusError> {
        if tokens.len() < 2 {
            return Err(CorpusError::Vocabulary(format!(
                "need at least 2 tokens, got {}",
                tokens.len()
            )));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(CorpusError::Vocabulary(format!("duplicate token `{t}`")));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).map(|&i| i as usize)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Sparse count vector, sorted by word id, every count ≥ 1.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Document {
    entries: Vec<(u32, u32)>,
}

impl Document {
    /// Builds a document from `(word, count)` pairs. Duplicate words are
    /// summed and zero counts dropped.
    pub fn from_counts(pairs: impl IntoIterator<Item = (usize, u32)>) -> Self {
        let mut acc: BTreeMap<u32, u32> = BTreeMap::new();
        for (w, c) in pairs {
            if c > 0 {
                *acc.entry(w as u32).or_default() += c;
            }
        }
        Self {
            entries: acc.into_iter().collect(),
        }
    }

    pub fn from_tokens(ids: impl IntoIterator<Item = usize>) -> Self {
        Self::from_counts(ids.into_iter().map(|w| (w, 1)))
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.entries.iter().map(|&(w, c)| (w as usize, c))
    }

    /// Number of distinct words.
    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn len(&self) -> u64 {
        self.entries.iter().map(|&(_, c)| c as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count(&self, word: usize) -> u32 {
        self.entries
            .binary_search_by_key(&(word as u32), |&(w, _)| w)
            .map(|i| self.entries[i].1)
            .unwrap_or(0)
    }

    pub fn contains(&self, word: usize) -> bool {
        self.count(word) > 0
    }

    /// Word ids repeated by count, in id order.
    pub fn tokens(&self) -> Vec<usize> {
        self.entries
            .iter()
            .flat_map(|&(w, c)| std::iter::repeat_n(w as usize, c as usize))
            .collect()
    }

    pub fn to_dense(&self, vocab_size: usize) -> Vec<f64> {
        let mut out = vec![0.0; vocab_size];
        for &(w, c) in &self.entries {
            out[w as usize] = c as f64;
        }
        out
    }
}

/// Documents over a shared vocabulary. Immutable once built.
#[derive(Debug, Clone)]
pub struct Corpus {
    vocab: Arc<Vocabulary>,
    docs: Vec<Document>,
    total_tokens: u64,
}

impl Corpus {
    /// Validates word ids and drops empty documents.
    pub fn new(vocab: Arc<Vocabulary>, docs: Vec<Document>) -> Result<Self, CorpusError> {
        let v = vocab.len();
        for doc in &docs {
            if let Some((w, _)) = doc.entries().find(|&(w, _)| w >= v) {
                return Err(CorpusError::WordOutOfRange {
                    word: w,
                    vocab_size: v,
                });
            }
        }
        let docs: Vec<Document> = docs.into_iter().filter(|d| !d.is_empty()).collect();
        let total_tokens = docs.iter().map(Document::len).sum();
        Ok(Self {
            vocab,
            docs,
            total_tokens,
        })
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn shared_vocab(&self) -> Arc<Vocabulary> {
        Arc::clone(&self.vocab)
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    /// Dense `rows × V` count matrix for the selected documents.
    pub fn dense_batch(&self, indices: &[usize]) -> Tensor2 {
        let v = self.vocab_size();
        let mut out = Tensor2::zeros(indices.len(), v);
        for (r, &d) in indices.iter().enumerate() {
            let row = out.row_mut(r);
            for (w, c) in self.docs[d].entries() {
                row[w] = c as f64;
            }
        }
        out
    }

    pub fn subset(&self, indices: &[usize]) -> Corpus {
        let docs: Vec<Document> = indices.iter().map(|&i| self.docs[i].clone()).collect();
        let total_tokens = docs.iter().map(Document::len).sum();
        Corpus {
            vocab: Arc::clone(&self.vocab),
            docs,
            total_tokens,
        }
    }
}

// ---------------------------------------------------------------------------
// Plain-text ingestion

/// Lowercased alphabetic runs of at least `min_token_len` characters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tokenizer {
    pub min_token_len: usize,
}

impl Default for Tokenizer {
    fn default() -> Self {
        Self { min_token_len: 2 }
    }
}

impl Tokenizer {
    pub fn tokenize<'a>(&self, text: &'a str) -> impl Iterator<Item = String> + 'a {
        let min = self.min_token_len;
        text.split(|c: char| !c.is_alphabetic())
            .filter(move |t| t.chars().count() >= min)
            .map(str::to_lowercase)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlaintextOptions {
    pub tokenizer: Tokenizer,
    pub min_doc_freq: usize,
    pub max_vocab: usize,
}

impl Default for PlaintextOptions {
    fn default() -> Self {
        Self {
            tokenizer: Tokenizer::default(),
            min_doc_freq: 1,
            max_vocab: 2000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlaintextIngest {
    pub corpus: Corpus,
    /// Source file of each stored document, in corpus order.
    pub sources: Vec<PathBuf>,
    pub files_read: usize,
    /// Documents with no in-vocabulary tokens.
    pub dropped: usize,
}

/// A small English stopword list, used when none is supplied.
pub const ENGLISH_STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "all", "am", "an", "and", "any", "are",
    "as", "at", "be", "because", "been", "before", "being", "below", "between", "both", "but",
    "by", "can", "could", "did", "do", "does", "doing", "down", "during", "each", "few", "for",
    "from", "further", "had", "has", "have", "having", "he", "her", "here", "hers", "herself",
    "him", "himself", "his", "how", "i", "if", "in", "into", "is", "it", "its", "itself", "just",
    "me", "more", "most", "my", "myself", "no", "nor", "not", "now", "of", "off", "on", "once",
    "only", "or", "other", "our", "ours", "ourselves", "out", "over", "own", "same", "she",
    "should", "so", "some", "such", "than", "that", "the", "their", "theirs", "them",
    "themselves", "then", "there", "these", "they", "this", "those", "through", "to", "too",
    "under", "until", "up", "very", "was", "we", "were", "what", "when", "where", "which",
    "while", "who", "whom", "why", "will", "with", "would", "you", "your", "yours", "yourself",
    "yourselves",
];

pub fn english_stopwords() -> HashSet<String> {
    ENGLISH_STOPWORDS.iter().map(|s| s.to_string()).collect()
}

/// Reads a stopword list, one token per line. Blank lines are ignored and
/// tokens are lowercased.
pub fn load_stopwords(path: &Path) -> Result<HashSet<String>, CorpusError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_lowercase)
        .collect())
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), CorpusError> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(io_err(dir))?;
    entries.sort();
    for path in entries {
        if path.is_dir() {
            collect_files(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

/// Builds a corpus from every file under `dir` (recursively, in path order).
///
/// The vocabulary keeps the `max_vocab` tokens with the highest document
/// frequency among those appearing in at least `min_doc_freq` documents,
/// ties broken lexicographically, and is stored in lexicographic order.
/// Bytes that are not valid UTF-8 are discarded.
pub fn ingest_plaintext(
    dir: &Path,
    stopwords: &HashSet<String>,
    options: &PlaintextOptions,
) -> Result<PlaintextIngest, CorpusError> {
    if options.max_vocab < 2 {
        return Err(CorpusError::InvalidArgument(
            "max-vocab must be at least 2".into(),
        ));
    }
    let mut files = Vec::new();
    collect_files(dir, &mut files)?;
    if files.is_empty() {
        return Err(CorpusError::InvalidArgument(format!(
            "{} contains no documents",
            dir.display()
        )));
    }

    let mut tokenized: Vec<Vec<String>> = Vec::with_capacity(files.len());
    let mut doc_freq: HashMap<String, usize> = HashMap::new();
    for path in &files {
        let bytes = fs::read(path).map_err(io_err(path))?;
        let text = String::from_utf8_lossy(&bytes);
        let tokens: Vec<String> = options
            .tokenizer
            .tokenize(&text)
            .filter(|t| !stopwords.contains(t))
            .collect();
        let distinct: HashSet<&String> = tokens.iter().collect();
        for t in distinct {
            *doc_freq.entry(t.clone()).or_default() += 1;
        }
        tokenized.push(tokens);
    }

    let mut ranked: Vec<(String, usize)> = doc_freq
        .into_iter()
        .filter(|&(_, df)| df >= options.min_doc_freq)
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(options.max_vocab);
    if ranked.is_empty() {
        return Err(CorpusError::EmptyVocabulary);
    }
    let mut tokens: Vec<String> = ranked.into_iter().map(|(t, _)| t).collect();
    tokens.sort();
    let vocab = Arc::new(Vocabulary::new(tokens)?);

    let mut docs = Vec::new();
    let mut sources = Vec::new();
    let mut dropped = 0;
    for (path, toks) in files.iter().zip(&tokenized) {
        let doc = Document::from_tokens(toks.iter().filter_map(|t| vocab.id(t)));
        if doc.is_empty() {
            dropped += 1;
        } else {
            docs.push(doc);
            sources.push(path.clone());
        }
    }
    Ok(PlaintextIngest {
        corpus: Corpus::new(vocab, docs)?,
        sources,
        files_read: files.len(),
        dropped,
    })
}

// ---------------------------------------------------------------------------
// UCI bag-of-words

fn parse_err(file: &str, line: usize, message: impl Into<String>) -> CorpusError {
    CorpusError::Parse {
        file: file.to_string(),
        line,
        message: message.into(),
    }
}

fn parse_fields<const N: usize>(text: &str, file: &str, line: usize) -> Result<[u64; N], CorpusError> {
    let mut out = [0u64; N];
    let mut parts = text.split_whitespace();
    for slot in out.iter_mut() {
        let field = parts
            .next()
            .ok_or_else(|| parse_err(file, line, format!("expected {N} integers")))?;
        *slot = field
            .parse()
            .map_err(|_| parse_err(file, line, format!("`{field}` is not a non-negative integer")))?;
    }
    if parts.next().is_some() {
        return Err(parse_err(file, line, format!("expected {N} integers")));
    }
    Ok(out)
}

/// Parses the UCI bag-of-words layout: a `docword` stream with the header
/// lines `D`, `W`, `NNZ` followed by `docId wordId count` triples (1-indexed),
/// and a `vocab` stream with one token per line.
pub fn parse_uci_bow<R1: BufRead, R2: BufRead>(
    docword: R1,
    vocab: R2,
) -> Result<Corpus, CorpusError> {
    const DOCWORD: &str = "docword";
    const VOCAB: &str = "vocab";

    let tokens: Vec<String> = vocab
        .lines()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| parse_err(VOCAB, 0, e.to_string()))?
        .into_iter()
        .map(|l| l.trim().to_string())
        .filter(|l| !l.is_empty())
        .collect();

    // Header values may be on one line or on three; gather the first three integers.
    let mut lines = docword.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut header = Vec::with_capacity(3);
    let mut header_line = 0;
    while header.len() < 3 {
        let (no, line) = lines
            .next()
            .ok_or_else(|| parse_err(DOCWORD, header_line + 1, "missing D, W, NNZ header"))?;
        let line = line.map_err(|e| parse_err(DOCWORD, no, e.to_string()))?;
        header_line = no;
        for field in line.split_whitespace() {
            let v: u64 = field
                .parse()
                .map_err(|_| parse_err(DOCWORD, no, format!("bad header value `{field}`")))?;
            header.push(v);
        }
    }
    if header.len() != 3 {
        return Err(parse_err(DOCWORD, header_line, "header must be exactly D, W, NNZ"));
    }
    let (d, w, nnz) = (header[0] as usize, header[1] as usize, header[2] as usize);
    if w != tokens.len() {
        return Err(parse_err(
            DOCWORD,
            header_line,
            format!("header says W = {w} but the vocabulary has {} tokens", tokens.len()),
        ));
    }
    let vocab = Arc::new(Vocabulary::new(tokens)?);

    let mut docs: Vec<BTreeMap<u32, u32>> = vec![BTreeMap::new(); d];
    let mut seen = 0usize;
    for (no, line) in lines {
        let line = line.map_err(|e| parse_err(DOCWORD, no, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let [doc, word, count] = parse_fields::<3>(&line, DOCWORD, no)?;
        if doc == 0 || doc as usize > d {
            return Err(parse_err(DOCWORD, no, format!("docId {doc} outside 1..={d}")));
        }
        if word == 0 || word as usize > w {
            return Err(parse_err(DOCWORD, no, format!("wordId {word} outside 1..={w}")));
        }
        if count < 1 {
            return Err(parse_err(DOCWORD, no, "count must be at least 1"));
        }
        let count = u32::try_from(count).map_err(|_| parse_err(DOCWORD, no, "count too large"))?;
        if docs[doc as usize - 1].insert(word as u32 - 1, count).is_some() {
            return Err(parse_err(
                DOCWORD,
                no,
                format!("duplicate entry for doc {doc}, word {word}"),
            ));
        }
        seen += 1;
    }
    if seen != nnz {
        return Err(parse_err(
            DOCWORD,
            header_line,
            format!("header says NNZ = {nnz} but found {seen} entries"),
        ));
    }
    let docs = docs
        .into_iter()
        .map(|m| Document {
            entries: m.into_iter().collect(),
        })
        .collect();
    Corpus::new(vocab, docs)
}

pub fn ingest_uci_bow(docword: &Path, vocab: &Path) -> Result<Corpus, CorpusError> {
    let dw = fs::File::open(docword).map_err(io_err(docword))?;
    let vf = fs::File::open(vocab).map_err(io_err(vocab))?;
    parse_uci_bow(BufReader::new(dw), BufReader::new(vf)).map_err(|e| match e {
        CorpusError::Parse {
            file,
            line,
            message,
        } => {
            let file = if file == "vocab" { vocab } else { docword };
            CorpusError::Parse {
                file: file.display().to_string(),
                line,
                message,
            }
        }
        other => other,
    })
}

pub fn write_uci_bow<W1: Write, W2: Write>(
    corpus: &Corpus,
    mut docword: W1,
    mut vocab: W2,
) -> io::Result<()> {
    let nnz: usize = corpus.docs.iter().map(Document::nnz).sum();
    writeln!(docword, "{}", corpus.len())?;
    writeln!(docword, "{}", corpus.vocab_size())?;
    writeln!(docword, "{nnz}")?;
    for (d, doc) in corpus.docs.iter().enumerate() {
        for (w, c) in doc.entries() {
            writeln!(docword, "{} {} {}", d + 1, w + 1, c)?;
        }
    }
    for t in corpus.vocab.tokens() {
        writeln!(vocab, "{t}")?;
    }
    docword.flush()?;
    vocab.flush()
}

/// File names used for a corpus stored in a directory.
pub const DOCWORD_FILE: &str = "docword.txt";
pub const VOCAB_FILE: &str = "vocab.txt";

pub fn save_corpus_dir(corpus: &Corpus, dir: &Path) -> Result<(), CorpusError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let dw = dir.join(DOCWORD_FILE);
    let vf = dir.join(VOCAB_FILE);
    let a = io::BufWriter::new(fs::File::create(&dw).map_err(io_err(&dw))?);
    let b = io::BufWriter::new(fs::File::create(&vf).map_err(io_err(&vf))?);
    write_uci_bow(corpus, a, b).map_err(io_err(dir))
}

pub fn load_corpus_dir(dir: &Path) -> Result<Corpus, CorpusError> {
    ingest_uci_bow(&dir.join(DOCWORD_FILE), &dir.join(VOCAB_FILE))
}

// ---------------------------------------------------------------------------
// Splitting

/// Random train/test partition. The test side gets `round(fraction · D)`
/// documents, clamped so both sides keep at least one; the relative order of
/// documents is preserved on each side.
pub fn split(corpus: &Corpus, test_fraction: f64, seed: u64) -> Result<(Corpus, Corpus), CorpusError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(CorpusError::InvalidArgument(format!(
            "test fraction must be in (0, 1), got {test_fraction}"
        )));
    }
    let n = corpus.len();
    if n < 2 {
        return Err(CorpusError::InvalidArgument(format!(
            "cannot split a corpus of {n} document(s) into two non-empty parts"
        )));
    }
    let n_test = ((test_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, "corpus.split"));
    let mut test: Vec<usize> = order[..n_test].to_vec();
    let mut train: Vec<usize> = order[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((corpus.subset(&train), corpus.subset(&test)))
}

// ---------------------------------------------------------------------------
// Synthetic LDA corpora

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TopicShape {
    /// Topic k is uniform over the k-th of K contiguous, disjoint vocabulary
    /// blocks.
    Bars,
    /// Each topic is a draw from a symmetric Dirichlet over the vocabulary.
    Dirichlet { concentration: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub topics: usize,
    pub vocab_size: usize,
    pub alpha: f64,
    pub doc_count: usize,
    pub doc_length: usize,
    pub seed: u64,
    pub shape: TopicShape,
}

impl SyntheticSpec {
    /// Five bars over 25 words, 500 documents of 50 tokens, α = 0.1.
    pub fn bars_benchmark(seed: u64) -> Self {
        Self {
            topics: 5,
            vocab_size: 25,
            alpha: 0.1,
            doc_count: 500,
            doc_length: 50,
            seed,
            shape: TopicShape::Bars,
        }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |m: String| Err(CorpusError::InvalidArgument(m));
        if self.topics < 1 {
            return bad("need at least one topic".into());
        }
        if self.vocab_size < self.topics.max(2) {
            return bad(format!(
                "vocabulary size {} must be at least the topic count {} and at least 2",
                self.vocab_size, self.topics
            ));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if self.doc_length < 1 {
            return bad("documents need at least one token".into());
        }
        if let TopicShape::Dirichlet { concentration } = self.shape {
            if !(concentration > 0.0 && concentration.is_finite()) {
                return bad(format!("topic concentration must be positive, got {concentration}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub corpus: Corpus,
    /// `K × V`, rows sum to one.
    pub topics: Vec<Vec<f64>>,
    /// Per document topic proportions, `D × K`.
    pub theta: Vec<Vec<f64>>,
}

/// Draws from a symmetric Dirichlet. Works in log space
/// (`log G = log G' + log U / α` with `G' ~ Gamma(α + 1)`), so small
/// concentrations do not underflow to an all-zero vector.
pub fn sample_dirichlet<R: Rng + ?Sized>(alpha: f64, dim: usize, rng: &mut R) -> Vec<f64> {
    if dim == 1 {
        return vec![1.0];
    }
    let gamma = Gamma::new(alpha + 1.0, 1.0).expect("alpha validated positive");
    let mut logs: Vec<f64> = (0..dim)
        .map(|_| {
            let g: f64 = gamma.sample(&mut *rng);
            let u: f64 = rng.random::<f64>();
            // 1 − u lies in (0, 1]
            g.ln() + (1.0 - u).ln() / alpha
        })
        .collect();
    softmax_in_place(&mut logs);
    logs
}

pub fn bars_topics(topics: usize, vocab_size: usize) -> Vec<Vec<f64>> {
    (0..topics)
        .map(|k| {
            let start = k * vocab_size / topics;
            let end = (k + 1) * vocab_size / topics;
            let mass = 1.0 / (end - start) as f64;
            (0..vocab_size)
                .map(|w| if (start..end).contains(&w) { mass } else { 0.0 })
                .collect()
        })
        .collect()
}

/// Samples documents from the LDA generative process: per document
/// `θ ~ Dir(α)`, then per token `z ~ Cat(θ)` and `w ~ Cat(β_z)`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticCorpus, CorpusError> {
    spec.validate()?;
    let (k, v) = (spec.topics, spec.vocab_size);
    let topics = match spec.shape {
        TopicShape::Bars => bars_topics(k, v),
        TopicShape::Dirichlet { concentration } => {
            let mut r = rng::stream(spec.seed, "synthetic.topics");
            (0..k).map(|_| sample_dirichlet(concentration, v, &mut r)).collect()
        }
    };
    let word_dists: Vec<WeightedIndex<f64>> = topics
        .iter()
        .map(|row| WeightedIndex::new(row.iter().copied()).expect("topic rows are distributions"))
        .collect();

    let mut r = rng::stream(spec.seed, "synthetic.documents");
    let mut docs = Vec::with_capacity(spec.doc_count);
    let mut theta = Vec::with_capacity(spec.doc_count);
    for _ in 0..spec.doc_count {
        let th = sample_dirichlet(spec.alpha, k, &mut r);
        let topic_dist = WeightedIndex::new(th.iter().copied());
        let mut words = Vec::with_capacity(spec.doc_length);
        for _ in 0..spec.doc_length {
            let z = match &topic_dist {
                Ok(d) => d.sample(&mut r),
                Err(_) => 0,
            };
            words.push(word_dists[z].sample(&mut r));
        }
        docs.push(Document::from_tokens(words));
        theta.push(th);
    }

    let width = (v - 1).to_string().len();
    let tokens = (0..v).map(|i| format!("w{i:0width$}")).collect();
    let vocab = Arc::new(Vocabulary::new(tokens)?);
    Ok(SyntheticCorpus {
        corpus: Corpus::new(vocab, docs)?,
        topics,
        theta,
    })
}
