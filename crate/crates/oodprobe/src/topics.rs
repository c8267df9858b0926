//! Latent topic model: collapsed-Gibbs LDA training, held-out inference,
//! keyword extraction, and model persistence.
//!
//! Only the ranking role of the per-document topic scores matters downstream
//! (documents are split into on-topic and off-topic pools by score), so the
//! sampler favors reproducibility over speed: one sequential chain, all
//! randomness from a seeded ChaCha stream, bit-identical counts for a fixed
//! `(corpus, K, alpha, beta, n_iters, seed)`.
//!
//! A trained [`TopicModel`] is immutable; concurrent inference calls each
//! carry private sampler state, so scoring a corpus fans out per document
//! (rayon under the `parallel` feature, plain iteration otherwise).

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::corpus::{Document, DocumentSet};
use crate::seeding::derived_rng;

#[derive(Debug, thiserror::Error)]
pub enum TopicsError {
    #[error("no term survived the frequency and stopword filters")]
    EmptyVocabulary,
    #[error("degenerate corpus: {have} documents with in-vocabulary tokens, need at least {need}")]
    DegenerateCorpus { have: usize, need: usize },
    #[error("topic index {index} out of range for a {k}-topic model")]
    IndexOutOfRange { index: usize, k: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("model file format error at line {line}: {detail}")]
    ModelFormat { line: usize, detail: String },
}

/// Lowercased alphabetic tokens of length >= 2. Anything else (digits,
/// punctuation, one-letter fragments) is dropped before modeling.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphabetic())
        .filter(|t| t.chars().count() >= 2)
        .map(|t| t.to_lowercase())
        .collect()
}

/// Term inventory with document frequencies, ordered by descending
/// document frequency (ties lexicographic) for deterministic indexing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    terms: Vec<String>,
    doc_freq: Vec<usize>,
    #[serde(skip)]
    term_index: HashMap<String, usize>,
}

impl Vocabulary {
    fn new(mut entries: Vec<(String, usize)>) -> Vocabulary {
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let terms: Vec<String> = entries.iter().map(|(t, _)| t.clone()).collect();
        let doc_freq: Vec<usize> = entries.iter().map(|(_, f)| *f).collect();
        let term_index = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary {
            terms,
            doc_freq,
            term_index,
        }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn term(&self, index: usize) -> &str {
        &self.terms[index]
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn doc_freq_of(&self, index: usize) -> usize {
        self.doc_freq[index]
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.term_index.get(term).copied()
    }

    fn rebuild_index(&mut self) {
        self.term_index = self
            .terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
    }

    /// Token ids of a document under this vocabulary; out-of-vocabulary
    /// tokens are dropped.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        tokenize(text)
            .iter()
            .filter_map(|t| self.index_of(t).map(|i| i as u32))
            .collect()
    }
}

/// Builds the vocabulary: tokens below `min_doc_freq` or in `stopwords`
/// are excluded.
pub fn build_vocabulary(
    docs: &DocumentSet,
    min_doc_freq: usize,
    stopwords: &HashSet<String>,
) -> Result<Vocabulary, TopicsError> {
    let mut doc_freq: HashMap<String, usize> = HashMap::new();
    for doc in docs.documents() {
        let unique: HashSet<String> = tokenize(&doc.text).into_iter().collect();
        for token in unique {
            if !stopwords.contains(&token) {
                *doc_freq.entry(token).or_insert(0) += 1;
            }
        }
    }
    let entries: Vec<(String, usize)> = doc_freq
        .into_iter()
        .filter(|(_, f)| *f >= min_doc_freq)
        .collect();
    if entries.is_empty() {
        return Err(TopicsError::EmptyVocabulary);
    }
    Ok(Vocabulary::new(entries))
}

/// Training hyperparameters. `alpha` defaults to `50 / K`, the usual
/// symmetric prior, when not set explicitly.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrainParams {
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    pub n_iters: usize,
    pub seed: u64,
}

impl TrainParams {
    pub fn new(k: usize, seed: u64) -> TrainParams {
        TrainParams {
            k,
            alpha: 50.0 / k as f64,
            beta: 0.01,
            n_iters: 1000,
            seed,
        }
    }

    pub fn with_iters(mut self, n_iters: usize) -> TrainParams {
        self.n_iters = n_iters;
        self
    }
}

/// Inference settings for scoring a document against a trained model.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct InferParams {
    pub n_iters: usize,
    pub burn_in: usize,
    pub seed: u64,
}

impl InferParams {
    pub fn new(seed: u64) -> InferParams {
        InferParams {
            n_iters: 200,
            burn_in: 100,
            seed,
        }
    }
}

/// Trained topic model: smoothed topic-word counts plus enough state to
/// reproduce the run (seed, iterations, training likelihood trace).
#[derive(Debug, Clone)]
pub struct TopicModel {
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    pub vocabulary: Vocabulary,
    /// K x V matrix, row-major.
    topic_word_counts: Vec<u32>,
    topic_totals: Vec<u64>,
    pub trained_iters: usize,
    pub seed: u64,
    /// Per-iteration predictive log-likelihood of the training tokens,
    /// recorded as a convergence monitor.
    pub log_likelihood_trace: Vec<f64>,
}

/// A document's inferred distribution over topics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicMixture {
    pub document_id: String,
    pub theta: Vec<f64>,
    /// True when the document had no in-vocabulary tokens and the uniform
    /// fallback was returned.
    pub uninformative: bool,
}

impl TopicModel {
    pub fn word_count(&self, topic: usize, word: usize) -> u32 {
        self.topic_word_counts[topic * self.vocabulary.len() + word]
    }

    pub fn topic_total(&self, topic: usize) -> u64 {
        self.topic_totals[topic]
    }

    /// Smoothed P(word | topic).
    pub fn phi(&self, topic: usize, word: usize) -> f64 {
        let v = self.vocabulary.len() as f64;
        (self.word_count(topic, word) as f64 + self.beta)
            / (self.topic_totals[topic] as f64 + v * self.beta)
    }

    fn check_consistency(&self) {
        let v = self.vocabulary.len();
        for k in 0..self.k {
            let row: u64 = self.topic_word_counts[k * v..(k + 1) * v]
                .iter()
                .map(|&c| c as u64)
                .sum();
            assert_eq!(row, self.topic_totals[k], "topic {k} totals out of sync");
        }
    }
}

/// Trains a topic model by collapsed Gibbs sampling over token-topic
/// assignments. Documents with no in-vocabulary tokens are skipped with a
/// warning; fewer than `k` usable documents is an error.
pub fn train_topic_model(
    docs: &DocumentSet,
    vocabulary: &Vocabulary,
    params: &TrainParams,
) -> Result<TopicModel, TopicsError> {
    let v = vocabulary.len();
    if v == 0 {
        return Err(TopicsError::EmptyVocabulary);
    }
    let mut token_docs: Vec<Vec<u32>> = Vec::with_capacity(docs.len());
    for doc in docs.documents() {
        let tokens = vocabulary.encode(&doc.text);
        if tokens.is_empty() {
            log::warn!("document {} has no in-vocabulary tokens; skipped", doc.id);
            continue;
        }
        token_docs.push(tokens);
    }
    if token_docs.len() < params.k {
        return Err(TopicsError::DegenerateCorpus {
            have: token_docs.len(),
            need: params.k,
        });
    }

    let k = params.k;
    let mut rng = derived_rng(params.seed, &["lda-train"]);
    let mut assignments: Vec<Vec<u32>> = token_docs
        .iter()
        .map(|tokens| tokens.iter().map(|_| rng.gen_range(0..k as u32)).collect())
        .collect();
    let mut topic_word = vec![0u32; k * v];
    let mut topic_total = vec![0u64; k];
    let mut doc_topic: Vec<Vec<u32>> = token_docs.iter().map(|_| vec![0u32; k]).collect();
    for (d, tokens) in token_docs.iter().enumerate() {
        for (i, &w) in tokens.iter().enumerate() {
            let z = assignments[d][i] as usize;
            topic_word[z * v + w as usize] += 1;
            topic_total[z] += 1;
            doc_topic[d][z] += 1;
        }
    }

    let alpha = params.alpha;
    let beta = params.beta;
    let beta_sum = beta * v as f64;
    let mut weights = vec![0.0f64; k];
    let mut trace = Vec::with_capacity(params.n_iters);

    for _iter in 0..params.n_iters {
        for (d, tokens) in token_docs.iter().enumerate() {
            for (i, &w) in tokens.iter().enumerate() {
                let w = w as usize;
                let old = assignments[d][i] as usize;
                doc_topic[d][old] -= 1;
                topic_word[old * v + w] -= 1;
                topic_total[old] -= 1;

                let mut total = 0.0;
                for t in 0..k {
                    let p = (doc_topic[d][t] as f64 + alpha)
                        * (topic_word[t * v + w] as f64 + beta)
                        / (topic_total[t] as f64 + beta_sum);
                    weights[t] = p;
                    total += p;
                }
                let new = sample_categorical(&weights, total, &mut rng);
                assignments[d][i] = new as u32;
                doc_topic[d][new] += 1;
                topic_word[new * v + w] += 1;
                topic_total[new] += 1;
            }
        }
        trace.push(predictive_log_likelihood(
            &token_docs,
            &doc_topic,
            &topic_word,
            &topic_total,
            k,
            v,
            alpha,
            beta,
        ));
    }

    let model = TopicModel {
        k,
        alpha,
        beta,
        vocabulary: vocabulary.clone(),
        topic_word_counts: topic_word,
        topic_totals: topic_total,
        trained_iters: params.n_iters,
        seed: params.seed,
        log_likelihood_trace: trace,
    };
    model.check_consistency();
    Ok(model)
}

fn sample_categorical(weights: &[f64], total: f64, rng: &mut ChaCha8Rng) -> usize {
    let target = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if target < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Predictive log-likelihood of the training tokens under the current
/// assignment counts; the per-iteration convergence monitor.
#[allow(clippy::too_many_arguments)]
fn predictive_log_likelihood(
    token_docs: &[Vec<u32>],
    doc_topic: &[Vec<u32>],
    topic_word: &[u32],
    topic_total: &[u64],
    k: usize,
    v: usize,
    alpha: f64,
    beta: f64,
) -> f64 {
    let beta_sum = beta * v as f64;
    let alpha_sum = alpha * k as f64;
    let mut theta = vec![0.0f64; k];
    let mut ll = 0.0;
    for (d, tokens) in token_docs.iter().enumerate() {
        let nd = tokens.len() as f64;
        for t in 0..k {
            theta[t] = (doc_topic[d][t] as f64 + alpha) / (nd + alpha_sum);
        }
        for &w in tokens {
            let w = w as usize;
            let mut p = 0.0;
            for t in 0..k {
                p += theta[t] * (topic_word[t * v + w] as f64 + beta)
                    / (topic_total[t] as f64 + beta_sum);
            }
            ll += p.ln();
        }
    }
    ll
}

/// Infers a document's topic mixture by Gibbs sampling with the topic-word
/// counts frozen. Theta is the smoothed posterior mean over post-burn-in
/// samples. A document with no known tokens gets the uniform fallback.
pub fn infer_topic_mixture(
    model: &TopicModel,
    doc: &Document,
    params: &InferParams,
) -> TopicMixture {
    let tokens = model.vocabulary.encode(&doc.text);
    let k = model.k;
    if tokens.is_empty() {
        return TopicMixture {
            document_id: doc.id.clone(),
            theta: vec![1.0 / k as f64; k],
            uninformative: true,
        };
    }
    let v = model.vocabulary.len();
    let alpha = model.alpha;
    let beta = model.beta;
    let beta_sum = beta * v as f64;
    let mut rng = derived_rng(params.seed, &["lda-infer", &doc.id]);

    let mut local_counts = vec![0u32; k];
    let mut assignments: Vec<u32> = tokens
        .iter()
        .map(|_| {
            let z = rng.gen_range(0..k as u32);
            local_counts[z as usize] += 1;
            z
        })
        .collect();

    let mut weights = vec![0.0f64; k];
    let mut accum = vec![0.0f64; k];
    let mut n_samples = 0usize;
    for iter in 0..params.n_iters {
        for (i, &w) in tokens.iter().enumerate() {
            let w = w as usize;
            let old = assignments[i] as usize;
            local_counts[old] -= 1;
            let mut total = 0.0;
            for t in 0..k {
                let p = (local_counts[t] as f64 + alpha)
                    * (model.topic_word_counts[t * v + w] as f64 + beta)
                    / (model.topic_totals[t] as f64 + beta_sum);
                weights[t] = p;
                total += p;
            }
            let new = sample_categorical(&weights, total, &mut rng);
            assignments[i] = new as u32;
            local_counts[new] += 1;
        }
        if iter >= params.burn_in {
            for t in 0..k {
                accum[t] += local_counts[t] as f64;
            }
            n_samples += 1;
        }
    }

    let nd = tokens.len() as f64;
    let alpha_sum = alpha * k as f64;
    let theta: Vec<f64> = (0..k)
        .map(|t| (accum[t] / n_samples as f64 + alpha) / (nd + alpha_sum))
        .collect();
    TopicMixture {
        document_id: doc.id.clone(),
        theta,
        uninformative: false,
    }
}

/// Scores every document in the set; parallel across documents when the
/// `parallel` feature is on. Results are identical either way because each
/// document's sampler stream is derived from `(seed, document id)`.
pub fn score_documents(
    model: &TopicModel,
    docs: &DocumentSet,
    params: &InferParams,
) -> Vec<TopicMixture> {
    #[cfg(feature = "parallel")]
    {
        docs.documents()
            .par_iter()
            .map(|doc| infer_topic_mixture(model, doc, params))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        score_documents_seq(model, docs, params)
    }
}

/// Sequential scoring path, always available; the benchmark suite compares
/// it against [`score_documents`].
pub fn score_documents_seq(
    model: &TopicModel,
    docs: &DocumentSet,
    params: &InferParams,
) -> Vec<TopicMixture> {
    docs.documents()
        .iter()
        .map(|doc| infer_topic_mixture(model, doc, params))
        .collect()
}

/// The `n` highest-probability terms of a topic under the smoothed
/// topic-word distribution, ties broken lexicographically.
pub fn top_keywords(
    model: &TopicModel,
    topic_index: usize,
    n: usize,
) -> Result<Vec<String>, TopicsError> {
    if topic_index >= model.k {
        return Err(TopicsError::IndexOutOfRange {
            index: topic_index,
            k: model.k,
        });
    }
    let v = model.vocabulary.len();
    let mut order: Vec<usize> = (0..v).collect();
    order.sort_by(|&a, &b| {
        model
            .word_count(topic_index, b)
            .cmp(&model.word_count(topic_index, a))
            .then_with(|| model.vocabulary.term(a).cmp(model.vocabulary.term(b)))
    });
    Ok(order
        .into_iter()
        .take(n)
        .map(|i| model.vocabulary.term(i).to_string())
        .collect())
}

/// Predictive log probability of the corpus tokens under the model's
/// current counts with prior-mean topic mixing. Out-of-vocabulary tokens do
/// not contribute; an empty document contributes exactly zero.
pub fn corpus_log_likelihood(model: &TopicModel, docs: &DocumentSet) -> f64 {
    let v = model.vocabulary.len();
    let k = model.k;
    let beta_sum = model.beta * v as f64;
    let mix = 1.0 / k as f64;
    let mut ll = 0.0;
    for doc in docs.documents() {
        for w in model.vocabulary.encode(&doc.text) {
            let w = w as usize;
            let mut p = 0.0;
            for t in 0..k {
                p += mix * (model.topic_word_counts[t * v + w] as f64 + model.beta)
                    / (model.topic_totals[t] as f64 + beta_sum);
            }
            ll += p.ln();
        }
    }
    ll
}

const MODEL_MAGIC: &str = "oodprobe-topic-model v1";

/// Writes the model as a line-based text file; `load_model` of the result
/// restores bit-exact counts, hyperparameters, and trace.
pub fn save_model(model: &TopicModel, path: &Path) -> Result<(), TopicsError> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{MODEL_MAGIC}")?;
    writeln!(out, "k {}", model.k)?;
    writeln!(out, "alpha {:016x}", model.alpha.to_bits())?;
    writeln!(out, "beta {:016x}", model.beta.to_bits())?;
    writeln!(out, "seed {}", model.seed)?;
    writeln!(out, "trained_iters {}", model.trained_iters)?;
    writeln!(out, "vocab {}", model.vocabulary.len())?;
    for i in 0..model.vocabulary.len() {
        writeln!(
            out,
            "{} {}",
            model.vocabulary.term(i),
            model.vocabulary.doc_freq_of(i)
        )?;
    }
    writeln!(out, "counts")?;
    let v = model.vocabulary.len();
    for t in 0..model.k {
        let row: Vec<String> = model.topic_word_counts[t * v..(t + 1) * v]
            .iter()
            .map(|c| c.to_string())
            .collect();
        writeln!(out, "{}", row.join(" "))?;
    }
    writeln!(out, "trace {}", model.log_likelihood_trace.len())?;
    for value in &model.log_likelihood_trace {
        writeln!(out, "{:016x}", value.to_bits())?;
    }
    writeln!(out, "end")?;
    out.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<TopicModel, TopicsError> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines().enumerate();
    let mut next = |expect: &str| -> Result<(usize, String), TopicsError> {
        lines
            .next()
            .ok_or_else(|| TopicsError::ModelFormat {
                line: 0,
                detail: format!("unexpected end of file, wanted {expect}"),
            })
            .and_then(|(i, l)| {
                l.map(|l| (i + 1, l)).map_err(TopicsError::Io)
            })
    };
    let fmt_err = |line: usize, detail: &str| TopicsError::ModelFormat {
        line,
        detail: detail.to_string(),
    };

    let (line, magic) = next("magic")?;
    if magic != MODEL_MAGIC {
        return Err(fmt_err(line, "bad magic"));
    }
    let parse_field = |line: usize, text: &str, key: &str| -> Result<String, TopicsError> {
        text.strip_prefix(key)
            .and_then(|rest| rest.strip_prefix(' '))
            .map(|s| s.to_string())
            .ok_or_else(|| fmt_err(line, &format!("expected `{key} ...`")))
    };

    let (l, s) = next("k")?;
    let k: usize = parse_field(l, &s, "k")?.parse().map_err(|_| fmt_err(l, "bad k"))?;
    let (l, s) = next("alpha")?;
    let alpha = f64::from_bits(
        u64::from_str_radix(&parse_field(l, &s, "alpha")?, 16).map_err(|_| fmt_err(l, "bad alpha"))?,
    );
    let (l, s) = next("beta")?;
    let beta = f64::from_bits(
        u64::from_str_radix(&parse_field(l, &s, "beta")?, 16).map_err(|_| fmt_err(l, "bad beta"))?,
    );
    let (l, s) = next("seed")?;
    let seed: u64 = parse_field(l, &s, "seed")?.parse().map_err(|_| fmt_err(l, "bad seed"))?;
    let (l, s) = next("trained_iters")?;
    let trained_iters: usize = parse_field(l, &s, "trained_iters")?
        .parse()
        .map_err(|_| fmt_err(l, "bad trained_iters"))?;
    let (l, s) = next("vocab")?;
    let v: usize = parse_field(l, &s, "vocab")?.parse().map_err(|_| fmt_err(l, "bad vocab"))?;

    let mut terms = Vec::with_capacity(v);
    let mut doc_freq = Vec::with_capacity(v);
    for _ in 0..v {
        let (l, s) = next("vocab entry")?;
        let (term, freq) = s.rsplit_once(' ').ok_or_else(|| fmt_err(l, "bad vocab entry"))?;
        terms.push(term.to_string());
        doc_freq.push(freq.parse().map_err(|_| fmt_err(l, "bad doc freq"))?);
    }
    let (l, s) = next("counts header")?;
    if s != "counts" {
        return Err(fmt_err(l, "expected `counts`"));
    }
    let mut topic_word_counts = Vec::with_capacity(k * v);
    for _ in 0..k {
        let (l, s) = next("count row")?;
        for cell in s.split(' ') {
            topic_word_counts.push(cell.parse().map_err(|_| fmt_err(l, "bad count"))?);
        }
    }
    if topic_word_counts.len() != k * v {
        return Err(fmt_err(0, "count matrix has wrong size"));
    }
    let (l, s) = next("trace header")?;
    let trace_len: usize = parse_field(l, &s, "trace")?
        .parse()
        .map_err(|_| fmt_err(l, "bad trace length"))?;
    let mut trace = Vec::with_capacity(trace_len);
    for _ in 0..trace_len {
        let (l, s) = next("trace entry")?;
        trace.push(f64::from_bits(
            u64::from_str_radix(&s, 16).map_err(|_| fmt_err(l, "bad trace entry"))?,
        ));
    }
    let (l, s) = next("end")?;
    if s != "end" {
        return Err(fmt_err(l, "expected `end`"));
    }

    let topic_totals: Vec<u64> = (0..k)
        .map(|t| {
            topic_word_counts[t * v..(t + 1) * v]
                .iter()
                .map(|&c| c as u64)
                .sum()
        })
        .collect();
    let mut vocabulary = Vocabulary {
        terms,
        doc_freq,
        term_index: HashMap::new(),
    };
    vocabulary.rebuild_index();
    Ok(TopicModel {
        k,
        alpha,
        beta,
        vocabulary,
        topic_word_counts,
        topic_totals,
        trained_iters,
        seed,
        log_likelihood_trace: trace,
    })
}

/// Greedy matching of learned topics to planted word distributions by total
/// probability mass on each planted vocabulary; returns, per planted topic,
/// the total-variation distance to its matched learned topic.
pub fn match_planted_topics(model: &TopicModel, truth: &[Vec<(String, f64)>]) -> Vec<f64> {
    let mut taken = vec![false; model.k];
    let mut distances = Vec::with_capacity(truth.len());
    for planted in truth {
        let mut best: Option<(usize, f64)> = None;
        for t in 0..model.k {
            if taken[t] {
                continue;
            }
            let mass: f64 = planted
                .iter()
                .filter_map(|(w, _)| model.vocabulary.index_of(w))
                .map(|w| model.phi(t, w))
                .sum();
            if best.map_or(true, |(_, m)| mass > m) {
                best = Some((t, mass));
            }
        }
        let (t, _) = best.expect("more planted topics than model topics");
        taken[t] = true;
        distances.push(total_variation(model, t, planted));
    }
    distances
}

fn total_variation(model: &TopicModel, topic: usize, planted: &[(String, f64)]) -> f64 {
    let planted_map: HashMap<&str, f64> =
        planted.iter().map(|(w, p)| (w.as_str(), *p)).collect();
    let mut tv = 0.0;
    for w in 0..model.vocabulary.len() {
        let q = planted_map.get(model.vocabulary.term(w)).copied().unwrap_or(0.0);
        tv += (model.phi(topic, w) - q).abs();
    }
    // Mass the model leaves off-vocabulary (none here, vocab covers all).
    0.5 * tv
}
