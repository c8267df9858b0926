//! Domain splits and trial assembly.
//!
//! For each topic, documents of every genre are ranked by their topic score.
//! The top of the ranking supplies the test pool (tests are always
//! on-topic); demonstration examples come either from just below the test
//! pool (on-topic condition) or from the bottom of the ranking (off-topic
//! condition). The two conditions for a topic therefore share identical
//! test pools, which keeps predictions paired for significance testing.
//!
//! All sampling is driven by seeds derived from `(experiment seed, topic,
//! role)`; the test-item stream deliberately ignores polarity and shot
//! count, so test sets are byte-identical across the conditions being
//! compared.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::{extract_genre_window, extract_prefix, DocumentSet, Genre, TextExcerpt, DEFAULT_WINDOW};
use crate::gateway::ClassLabel;
use crate::seeding::{derive_seed, derived_rng};
use crate::topics::TopicMixture;
use rand::seq::SliceRandom;
use rand::Rng;

/// Default example / test pool sizes per genre per topic.
pub const DEFAULT_POOL: usize = 20;

#[derive(Debug, thiserror::Error)]
pub enum SplitError {
    #[error("document {id} has no topic mixture")]
    MissingMixture { id: String },
    #[error("genre {genre} has {available} ranked documents, {needed} needed")]
    InsufficientDocuments {
        genre: Genre,
        needed: usize,
        available: usize,
    },
    #[error("pool exhausted for genre {genre}: {needed} draws from {available}")]
    PoolExhausted {
        genre: Genre,
        needed: usize,
        available: usize,
    },
    #[error("test count {0} must be even for a balanced test set")]
    OddTestCount(usize),
}

/// Whether demonstration examples come from the top or bottom of the
/// topic ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    OnTopic,
    OffTopic,
}

impl Polarity {
    pub fn as_str(&self) -> &'static str {
        match self {
            Polarity::OnTopic => "on_topic",
            Polarity::OffTopic => "off_topic",
        }
    }
}

/// The two benchmark tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Genre,
    Detection,
}

impl TaskKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TaskKind::Genre => "genre",
            TaskKind::Detection => "detection",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDoc {
    pub id: String,
    pub score: f64,
}

/// Example and test pools for one (topic, polarity), per genre.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DomainSplit {
    pub topic_index: usize,
    pub polarity: Polarity,
    pub example_pool: BTreeMap<Genre, Vec<ScoredDoc>>,
    pub test_pool: BTreeMap<Genre, Vec<ScoredDoc>>,
}

/// A binary classification pairing for one topic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenrePair {
    pub topic_index: usize,
    pub class1: Genre,
    pub class2: Genre,
}

/// One test excerpt with its hidden gold label.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestItem {
    pub item_id: String,
    pub excerpt: TextExcerpt,
    pub gold: ClassLabel,
}

/// One binary-classification episode: balanced few-shot examples plus a
/// balanced, shuffled test set disjoint from all example documents.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trial {
    pub topic_index: usize,
    pub task: TaskKind,
    pub class1_examples: Vec<TextExcerpt>,
    pub class2_examples: Vec<TextExcerpt>,
    pub test_items: Vec<TestItem>,
}

impl Trial {
    pub fn id(&self) -> String {
        format!("{}-t{:02}", self.task.as_str(), self.topic_index)
    }
}

/// Ranks all document ids by descending score on `topic_index`, ties broken
/// by id so the ranking is a pure function of its inputs.
pub fn rank_documents(
    docs: &DocumentSet,
    mixtures: &[TopicMixture],
    topic_index: usize,
) -> Result<Vec<String>, SplitError> {
    let by_id: HashMap<&str, &TopicMixture> =
        mixtures.iter().map(|m| (m.document_id.as_str(), m)).collect();
    let mut scored: Vec<(&str, f64)> = Vec::with_capacity(docs.len());
    for doc in docs.documents() {
        let mixture = by_id
            .get(doc.id.as_str())
            .ok_or_else(|| SplitError::MissingMixture { id: doc.id.clone() })?;
        scored.push((&doc.id, mixture.theta[topic_index]));
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Ok(scored.into_iter().map(|(id, _)| id.to_string()).collect())
}

/// Per-genre rankings for one topic, with scores attached.
pub fn rank_by_genre(
    docs: &DocumentSet,
    mixtures: &[TopicMixture],
    topic_index: usize,
) -> Result<BTreeMap<Genre, Vec<ScoredDoc>>, SplitError> {
    let by_id: HashMap<&str, &TopicMixture> =
        mixtures.iter().map(|m| (m.document_id.as_str(), m)).collect();
    let mut rankings: BTreeMap<Genre, Vec<ScoredDoc>> = BTreeMap::new();
    for doc in docs.documents() {
        let mixture = by_id
            .get(doc.id.as_str())
            .ok_or_else(|| SplitError::MissingMixture { id: doc.id.clone() })?;
        rankings.entry(doc.genre).or_default().push(ScoredDoc {
            id: doc.id.clone(),
            score: mixture.theta[topic_index],
        });
    }
    for ranking in rankings.values_mut() {
        ranking.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
    }
    Ok(rankings)
}

/// Carves the example and test pools out of per-genre rankings.
///
/// Tests always take the top `n_test_pool` ranks. On-topic examples take
/// the next `n_example_pool` ranks down; off-topic examples take the bottom
/// `n_example_pool`. Disjointness holds by construction.
pub fn build_domain_split(
    rankings: &BTreeMap<Genre, Vec<ScoredDoc>>,
    n_example_pool: usize,
    n_test_pool: usize,
    polarity: Polarity,
    topic_index: usize,
) -> Result<DomainSplit, SplitError> {
    let mut example_pool = BTreeMap::new();
    let mut test_pool = BTreeMap::new();
    for (&genre, ranking) in rankings {
        let needed = n_example_pool + n_test_pool;
        if ranking.len() < needed {
            return Err(SplitError::InsufficientDocuments {
                genre,
                needed,
                available: ranking.len(),
            });
        }
        test_pool.insert(genre, ranking[..n_test_pool].to_vec());
        let examples = match polarity {
            Polarity::OnTopic => ranking[n_test_pool..n_test_pool + n_example_pool].to_vec(),
            Polarity::OffTopic => ranking[ranking.len() - n_example_pool..].to_vec(),
        };
        example_pool.insert(genre, examples);
    }
    Ok(DomainSplit {
        topic_index,
        polarity,
        example_pool,
        test_pool,
    })
}

/// Draws two distinct genres uniformly without replacement for a topic.
/// Pairs may repeat across topics; each unordered pair has probability
/// 1/15 over the six-genre inventory.
pub fn sample_genre_pair(topic_index: usize, inventory: &[Genre], seed: u64) -> GenrePair {
    assert!(inventory.len() >= 2, "need at least two genres");
    let mut rng = derived_rng(seed, &["genre-pair", &topic_index.to_string()]);
    let first = rng.gen_range(0..inventory.len());
    let mut second = rng.gen_range(0..inventory.len() - 1);
    if second >= first {
        second += 1;
    }
    GenrePair {
        topic_index,
        class1: inventory[first],
        class2: inventory[second],
    }
}

/// Assembles one trial: `n_shots` examples per class from the example pool
/// and `n_test / 2` test items per class from the test pool, without
/// replacement, with a deterministic shuffle of test order.
///
/// Example draws for shot count `k` are a prefix of the draws for `k + 1`,
/// and test draws ignore both polarity and shot count, so sweeps and
/// paired comparisons see consistent data.
pub fn assemble_trial(
    docs: &DocumentSet,
    split: &DomainSplit,
    pair: &GenrePair,
    task: TaskKind,
    n_shots: usize,
    n_test: usize,
    seed: u64,
) -> Result<Trial, SplitError> {
    if n_test % 2 != 0 {
        return Err(SplitError::OddTestCount(n_test));
    }
    let topic = split.topic_index.to_string();
    let excerpt = |doc_id: &str| -> TextExcerpt {
        let doc = docs.get(doc_id).expect("pool ids come from the document set");
        match task {
            TaskKind::Genre => {
                extract_genre_window(doc, DEFAULT_WINDOW, derive_seed(seed, &["window", doc_id]))
            }
            TaskKind::Detection => extract_prefix(doc, DEFAULT_WINDOW),
        }
    };

    let draw_examples = |genre: Genre| -> Result<Vec<TextExcerpt>, SplitError> {
        let pool = &split.example_pool[&genre];
        if pool.len() < n_shots {
            return Err(SplitError::PoolExhausted {
                genre,
                needed: n_shots,
                available: pool.len(),
            });
        }
        let mut ids: Vec<&str> = pool.iter().map(|d| d.id.as_str()).collect();
        let mut rng = derived_rng(seed, &["examples", &topic, genre.as_str()]);
        ids.shuffle(&mut rng);
        Ok(ids[..n_shots].iter().map(|id| excerpt(id)).collect())
    };

    let draw_tests = |genre: Genre, gold: ClassLabel| -> Result<Vec<TestItem>, SplitError> {
        let pool = &split.test_pool[&genre];
        let per_class = n_test / 2;
        if pool.len() < per_class {
            return Err(SplitError::PoolExhausted {
                genre,
                needed: per_class,
                available: pool.len(),
            });
        }
        let mut ids: Vec<&str> = pool.iter().map(|d| d.id.as_str()).collect();
        let mut rng = derived_rng(seed, &["tests", &topic, genre.as_str()]);
        ids.shuffle(&mut rng);
        Ok(ids[..per_class]
            .iter()
            .map(|id| TestItem {
                item_id: id.to_string(),
                excerpt: excerpt(id),
                gold,
            })
            .collect())
    };

    let class1_examples = draw_examples(pair.class1)?;
    let class2_examples = draw_examples(pair.class2)?;
    let mut test_items = draw_tests(pair.class1, ClassLabel::Class1)?;
    test_items.extend(draw_tests(pair.class2, ClassLabel::Class2)?);
    let mut order_rng = derived_rng(seed, &["test-order", &topic]);
    test_items.shuffle(&mut order_rng);

    Ok(Trial {
        topic_index: split.topic_index,
        task,
        class1_examples,
        class2_examples,
        test_items,
    })
}
