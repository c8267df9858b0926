//! Generated-text detection dataset synthesis.
//!
//! For each selected human excerpt the generator backend is asked for a
//! twin "on the same topic and in the same style"; human originals and
//! twins form the two classes of a detection trial. The PERS, INFO, and
//! INSTR genres are excluded, and the remaining three are kept balanced to
//! within one document. On-topic and off-topic datasets for a topic share
//! identical test items; only the demonstration examples move.
//!
//! Offline runs use the `stub:reverser` generator, whose twins are exact
//! word-order reversals: same vocabulary, detectably different style.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{extract_prefix, DocumentSet, ExcerptMode, Genre, TextExcerpt, DEFAULT_WINDOW};
use crate::gateway::{BackendSpec, ClassLabel, Gateway, GatewayError};
use crate::promptkit::render_generation_request;
use crate::seeding::derived_rng;
use crate::splitter::{
    build_domain_split, rank_by_genre, DomainSplit, Polarity, SplitError, TaskKind, TestItem,
    Trial,
};
use crate::topics::TopicMixture;

/// Genres eligible for the detection task.
pub const DETECTION_GENRES: [Genre; 3] = [Genre::Arg, Genre::News, Genre::Review];

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    Backend(#[from] GatewayError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("dataset file format error at line {line}: {detail}")]
    Format { line: usize, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemRole {
    Example,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemLabel {
    Human,
    Generated,
}

/// One dataset item with its provenance: the source document id for human
/// items, the generation request digest for generated ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionItem {
    pub role: ItemRole,
    pub label: ItemLabel,
    pub genre: Genre,
    pub excerpt: TextExcerpt,
    pub provenance: String,
}

/// The on- or off-topic detection dataset of one topic.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionDataset {
    pub topic_index: usize,
    pub polarity: Polarity,
    pub human_items: Vec<DetectionItem>,
    pub generated_items: Vec<DetectionItem>,
    /// Counts of human source documents per eligible genre.
    pub genre_mix: BTreeMap<Genre, usize>,
}

/// Sizing knobs for dataset synthesis.
#[derive(Debug, Clone, Copy)]
pub struct DetectionParams {
    pub n_shots: usize,
    pub n_test: usize,
    pub n_example_pool: usize,
    pub n_test_pool: usize,
    pub seed: u64,
}

impl DetectionParams {
    pub fn new(seed: u64) -> DetectionParams {
        DetectionParams {
            n_shots: 5,
            n_test: 10,
            n_example_pool: crate::splitter::DEFAULT_POOL,
            n_test_pool: crate::splitter::DEFAULT_POOL,
            seed,
        }
    }
}

/// See [`render_generation_request`]; re-exported here because the
/// generation contract belongs to this stage.
pub fn generation_request(source: &TextExcerpt) -> String {
    render_generation_request(&source.text)
}

/// The detection-genre domain split for one (topic, polarity).
pub fn detection_split(
    docs: &DocumentSet,
    mixtures: &[TopicMixture],
    topic_index: usize,
    polarity: Polarity,
    params: &DetectionParams,
) -> Result<DomainSplit, SynthError> {
    let mut rankings = rank_by_genre(docs, mixtures, topic_index)?;
    rankings.retain(|genre, _| DETECTION_GENRES.contains(genre));
    Ok(build_domain_split(
        &rankings,
        params.n_example_pool,
        params.n_test_pool,
        polarity,
        topic_index,
    )?)
}

/// Round-robin genre slots keeping the whole dataset balanced to within
/// one document per genre.
fn genre_slots(n: usize, start: usize, phase: usize) -> Vec<Genre> {
    (0..n)
        .map(|i| DETECTION_GENRES[(start + phase + i) % DETECTION_GENRES.len()])
        .collect()
}

struct TwinnedPick {
    human: DetectionItem,
    generated: DetectionItem,
}

/// Picks human documents for the given genre slots from the pools and
/// obtains one generated twin per pick. Refused or degenerate generations
/// are logged and the document is skipped.
#[allow(clippy::too_many_arguments)]
fn pick_and_twin(
    docs: &DocumentSet,
    pool: &BTreeMap<Genre, Vec<crate::splitter::ScoredDoc>>,
    slots: &[Genre],
    role: ItemRole,
    shuffle_label: &str,
    gateway: &Gateway,
    generator: &BackendSpec,
    params: &DetectionParams,
    topic_index: usize,
) -> Result<Vec<TwinnedPick>, SynthError> {
    let topic = topic_index.to_string();
    let mut cursors: BTreeMap<Genre, Vec<String>> = BTreeMap::new();
    for (&genre, ranked) in pool {
        let mut ids: Vec<String> = ranked.iter().map(|d| d.id.clone()).collect();
        let mut rng = derived_rng(params.seed, &[shuffle_label, &topic, genre.as_str()]);
        ids.shuffle(&mut rng);
        ids.reverse(); // pop() consumes in shuffled order
        cursors.insert(genre, ids);
    }

    let mut picks = Vec::with_capacity(slots.len());
    for &genre in slots {
        loop {
            let candidates = cursors.get_mut(&genre).ok_or(SplitError::PoolExhausted {
                genre,
                needed: slots.len(),
                available: 0,
            })?;
            let doc_id = candidates.pop().ok_or(SplitError::PoolExhausted {
                genre,
                needed: slots.len(),
                available: 0,
            })?;
            let doc = docs.get(&doc_id).expect("pool ids exist");
            let human_excerpt = extract_prefix(doc, DEFAULT_WINDOW);
            let prompt = render_generation_request(&human_excerpt.text);
            let completion = match gateway.complete(generator, &prompt) {
                Ok(c) => c,
                Err(GatewayError::BackendRefusal { backend, .. }) => {
                    log::warn!("generator {backend} refused twin of {doc_id}; resampling");
                    continue;
                }
                Err(other) => return Err(other.into()),
            };
            let twin_text: String = completion.raw_text.chars().take(DEFAULT_WINDOW).collect();
            if twin_text == human_excerpt.text {
                log::warn!("generator echoed {doc_id} verbatim; resampling");
                continue;
            }
            picks.push(TwinnedPick {
                human: DetectionItem {
                    role,
                    label: ItemLabel::Human,
                    genre,
                    excerpt: human_excerpt,
                    provenance: doc_id.clone(),
                },
                generated: DetectionItem {
                    role,
                    label: ItemLabel::Generated,
                    genre,
                    excerpt: TextExcerpt {
                        document_id: format!("gen:{doc_id}"),
                        start_offset: 0,
                        text: twin_text,
                        mode: ExcerptMode::Prefix,
                    },
                    provenance: completion.request_digest,
                },
            });
            break;
        }
    }
    Ok(picks)
}

/// Builds the detection dataset of one (topic, polarity) and the trial it
/// induces. Class 1 / Class 2 assignment of human vs generated is
/// randomized per topic but shared across polarities, keeping conditions
/// paired.
pub fn build_detection_dataset(
    docs: &DocumentSet,
    mixtures: &[TopicMixture],
    gateway: &Gateway,
    generator: &BackendSpec,
    topic_index: usize,
    polarity: Polarity,
    params: &DetectionParams,
) -> Result<(DetectionDataset, Trial), SynthError> {
    let split = detection_split(docs, mixtures, topic_index, polarity, params)?;
    let topic = topic_index.to_string();
    let mut slot_rng = derived_rng(params.seed, &["det-slots", &topic]);
    let start = slot_rng.gen_range(0..DETECTION_GENRES.len());

    let example_slots = genre_slots(params.n_shots, start, 0);
    let test_slots = genre_slots(params.n_test / 2, start, params.n_shots);

    // Example pools differ by polarity; test draws deliberately do not.
    let example_picks = pick_and_twin(
        docs,
        &split.example_pool,
        &example_slots,
        ItemRole::Example,
        &format!("det-examples-{}", polarity.as_str()),
        gateway,
        generator,
        params,
        topic_index,
    )?;
    let test_picks = pick_and_twin(
        docs,
        &split.test_pool,
        &test_slots,
        ItemRole::Test,
        "det-tests",
        gateway,
        generator,
        params,
        topic_index,
    )?;

    let mut genre_mix: BTreeMap<Genre, usize> = BTreeMap::new();
    let mut human_items = Vec::new();
    let mut generated_items = Vec::new();
    for pick in example_picks.iter().chain(&test_picks) {
        *genre_mix.entry(pick.human.genre).or_insert(0) += 1;
        human_items.push(pick.human.clone());
        generated_items.push(pick.generated.clone());
    }

    // Shared class assignment and test order across polarities.
    let mut assign_rng = derived_rng(params.seed, &["det-class-assign", &topic]);
    let human_is_class1: bool = assign_rng.gen();
    let (human_gold, generated_gold) = if human_is_class1 {
        (ClassLabel::Class1, ClassLabel::Class2)
    } else {
        (ClassLabel::Class2, ClassLabel::Class1)
    };

    let mut test_items: Vec<TestItem> = Vec::with_capacity(params.n_test);
    for pick in &test_picks {
        test_items.push(TestItem {
            item_id: pick.human.excerpt.document_id.clone(),
            excerpt: pick.human.excerpt.clone(),
            gold: human_gold,
        });
        test_items.push(TestItem {
            item_id: pick.generated.excerpt.document_id.clone(),
            excerpt: pick.generated.excerpt.clone(),
            gold: generated_gold,
        });
    }
    let mut order_rng = derived_rng(params.seed, &["det-order", &topic]);
    test_items.shuffle(&mut order_rng);

    let humans: Vec<TextExcerpt> = example_picks.iter().map(|p| p.human.excerpt.clone()).collect();
    let twins: Vec<TextExcerpt> =
        example_picks.iter().map(|p| p.generated.excerpt.clone()).collect();
    let (class1_examples, class2_examples) =
        if human_is_class1 { (humans, twins) } else { (twins, humans) };

    let trial = Trial {
        topic_index,
        task: TaskKind::Detection,
        class1_examples,
        class2_examples,
        test_items,
    };
    let dataset = DetectionDataset {
        topic_index,
        polarity,
        human_items,
        generated_items,
        genre_mix,
    };
    Ok((dataset, trial))
}

/// Wire record of the dataset file: one JSON object per line.
#[derive(Debug, Serialize, Deserialize)]
struct DatasetRecord {
    role: ItemRole,
    label: ItemLabel,
    topic_index: usize,
    polarity: Polarity,
    genre: Genre,
    item_id: String,
    text: String,
    provenance: String,
}

pub fn save_dataset(dataset: &DetectionDataset, path: &Path) -> Result<(), SynthError> {
    let mut out = BufWriter::new(File::create(path)?);
    for item in dataset.human_items.iter().chain(&dataset.generated_items) {
        let record = DatasetRecord {
            role: item.role,
            label: item.label,
            topic_index: dataset.topic_index,
            polarity: dataset.polarity,
            genre: item.genre,
            item_id: item.excerpt.document_id.clone(),
            text: item.excerpt.text.clone(),
            provenance: item.provenance.clone(),
        };
        serde_json::to_writer(&mut out, &record).map_err(|e| SynthError::Format {
            line: 0,
            detail: e.to_string(),
        })?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<DetectionDataset, SynthError> {
    let reader = BufReader::new(File::open(path)?);
    let mut human_items = Vec::new();
    let mut generated_items = Vec::new();
    let mut genre_mix: BTreeMap<Genre, usize> = BTreeMap::new();
    let mut header: Option<(usize, Polarity)> = None;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: DatasetRecord =
            serde_json::from_str(&line).map_err(|e| SynthError::Format {
                line: idx + 1,
                detail: e.to_string(),
            })?;
        header.get_or_insert((record.topic_index, record.polarity));
        let item = DetectionItem {
            role: record.role,
            label: record.label,
            genre: record.genre,
            excerpt: TextExcerpt {
                document_id: record.item_id,
                start_offset: 0,
                text: record.text,
                mode: ExcerptMode::Prefix,
            },
            provenance: record.provenance,
        };
        match item.label {
            ItemLabel::Human => {
                *genre_mix.entry(item.genre).or_insert(0) += 1;
                human_items.push(item);
            }
            ItemLabel::Generated => generated_items.push(item),
        }
    }
    let (topic_index, polarity) = header.ok_or(SynthError::Format {
        line: 0,
        detail: "empty dataset file".to_string(),
    })?;
    Ok(DetectionDataset {
        topic_index,
        polarity,
        human_items,
        generated_items,
        genre_mix,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture::{fixture_corpus, FIXTURE_SEED};
    use crate::seeding::derived_rng;
    use std::sync::OnceLock;

    struct Ctx {
        docs: DocumentSet,
        mixtures: Vec<TopicMixture>,
    }

    // Deterministic synthetic scores: primary-topic documents high, the
    // rest shuffled low. Avoids training a model in unit tests.
    fn ctx() -> &'static Ctx {
        static CTX: OnceLock<Ctx> = OnceLock::new();
        CTX.get_or_init(|| {
            let docs = fixture_corpus(FIXTURE_SEED);
            let mixtures = docs
                .documents()
                .iter()
                .map(|d| {
                    let j: usize = d.id[4..].parse().unwrap();
                    let (p, s1, s2) = crate::fixture::doc_topics(j);
                    let mut theta = vec![0.0; crate::fixture::FIXTURE_TOPICS];
                    let mut rng = derived_rng(1, &["synthscore", &d.id]);
                    for t in theta.iter_mut() {
                        *t = rng.gen::<f64>() * 0.01;
                    }
                    theta[p] = 0.6;
                    theta[s1] = 0.2;
                    theta[s2] = 0.15;
                    TopicMixture {
                        document_id: d.id.clone(),
                        theta,
                        uninformative: false,
                    }
                })
                .collect();
            Ctx { docs, mixtures }
        })
    }

    fn build(topic: usize, polarity: Polarity, dir: &Path) -> (DetectionDataset, Trial) {
        let ctx = ctx();
        let gateway = Gateway::new(dir);
        let generator = BackendSpec::stub("stub:reverser");
        let params = DetectionParams {
            n_example_pool: 5,
            n_test_pool: 5,
            ..DetectionParams::new(7)
        };
        build_detection_dataset(
            &ctx.docs,
            &ctx.mixtures,
            &gateway,
            &generator,
            topic,
            polarity,
            &params,
        )
        .unwrap()
    }

    #[test]
    fn default_sizes_and_balance() {
        let dir = tempfile::tempdir().unwrap();
        let (dataset, trial) = build(3, Polarity::OnTopic, dir.path());
        assert_eq!(dataset.human_items.len(), 10);
        assert_eq!(dataset.generated_items.len(), 10);
        assert_eq!(trial.class1_examples.len(), 5);
        assert_eq!(trial.class2_examples.len(), 5);
        assert_eq!(trial.test_items.len(), 10);

        // Only detection genres, balanced to within one.
        assert!(dataset.genre_mix.keys().all(|g| DETECTION_GENRES.contains(g)));
        let counts: Vec<usize> = dataset.genre_mix.values().copied().collect();
        assert_eq!(counts.iter().sum::<usize>(), 10);
        let max = counts.iter().max().unwrap();
        let min = counts.iter().min().unwrap();
        assert!(max - min <= 1, "genre mix {:?}", dataset.genre_mix);

        let class1 = trial
            .test_items
            .iter()
            .filter(|t| t.gold == ClassLabel::Class1)
            .count();
        assert_eq!(class1, 5);
    }

    #[test]
    fn polarities_share_identical_test_items() {
        let dir = tempfile::tempdir().unwrap();
        let (_, on) = build(5, Polarity::OnTopic, dir.path());
        let (_, off) = build(5, Polarity::OffTopic, dir.path());
        let ids = |t: &Trial| -> Vec<String> {
            t.test_items.iter().map(|i| i.item_id.clone()).collect()
        };
        assert_eq!(ids(&on), ids(&off));
        for (a, b) in on.test_items.iter().zip(&off.test_items) {
            assert_eq!(a.excerpt.text, b.excerpt.text);
            assert_eq!(a.gold, b.gold);
        }
    }

    #[test]
    fn reverser_twins_are_detectable_permutations() {
        let dir = tempfile::tempdir().unwrap();
        let (dataset, _) = build(2, Polarity::OnTopic, dir.path());
        for (human, twin) in dataset.human_items.iter().zip(&dataset.generated_items) {
            assert_ne!(human.excerpt.text, twin.excerpt.text);
            let mut h: Vec<&str> = human.excerpt.text.split_whitespace().collect();
            let t: Vec<&str> = twin.excerpt.text.split_whitespace().collect();
            h.reverse();
            // The twin is the reversal, modulo the 1000-char truncation
            // (which may cut its final token mid-word).
            let whole = &t[..t.len().saturating_sub(1)];
            assert!(h.starts_with(whole));
        }
    }

    #[test]
    fn generated_items_carry_replayable_digests() {
        let dir = tempfile::tempdir().unwrap();
        let (dataset, _) = build(4, Polarity::OffTopic, dir.path());
        let gateway = Gateway::new(dir.path());
        let generator = BackendSpec::stub("stub:reverser");
        for (human, twin) in dataset.human_items.iter().zip(&dataset.generated_items) {
            let prompt = render_generation_request(&human.excerpt.text);
            let completion = gateway.complete(&generator, &prompt).unwrap();
            assert!(completion.from_cache);
            assert_eq!(completion.request_digest, twin.provenance);
        }
    }

    #[test]
    fn dataset_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let (dataset, _) = build(1, Polarity::OnTopic, dir.path());
        let path = dir.path().join("dataset.jsonl");
        save_dataset(&dataset, &path).unwrap();
        let back = load_dataset(&path).unwrap();
        assert_eq!(back.topic_index, dataset.topic_index);
        assert_eq!(back.polarity, dataset.polarity);
        assert_eq!(back.human_items, dataset.human_items);
        assert_eq!(back.generated_items, dataset.generated_items);
        assert_eq!(back.genre_mix, dataset.genre_mix);
    }
}
