//! Synthetic fixture corpus generator.
//!
//! The shipped 600-document corpus (`fixtures/corpus.jsonl`) is built here:
//! 6 genres x 100 documents, 25 latent themes. Every document encodes three
//! independent signals that the stub backends and acceptance checks exploit:
//!
//! - **Style**: each genre has a marker word ([`GENRE_MARKERS`]) planted in
//!   every sentence, and every sentence starts with a capitalized "The" and
//!   ends with a period attached to its last word. Style is recoverable from
//!   any window regardless of theme.
//! - **Topic**: each document draws most of its content words from one
//!   primary theme (core words plus genre-flavored compound words) and two
//!   lighter secondary themes, so a topic model ranks primaries above
//!   secondaries above the rest.
//! - **Leakage**: each document carries one compound word from each of two
//!   far themes. Which compound varies by document index, so a growing set
//!   of demonstration examples covers a growing set of a test topic's
//!   vocabulary. That makes topical-overlap classifiers improve with shot
//!   count instead of flatlining.
//!
//! All words are lowercase alphabetic; none of the six genre labels appear
//! as tokens anywhere.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Document, DocumentSet, Genre};
use crate::seeding::derived_rng;

/// Root seed of the shipped fixture corpus.
pub const FIXTURE_SEED: u64 = 20240901;

/// Number of latent themes in the fixture corpus.
pub const FIXTURE_TOPICS: usize = 25;

/// Documents per genre in the fixture corpus.
pub const DOCS_PER_GENRE: usize = 100;

/// Stylistic marker word per genre; appears once in every sentence of that
/// genre's documents and nowhere else.
pub const GENRE_MARKERS: [(Genre, &str); 6] = [
    (Genre::Arg, "however"),
    (Genre::Instr, "carefully"),
    (Genre::News, "yesterday"),
    (Genre::Pers, "honestly"),
    (Genre::Info, "typically"),
    (Genre::Review, "frankly"),
];

/// Suffix building the genre-flavored compound words of each theme.
const GENRE_SUFFIXES: [(Genre, &str); 6] = [
    (Genre::Arg, "debate"),
    (Genre::Instr, "primer"),
    (Genre::News, "dispatch"),
    (Genre::Pers, "memoir"),
    (Genre::Info, "digest"),
    (Genre::Review, "critique"),
];

/// Connective filler words; all of them are stopwords.
pub const FUNCTION_WORDS: [&str; 14] = [
    "and", "with", "from", "into", "over", "under", "about", "between", "through", "around",
    "before", "after", "during", "within",
];

/// Core vocabulary of each theme. Twelve words per theme, disjoint across
/// themes and disjoint from markers, function words, and genre labels.
pub const TOPIC_CORES: [[&str; 12]; FIXTURE_TOPICS] = [
    [
        "insurance", "mortgage", "ledger", "invoice", "payroll", "budget", "credit", "deposit",
        "pension", "taxation", "savings", "refund",
    ],
    [
        "melody", "concert", "rhythm", "chorus", "guitar", "orchestra", "ballad", "tempo",
        "vinyl", "festival", "drummer", "encore",
    ],
    [
        "valley", "plateau", "river", "coastline", "glacier", "peninsula", "terrain", "meadow",
        "canyon", "delta", "ridge", "lagoon",
    ],
    [
        "merchant", "wholesale", "retail", "supplier", "inventory", "shipment", "warehouse",
        "catalog", "discount", "bargain", "vendor", "storefront",
    ],
    [
        "lecture", "seminar", "tuition", "campus", "professor", "semester", "syllabus",
        "dormitory", "graduate", "scholarship", "faculty", "enrollment",
    ],
    [
        "turbine", "reactor", "voltage", "pipeline", "solar", "biofuel", "furnace", "megawatt",
        "insulation", "refinery", "generator", "gridline",
    ],
    [
        "website", "browser", "hyperlink", "server", "domain", "webpage", "upload", "bandwidth",
        "cookie", "download", "hosting", "webmail",
    ],
    [
        "hypothesis", "experiment", "dataset", "laboratory", "microscope", "sample",
        "measurement", "variable", "analysis", "finding", "replication", "apparatus",
    ],
    [
        "manuscript", "parchment", "archive", "scroll", "codex", "folio", "registry", "dossier",
        "annals", "chronicle", "facsimile", "repository",
    ],
    [
        "parliament", "minister", "legislation", "treaty", "diplomat", "senate", "embassy",
        "governance", "cabinet", "referendum", "municipality", "statute",
    ],
    [
        "hotel", "luggage", "itinerary", "passport", "voyage", "resort", "excursion", "souvenir",
        "airfare", "hostel", "cruise", "sightseeing",
    ],
    [
        "patient", "clinic", "surgeon", "diagnosis", "vaccine", "symptom", "therapy", "dosage",
        "hospital", "prescription", "ailment", "remedy",
    ],
    [
        "blueprint", "zoning", "permit", "surveyor", "masterplan", "corridor", "precinct",
        "easement", "drainage", "subdivision", "greenbelt", "roadmap",
    ],
    [
        "dilemma", "counsel", "suggestion", "habit", "routine", "mindset", "patience",
        "gratitude", "listening", "kindness", "apology", "forgiveness",
    ],
    [
        "compiler", "debugger", "kernel", "algorithm", "database", "firmware", "interface",
        "runtime", "codebase", "backend", "frontend", "middleware",
    ],
    [
        "stadium", "marathon", "tournament", "goalkeeper", "referee", "sprint", "javelin",
        "relay", "scoreboard", "halftime", "locker", "umpire",
    ],
    [
        "chapel", "sermon", "prayer", "scripture", "parish", "pilgrim", "monastery", "hymn",
        "blessing", "congregation", "altar", "liturgy",
    ],
    [
        "canvas", "sculpture", "exhibition", "portrait", "curator", "easel", "fresco", "mosaic",
        "palette", "gallery", "sketch", "engraving",
    ],
    [
        "verdict", "courtroom", "plaintiff", "defendant", "attorney", "subpoena", "testimony",
        "juror", "appeal", "litigation", "clause", "tribunal",
    ],
    [
        "habitat", "predator", "migration", "plumage", "burrow", "foliage", "pollinator",
        "wetland", "grassland", "antler", "talon", "hatchling",
    ],
    [
        "castle", "dynasty", "monument", "relic", "excavation", "medieval", "fortress",
        "lineage", "artifact", "tapestry", "crypt", "battlement",
    ],
    [
        "gearbox", "piston", "lathe", "hydraulic", "bearing", "flywheel", "conveyor", "welding",
        "torque", "chassis", "crankshaft", "spanner",
    ],
    [
        "committee", "quorum", "agenda", "motion", "delegate", "plenary", "caucus",
        "adjournment", "ballot", "amendment", "chairperson", "tabling",
    ],
    [
        "picnic", "hammock", "barbecue", "campfire", "boardgame", "puzzle", "knitting",
        "gardening", "stroll", "hobby", "pastime", "weekend",
    ],
    [
        "playground", "nursery", "lullaby", "crayon", "storybook", "sandbox", "recess",
        "classroom", "homework", "puppet", "naptime", "schoolyard",
    ],
];

/// Compound words per (theme, genre): first eight core words with the
/// genre's suffix glued on. The first [`LEAKABLE_COUNT`] of them double as
/// the leak channel.
pub const COMPOUNDS_PER_PAIR: usize = 8;

/// How many of a pair's compounds participate in cross-document leakage.
pub const LEAKABLE_COUNT: usize = 4;

pub fn genre_marker(genre: Genre) -> &'static str {
    GENRE_MARKERS.iter().find(|(g, _)| *g == genre).unwrap().1
}

fn genre_suffix(genre: Genre) -> &'static str {
    GENRE_SUFFIXES.iter().find(|(g, _)| *g == genre).unwrap().1
}

/// The genre-flavored compound word `i` of theme `topic`.
pub fn compound_word(topic: usize, genre: Genre, i: usize) -> String {
    format!("{}{}", TOPIC_CORES[topic][i], genre_suffix(genre))
}

/// Stopword list frozen alongside the corpus: common English function words
/// plus the fixture's connectives and genre markers. Markers are stopwords
/// so the topic model sees themes, not styles.
pub fn stopword_list() -> Vec<String> {
    let mut words: Vec<String> = [
        "the", "a", "an", "is", "are", "was", "were", "be", "been", "of", "to", "in", "on",
        "at", "by", "for", "as", "it", "its", "this", "that", "these", "those", "or", "not",
        "but", "if", "then", "than", "so", "such", "can", "will", "would", "should", "could",
        "has", "have", "had", "do", "does", "did", "you", "your", "they", "their", "them",
        "we", "our", "he", "she", "his", "her", "who", "what", "which", "when", "where",
        "why", "how", "all", "each", "more", "most", "some", "any", "no", "nor", "only",
        "own", "same", "too", "very", "just", "there", "here", "out", "off", "up", "down",
        "again", "once", "also", "because", "while", "until", "against", "both", "few",
        "other", "and", "with", "from", "into", "over", "under", "about", "between",
        "through", "around", "before", "after", "during", "within",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for (_, marker) in GENRE_MARKERS {
        words.push(marker.to_string());
    }
    words.sort();
    words.dedup();
    words
}

/// Theme assignment for document `j` of a genre: primary theme plus two
/// lighter secondaries, all distinct.
pub fn doc_topics(j: usize) -> (usize, usize, usize) {
    let t = FIXTURE_TOPICS;
    let p = j % t;
    let q = j / t;
    let s1 = (p + 1 + q) % t;
    let s2 = (p + 13 + 2 * q) % t;
    (p, s1, s2)
}

/// The two far themes document `j` leaks one compound word from.
pub fn leak_topics(j: usize) -> (usize, usize) {
    let t = FIXTURE_TOPICS;
    let (p, s1, s2) = doc_topics(j);
    let mut l1 = (p + 3 + 7 * (j / t)) % t;
    while l1 == p || l1 == s1 || l1 == s2 {
        l1 = (l1 + 1) % t;
    }
    let mut l2 = (p + 11 + 5 * (j / t)) % t;
    while l2 == p || l2 == s1 || l2 == s2 || l2 == l1 {
        l2 = (l2 + 1) % t;
    }
    (l1, l2)
}

fn pick<'a>(rng: &mut ChaCha8Rng, words: &[&'a str]) -> &'a str {
    words[rng.gen_range(0..words.len())]
}

fn content_word(rng: &mut ChaCha8Rng, topic: usize, genre: Genre) -> String {
    if rng.gen_bool(0.3) {
        compound_word(topic, genre, rng.gen_range(0..COMPOUNDS_PER_PAIR))
    } else {
        pick(rng, &TOPIC_CORES[topic]).to_string()
    }
}

fn make_sentence(rng: &mut ChaCha8Rng, genre: Genre, p: usize, s1: usize, s2: usize) -> String {
    let n_words = rng.gen_range(9..=12);
    let marker_at = rng.gen_range(0..n_words);
    let mut words: Vec<String> = Vec::with_capacity(n_words + 1);
    words.push("The".to_string());
    for i in 0..n_words {
        if i == marker_at {
            words.push(genre_marker(genre).to_string());
            continue;
        }
        let roll: f64 = rng.gen();
        let word = if roll < 0.55 {
            content_word(rng, p, genre)
        } else if roll < 0.70 {
            content_word(rng, s1, genre)
        } else if roll < 0.85 {
            content_word(rng, s2, genre)
        } else {
            pick(rng, &FUNCTION_WORDS).to_string()
        };
        words.push(word);
    }
    let mut sentence = words.join(" ");
    sentence.push('.');
    sentence
}

/// Builds fixture document `j` of `genre`, deterministically from `seed`.
pub fn make_document(genre: Genre, j: usize, seed: u64) -> Document {
    let genre_idx = Genre::ALL.iter().position(|g| *g == genre).unwrap();
    let id = format!("fx{genre_idx}-{j:03}");
    let mut rng = derived_rng(seed, &["fixture-doc", &id]);
    let (p, s1, s2) = doc_topics(j);
    let n_sentences = rng.gen_range(36..=41);
    let mut sentences: Vec<String> =
        (0..n_sentences).map(|_| make_sentence(&mut rng, genre, p, s1, s2)).collect();

    // One compound word from each far theme; the compound index rotates with
    // the document index so a set of documents covers a set of compounds.
    let (l1, l2) = leak_topics(j);
    for (slot, leak_topic) in [(0usize, l1), (1usize, l2)] {
        let word = compound_word(leak_topic, genre, (j + leak_topic) % LEAKABLE_COUNT);
        let sent_idx = rng.gen_range(0..n_sentences / 2) + slot * (n_sentences / 2);
        let sentence = &mut sentences[sent_idx];
        let mut words: Vec<&str> = sentence.split(' ').collect();
        let pos = 2 + (j + slot) % 4;
        let pos = pos.min(words.len() - 2);
        words[pos] = &word;
        *sentence = words.join(" ");
    }

    Document {
        id,
        text: sentences.join(" "),
        genre,
        source: "synthetic-fixture".to_string(),
    }
}

/// The full 600-document fixture corpus.
pub fn fixture_corpus(seed: u64) -> DocumentSet {
    let mut docs = Vec::with_capacity(6 * DOCS_PER_GENRE);
    for genre in Genre::ALL {
        for j in 0..DOCS_PER_GENRE {
            docs.push(make_document(genre, j, seed));
        }
    }
    DocumentSet::from_documents(docs).expect("fixture corpus is valid by construction")
}

/// A planted-topic corpus for sampler recovery checks: `k` topics with
/// disjoint `words_per_topic`-word vocabularies, each document drawn from a
/// single topic. Returns the documents and each topic's true word
/// distribution as `(word, probability)` pairs.
pub fn planted_corpus(
    k: usize,
    n_docs: usize,
    words_per_topic: usize,
    tokens_per_doc: usize,
    seed: u64,
) -> (DocumentSet, Vec<Vec<(String, f64)>>) {
    let vocab: Vec<Vec<String>> = (0..k)
        .map(|t| (0..words_per_topic).map(|v| planted_word(t, v)).collect())
        .collect();
    let mut docs = Vec::with_capacity(n_docs);
    for d in 0..n_docs {
        let topic = d % k;
        let mut rng = derived_rng(seed, &["planted-doc", &d.to_string()]);
        let tokens: Vec<&str> = (0..tokens_per_doc)
            .map(|_| vocab[topic][rng.gen_range(0..words_per_topic)].as_str())
            .collect();
        docs.push(Document {
            id: format!("pl-{d:04}"),
            text: tokens.join(" "),
            genre: Genre::ALL[d % 6],
            source: "planted".to_string(),
        });
    }
    let truth = vocab
        .iter()
        .map(|words| {
            words
                .iter()
                .map(|w| (w.clone(), 1.0 / words_per_topic as f64))
                .collect()
        })
        .collect();
    (
        DocumentSet::from_documents(docs).expect("planted corpus is valid"),
        truth,
    )
}

fn planted_word(topic: usize, v: usize) -> String {
    // Alphabetic-only synthetic words: topic letter doubled + base-26 index.
    let t = (b'a' + (topic % 26) as u8) as char;
    let hi = (b'a' + ((v / 26) % 26) as u8) as char;
    let lo = (b'a' + (v % 26) as u8) as char;
    format!("{t}{t}x{hi}{lo}")
}
