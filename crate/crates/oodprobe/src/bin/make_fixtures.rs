//! Regenerates the checked-in fixtures: the 600-document synthetic corpus,
//! the frozen stopword list, and the canonical prompt golden files.
//!
//! Run from the workspace root:
//!
//! ```bash
//! cargo run -p oodprobe --bin make-fixtures
//! ```

use std::fs;
use std::path::PathBuf;

use oodprobe::corpus::{extract_prefix, Document, Genre};
use oodprobe::fixture::{fixture_corpus, make_document, stopword_list, FIXTURE_SEED};
use oodprobe::gateway::ClassLabel;
use oodprobe::promptkit::{render_detection_prompt, render_genre_prompt, ControlLevel};
use oodprobe::splitter::{TaskKind, TestItem, Trial};

/// A small deterministic trial for the golden prompt files: two shots and
/// four balanced tests drawn from fixed fixture documents, truncated so the
/// goldens stay reviewable.
fn golden_trial(task: TaskKind) -> Trial {
    let window = 240;
    let cut = |doc: &Document| extract_prefix(doc, window);
    let class1_docs = [
        make_document(Genre::Arg, 0, FIXTURE_SEED),
        make_document(Genre::Arg, 25, FIXTURE_SEED),
    ];
    let class2_docs = [
        make_document(Genre::Pers, 0, FIXTURE_SEED),
        make_document(Genre::Pers, 25, FIXTURE_SEED),
    ];
    let test_docs = [
        (make_document(Genre::Arg, 50, FIXTURE_SEED), ClassLabel::Class1),
        (make_document(Genre::Pers, 50, FIXTURE_SEED), ClassLabel::Class2),
        (make_document(Genre::Pers, 75, FIXTURE_SEED), ClassLabel::Class2),
        (make_document(Genre::Arg, 75, FIXTURE_SEED), ClassLabel::Class1),
    ];
    Trial {
        topic_index: 0,
        task,
        class1_examples: class1_docs.iter().map(&cut).collect(),
        class2_examples: class2_docs.iter().map(&cut).collect(),
        test_items: test_docs
            .iter()
            .map(|(doc, gold)| TestItem {
                item_id: doc.id.clone(),
                excerpt: cut(doc),
                gold: *gold,
            })
            .collect(),
    }
}

fn main() {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..");
    let fixtures = root.join("fixtures");
    fs::create_dir_all(fixtures.join("prompts")).expect("create fixtures dir");

    // Corpus.
    let corpus = fixture_corpus(FIXTURE_SEED);
    corpus
        .export_jsonl(&fixtures.join("corpus.jsonl"))
        .expect("write corpus");
    println!("wrote corpus.jsonl ({} documents)", corpus.len());

    // Stopwords.
    let stopwords = stopword_list().join("\n") + "\n";
    fs::write(fixtures.join("stopwords.txt"), stopwords).expect("write stopwords");
    println!("wrote stopwords.txt");

    // Prompt goldens.
    let genre_trial = golden_trial(TaskKind::Genre);
    for control in ControlLevel::ALL {
        let bundle = render_genre_prompt(&genre_trial, control).expect("render genre");
        for (i, stage) in bundle.stages.iter().enumerate() {
            let name = format!("genre_{}_stage{}.txt", control.as_str(), i + 1);
            fs::write(fixtures.join("prompts").join(&name), stage.text()).expect("write golden");
            println!("wrote prompts/{name}");
        }
    }
    let detection_trial = golden_trial(TaskKind::Detection);
    for control in ControlLevel::ALL {
        let bundle = render_detection_prompt(&detection_trial, control).expect("render detection");
        let name = format!("detection_{}.txt", control.as_str());
        fs::write(
            fixtures.join("prompts").join(&name),
            bundle.stages[0].text(),
        )
        .expect("write golden");
        println!("wrote prompts/{name}");
    }
}
