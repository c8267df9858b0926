//! Temporary calibration probe (deleted before release).

use std::collections::BTreeMap;

use oodprobe::corpus::Genre;
use oodprobe::evalstats::{accuracy, table_grid, Condition, Experiment};
use oodprobe::fixture::{doc_topics, fixture_corpus, stopword_list, FIXTURE_SEED};
use oodprobe::gateway::{BackendSpec, Gateway};
use oodprobe::promptkit::ControlLevel;
use oodprobe::splitter::{rank_by_genre, Polarity, TaskKind};
use oodprobe::topics::{
    build_vocabulary, score_documents, train_topic_model, InferParams, TrainParams,
};

#[test]
#[ignore]
fn probe() {
    let t0 = std::time::Instant::now();
    let docs = fixture_corpus(FIXTURE_SEED);
    let stopwords = stopword_list().into_iter().collect();
    let vocab = build_vocabulary(&docs, 5, &stopwords).unwrap();
    println!("vocab: {} ({:?})", vocab.len(), t0.elapsed());

    let params = TrainParams::new(25, 7).with_iters(500);
    let model = train_topic_model(&docs, &vocab, &params).unwrap();
    println!("trained ({:?})", t0.elapsed());

    let infer = InferParams {
        n_iters: 200,
        burn_in: 100,
        seed: 7,
    };
    let mixtures = score_documents(&model, &docs, &infer);
    println!("scored ({:?})", t0.elapsed());

    // Pool coherence: model topic indices are an arbitrary relabeling of
    // the planted themes, so measure per cell whether the top of the
    // ranking agrees on ONE planted theme, and whether that mapping is a
    // permutation across model topics.
    let planted = |id: &str| -> (usize, usize, usize) {
        let j: usize = id[4..].parse().unwrap();
        doc_topics(j)
    };
    let mut theme_of_topic: Vec<std::collections::BTreeMap<usize, usize>> =
        vec![std::collections::BTreeMap::new(); 25];
    let mut coherent_cells = 0usize;
    let mut cells = 0usize;
    for topic in 0..25 {
        let rankings = rank_by_genre(&docs, &mixtures, topic).unwrap();
        for (_, ranked) in rankings.iter() {
            cells += 1;
            // Majority primary theme among the top 5.
            let mut votes: std::collections::BTreeMap<usize, usize> = Default::default();
            for d in &ranked[..5] {
                *votes.entry(planted(&d.id).0).or_insert(0) += 1;
            }
            let (&theme, &count) = votes.iter().max_by_key(|(_, &c)| c).unwrap();
            *theme_of_topic[topic].entry(theme).or_insert(0) += 1;
            // Coherent cell: >=4 of top-5 are primary-or-secondary of the
            // majority theme, and ranks 6-10 are secondary-or-primary too.
            let related = |id: &str| {
                let (p, s1, s2) = planted(id);
                p == theme || s1 == theme || s2 == theme
            };
            let top_ok = ranked[..5].iter().filter(|d| related(&d.id)).count() >= 5;
            let mid_ok = ranked[5..10].iter().filter(|d| related(&d.id)).count() >= 4;
            if top_ok && mid_ok && count >= 3 {
                coherent_cells += 1;
            }
        }
    }
    let mapping: Vec<usize> = theme_of_topic
        .iter()
        .map(|votes| *votes.iter().max_by_key(|(_, &c)| c).unwrap().0)
        .collect();
    let distinct: std::collections::BTreeSet<usize> = mapping.iter().copied().collect();
    println!(
        "coherent cells {coherent_cells}/{cells}; theme mapping covers {} distinct themes: {mapping:?}",
        distinct.len()
    );

    let dir = tempfile::tempdir().unwrap();
    let gateway = Gateway::new(dir.path());
    let mut backends = BTreeMap::new();
    for id in ["stub:style_oracle", "stub:topic_biased_oracle"] {
        backends.insert(id.to_string(), BackendSpec::stub(id));
    }

    // Style oracle, default pools.
    let exp20 = Experiment {
        docs: &docs,
        mixtures: &mixtures,
        gateway: &gateway,
        backends: backends.clone(),
        paraphraser: Some(BackendSpec::stub("stub:echo_paraphrase")),
        generator: Some(BackendSpec::stub("stub:reverser")),
        n_topics: 25,
        n_test: 10,
        n_example_pool: 20,
        n_test_pool: 20,
        seed: 11,
    };
    for task in [TaskKind::Genre, TaskKind::Detection] {
        for cond in table_grid(task, "stub:style_oracle") {
            let result = exp20.run_condition(&cond).unwrap();
            println!(
                "style {:9} {:28} n={} acc={:.1}",
                task.as_str(),
                cond.key(),
                result.n_total(),
                accuracy(&result).unwrap()
            );
        }
    }

    // Topic-biased oracle, tight pools.
    let exp5 = Experiment {
        n_example_pool: 5,
        n_test_pool: 5,
        ..exp20
    };
    for cond in table_grid(TaskKind::Genre, "stub:topic_biased_oracle") {
        let result = exp5.run_condition(&cond).unwrap();
        println!(
            "topic {} n={} acc={:.1}",
            cond.key(),
            result.n_total(),
            accuracy(&result).unwrap()
        );
    }

    // Sweep.
    let base = vec![
        Condition::new(
            TaskKind::Genre,
            Polarity::OffTopic,
            ControlLevel::Basic,
            "stub:topic_biased_oracle",
        ),
        Condition::new(
            TaskKind::Genre,
            Polarity::OffTopic,
            ControlLevel::Detailed,
            "stub:topic_biased_oracle",
        ),
    ];
    let rows = exp5.shot_sweep(&base, &[1, 2, 3, 4, 5]).unwrap();
    for row in rows {
        println!("sweep {} shots={} acc={:.1}", row.condition_key, row.n_shots, row.accuracy);
    }

    // Genre pair coverage sanity.
    let pairs: Vec<_> = (0..25)
        .map(|t| oodprobe::splitter::sample_genre_pair(t, &Genre::ALL, 11))
        .collect();
    let unique: std::collections::HashSet<_> = pairs
        .iter()
        .map(|p| {
            let (a, b) = if p.class1 <= p.class2 {
                (p.class1, p.class2)
            } else {
                (p.class2, p.class1)
            };
            (a, b)
        })
        .collect();
    println!("pairs: {} unique of 25 ({:?})", unique.len(), t0.elapsed());
}
